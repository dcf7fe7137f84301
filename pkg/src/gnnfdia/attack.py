"""Localized stealth false-data-injection attacks.

The attacker enters at bus ``p``, controls meters within ``r`` hops (minus
generator and zero-injection buses) and searches, by projected gradient
descent on the polar state, for a state whose measurements agree with the
honest ones everywhere outside its reach while moving the targeted states as
far as possible.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .estimation import estimate_state, measurement_variances
from .grid import AdmittanceMatrix, GridCase, build_ybus, k_hop_neighborhood
from .powerflow import (
    ConvergenceError,
    MeasurementLayout,
    MeasurementVector,
    StateVector,
    _full_jacobian_dense,
    _full_measurements,
    full_layout,
)
from .scenario import HonestDataset
from .seeding import derive_rng

__all__ = [
    "EmptyAreaError",
    "TargetArea",
    "AttackConfig",
    "AttackResult",
    "PRESETS",
    "RADII",
    "select_target_area",
    "attack_loss",
    "attack_gradient",
    "generate_stealth_attack",
    "generate_attacked_dataset",
]

# (min, max) attack radius in hops per case
RADII = {"ieee14": (2, 3), "ieee118": (3, 4), "ieee300": (6, 8)}
STEP_SCHEDULES = ("backtracking", "constant", "sqrt")
MAX_HALVINGS = 40
# (lambda_z, lambda_x)
PRESETS = {"cautious": (10.0, 1.0), "balanced": (1.0, 1.0), "aggressive": (1.0, 10.0)}


class EmptyAreaError(ValueError):
    """No attackable state variable remains after the exclusions."""


@dataclass(frozen=True)
class TargetArea:
    """Attacker's reach.

    ``t_x`` indexes the ``[vm..., va...]`` state row, ``t_z`` indexes the
    measurement layout.
    """

    p: int
    r: int
    buses: tuple[int, ...]
    t_x: np.ndarray
    t_z: np.ndarray

    def z_mask(self, m: int) -> np.ndarray:
        mask = np.zeros(m, dtype=bool)
        mask[self.t_z] = True
        return mask


def select_target_area(case: GridCase, p: int, r: int, layout: MeasurementLayout | None = None) -> TargetArea:
    """Buses within ``r`` hops of ``p`` except generator and zero-injection buses.

    Captured meters are the injections at those buses and the flow meters of
    branches with both terminals captured; a flow into any other bus would break
    that bus's power balance.
    """
    layout = full_layout(case) if layout is None else layout
    hood = k_hop_neighborhood(case, p, r)
    buses = tuple(sorted(i for i in hood
                         if not case.buses[i].is_generator and not case.buses[i].is_zero_injection))
    if not buses:
        raise EmptyAreaError(f"no attackable bus within {r} hops of bus {case.bus_ids[p]}")
    n = case.n_bus
    inside = np.zeros(n, dtype=bool)
    inside[list(buses)] = True
    f = np.array([br.from_bus for br in case.branches], dtype=int)
    t = np.array([br.to_bus for br in case.branches], dtype=int)
    both = inside[f] & inside[t] if len(f) else np.zeros(0, dtype=bool)
    t_z = []
    for k, (kind, el) in enumerate(zip(layout.kind, layout.element)):
        if kind in ("p_inj", "q_inj"):
            if inside[el]:
                t_z.append(k)
        elif both[el]:
            t_z.append(k)
    b = np.array(buses, dtype=int)
    return TargetArea(int(p), int(r), buses, np.r_[b, n + b], np.array(t_z, dtype=int))


@dataclass(frozen=True)
class AttackConfig:
    lambda_z: float = 1.0
    lambda_x: float = 1.0
    lr: float = 0.001
    epochs: int = 1000
    sigma_init: float = 0.005
    tau_freq: float = 1.0
    tau_loss: float = 0.1
    min_effect: float = 1e-6  # L_x at or below this is a failed attempt, nothing to splice
    radius: tuple[int, int] | None = None  # None -> per-case default
    vm_bounds: tuple[float, float] = (0.9, 1.1)
    va_bounds: tuple[float, float] = (-math.pi, math.pi)
    patience: int | None = 50
    min_improvement: float = 1e-9
    step_schedule: str = "backtracking"

    def __post_init__(self):
        for name in ("lambda_z", "lambda_x", "lr", "sigma_init", "tau_loss", "min_effect"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not self.vm_bounds[0] < self.vm_bounds[1] or not self.va_bounds[0] < self.va_bounds[1]:
            raise ValueError("box bounds must be increasing")
        if self.step_schedule not in STEP_SCHEDULES:
            raise ValueError(f"unknown step schedule {self.step_schedule!r}")

    @classmethod
    def preset(cls, name: str, **overrides) -> "AttackConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        lz, lx = PRESETS[name]
        return replace(cls(lambda_z=lz, lambda_x=lx), **overrides)

    def radii(self, case_name: str) -> tuple[int, int]:
        if self.radius is not None:
            return tuple(self.radius)
        return RADII.get(case_name, (2, 3))


@dataclass
class AttackResult:
    z_a: np.ndarray
    x_check: StateVector
    loss: float
    loss_z: float
    loss_x: float
    accepted: bool
    area: TargetArea
    epochs: int = 0
    history: list[float] = field(default_factory=list, repr=False)


def _row(x) -> np.ndarray:
    return x.as_row() if isinstance(x, StateVector) else np.asarray(x, dtype=float)


def attack_loss(z_a, z_o, x_check, x_hat, area: TargetArea, lambda_z: float = 1.0,
                lambda_x: float = 1.0) -> tuple[float, float, float]:
    """``(L, L_z, L_x)`` with ``L = lambda_z L_z - lambda_x L_x``.

    ``L_z`` is the Euclidean norm of the measurement change on meters the
    attacker does not control; ``L_x`` the summed absolute change of the
    targeted state variables.
    """
    z_a = np.asarray(z_a, dtype=float)
    keep = ~area.z_mask(len(z_a))
    loss_z = float(np.linalg.norm(z_a[keep] - np.asarray(z_o, dtype=float)[keep]))
    dx = _row(x_check)[area.t_x] - _row(x_hat)[area.t_x]
    loss_x = float(np.sum(np.abs(dx)))
    return lambda_z * loss_z - lambda_x * loss_x, loss_z, loss_x


def _row_jacobian(y: AdmittanceMatrix, v: np.ndarray, layout: MeasurementLayout) -> np.ndarray:
    full = _full_jacobian_dense(y, v)[layout.index]
    n = y.n
    # reorder columns from [va, vm] to the state-row order [vm, va]
    return np.concatenate([full[:, n:], full[:, :n]], axis=1)


def attack_gradient(y: AdmittanceMatrix, x_check: StateVector, z_o, area: TargetArea,
                    layout: MeasurementLayout, lambda_z: float = 1.0, lambda_x: float = 1.0,
                    x_hat: StateVector | None = None) -> np.ndarray:
    """Gradient of :func:`attack_loss` over the ``[vm, va]`` row, zero outside ``t_x``.

    ``z_o`` is the reference the non-controlled meters must keep matching. At a
    kink of ``|.|`` (zero change) the subgradient 0 is used, likewise for the
    norm at zero residual.
    """
    v = x_check.voltage
    z = _full_measurements(y, v)[layout.index]
    keep = ~area.z_mask(len(layout))
    res = z[keep] - np.asarray(z_o, dtype=float)[keep]
    norm = np.linalg.norm(res)
    grad = np.zeros(2 * y.n)
    if norm > 0 and lambda_z != 0:
        jac = _row_jacobian(y, v, layout)[np.ix_(keep, area.t_x)]
        grad[area.t_x] += lambda_z * (jac.T @ (res / norm))
    if x_hat is not None and lambda_x != 0:
        dx = x_check.as_row()[area.t_x] - x_hat.as_row()[area.t_x]
        grad[area.t_x] -= lambda_x * np.sign(dx)
    return grad


def _splice(z_o: np.ndarray, h_check: np.ndarray, area: TargetArea) -> np.ndarray:
    z_a = np.array(z_o, dtype=float, copy=True)
    z_a[area.t_z] = h_check[area.t_z]
    return z_a


def generate_stealth_attack(case: GridCase, y: AdmittanceMatrix, z_o, x_hat: StateVector, area: TargetArea,
                            config: AttackConfig, rng: np.random.Generator,
                            layout: MeasurementLayout | None = None) -> AttackResult:
    """Projected gradient descent on the targeted voltages.

    Starts from ``x_hat`` plus ``N(0, sigma_init^2)`` on the targeted entries and
    runs at most ``config.epochs`` gradient steps, each followed by projection
    onto the magnitude/angle box. With the default ``"backtracking"`` schedule
    the trial step ``lr`` is halved until the loss decreases (the loss is then
    monotone and the run ends when no decrease is found); ``"constant"`` keeps
    ``lr`` fixed and ``"sqrt"`` uses ``lr / sqrt(epoch)``. Runs also stop after
    ``patience`` epochs without an improvement above ``min_improvement``. The
    best iterate is returned; the captured meters of ``z_o`` are overwritten
    with ``h(x_check)``.

    The attack is accepted when the loss is below ``tau_loss`` and the targeted
    state moved by more than ``min_effect`` in total. Areas without an interior
    bus usually relax back onto ``x_hat`` exactly, and those runs count as failures.
    """
    if config.step_schedule not in STEP_SCHEDULES:
        raise ValueError(f"unknown step schedule {config.step_schedule!r}")
    layout = full_layout(case) if layout is None else layout
    n = case.n_bus
    z_o = np.asarray(z_o, dtype=float)
    h_hat = _full_measurements(y, x_hat.voltage)[layout.index]
    lo = np.r_[np.full(n, config.vm_bounds[0]), np.full(n, config.va_bounds[0])]
    hi = np.r_[np.full(n, config.vm_bounds[1]), np.full(n, config.va_bounds[1])]
    tx = area.t_x
    keep = ~area.z_mask(len(layout))
    row_hat = x_hat.as_row()

    def evaluate(row):
        v = StateVector.from_row(row, case.slack).voltage
        res = _full_measurements(y, v)[layout.index][keep] - h_hat[keep]
        loss_z = float(np.linalg.norm(res))
        dx = row[tx] - row_hat[tx]
        loss_x = float(np.abs(dx).sum())
        return config.lambda_z * loss_z - config.lambda_x * loss_x, loss_z, loss_x, res, v, dx

    row = row_hat.copy()
    row[tx] += rng.normal(0.0, config.sigma_init, size=len(tx))
    row[tx] = np.clip(row[tx], lo[tx], hi[tx])
    loss, loss_z, loss_x, res, v, dx = evaluate(row)
    best = (loss, row.copy(), loss_z, loss_x)
    history = [loss]
    stall = 0
    epoch = 0
    for epoch in range(1, config.epochs + 1):
        grad = -config.lambda_x * np.sign(dx)
        if loss_z > 0 and config.lambda_z != 0:
            jac = _row_jacobian(y, v, layout)[np.ix_(keep, tx)]
            grad = grad + config.lambda_z * (jac.T @ (res / loss_z))
        if config.step_schedule == "backtracking":
            step = config.lr
            for _ in range(MAX_HALVINGS + 1):
                cand = row.copy()
                cand[tx] = np.clip(row[tx] - step * grad, lo[tx], hi[tx])
                out = evaluate(cand)
                if out[0] < loss:
                    break
                step *= 0.5
            else:
                break  # no descent direction left at any step size
        else:
            step = config.lr / math.sqrt(epoch) if config.step_schedule == "sqrt" else config.lr
            cand = row.copy()
            cand[tx] = np.clip(row[tx] - step * grad, lo[tx], hi[tx])
            out = evaluate(cand)
        row = cand
        loss, loss_z, loss_x, res, v, dx = out
        history.append(loss)
        if loss < best[0] - config.min_improvement:
            best = (loss, row.copy(), loss_z, loss_x)
            stall = 0
        else:
            if loss < best[0]:
                best = (loss, row.copy(), loss_z, loss_x)
            stall += 1
            if config.patience is not None and stall >= config.patience:
                break

    loss, row, loss_z, loss_x = best
    x_check = StateVector.from_row(row, case.slack)
    h_check = _full_measurements(y, x_check.voltage)[layout.index]
    z_a = _splice(z_o, h_check, area)
    accepted = loss < config.tau_loss and loss_x > config.min_effect
    return AttackResult(z_a, x_check, loss, loss_z, loss_x, bool(accepted), area, epoch, history)


def _record(t, case, area, res: AttackResult, x_hat: StateVector, z_o, m) -> dict:
    dvm = np.abs(res.x_check.vm - x_hat.vm)
    dva = np.abs(res.x_check.va - x_hat.va)
    dz = np.abs(res.z_a - z_o)
    return {
        "t": int(t),
        "p": int(case.bus_ids[area.p]),
        "r": int(area.r),
        "buses": [int(case.bus_ids[b]) for b in area.buses],
        "captured_meter_fraction": len(area.t_z) / m,
        "loss": res.loss,
        "L_z": res.loss_z,
        "L_x": res.loss_x,
        "epochs": res.epochs,
        "accepted": res.accepted,
        "max_dvm_pu": float(dvm.max()),
        "max_dva_rad": float(dva.max()),
        "max_dva_deg": float(np.degrees(dva.max())),
        "max_dz_pu": float(dz.max()),
        "max_dz_mw": float(dz.max() * case.base_mva),
    }


def generate_attacked_dataset(honest: HonestDataset, config: AttackConfig = AttackConfig(), seed: int = 0,
                              case: GridCase | None = None, progress=None) -> HonestDataset:
    """Attack a copy of an honest dataset.

    At each timestep the attacker breaks in when ``f ~ N(0, 1)`` exceeds
    ``tau_freq``, then draws an entry bus uniformly and an integer radius in
    ``[r_min, r_max]``. Accepted attacks are spliced into ``Z``, the operator's
    estimate is recomputed (warm-started from the honest one) and ``Y[t] = 1``.
    """
    case = honest.case if case is None else case
    y = build_ybus(case)
    layout = full_layout(case)
    sigma_n = honest.meta.get("scenario", {}).get("sigma_n", 0.01)
    floor = honest.meta.get("scenario", {}).get("variance_floor", 1e-8)
    rmin, rmax = config.radii(case.name)
    Z = honest.Z.copy()
    X = honest.X.copy()
    Y = np.zeros(honest.T, dtype=int)
    accepted, attempts = [], []
    for t in range(honest.T):
        rng = derive_rng(seed, "attack", t)
        f = rng.standard_normal()
        if not f > config.tau_freq:
            continue
        p = int(rng.integers(case.n_bus))
        r = int(rng.integers(rmin, rmax + 1))
        x_hat = StateVector.from_row(honest.X[t], case.slack)
        try:
            area = select_target_area(case, p, r, layout)
        except EmptyAreaError:
            attempts.append({"t": t, "p": int(case.bus_ids[p]), "r": r, "accepted": False, "empty_area": True})
            continue
        res = generate_stealth_attack(case, y, honest.Z[t], x_hat, area, config, rng, layout)
        rec = _record(t, case, area, res, x_hat, honest.Z[t], len(layout))
        attempts.append({k: rec[k] for k in ("t", "p", "r", "loss", "L_x", "accepted")})
        if res.accepted:
            zv = MeasurementVector(layout, res.z_a, measurement_variances(res.z_a, sigma_n, floor))
            try:
                est = estimate_state(case, y, zv, x0=x_hat)
            except ConvergenceError:
                attempts[-1]["accepted"] = False
                attempts[-1]["estimation_failed"] = True
                continue
            Z[t] = res.z_a
            X[t] = est.x_hat.as_row()
            Y[t] = 1
            accepted.append(rec)
        if progress is not None:
            progress(t)
    meta = dict(honest.meta)
    meta["attack"] = {**asdict(config), "seed": int(seed), "radius": [rmin, rmax]}
    summary = {
        "attempted": len(attempts),
        "accepted": len(accepted),
        "acceptance_rate": len(accepted) / len(attempts) if attempts else 0.0,
        "positive_fraction": float(Y.mean()) if len(Y) else 0.0,
    }
    attacks = {"summary": summary, "attacks": accepted, "attempts": attempts}
    return HonestDataset(Z, X, meta, case, Y, attacks)
