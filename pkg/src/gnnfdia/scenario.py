"""Honest measurement time series: load-profile driven scaling, AC power flow,
meter noise and state estimation for every timestep."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .estimation import EstimationResult, estimate_state, measurement_variances
from .grid import AdmittanceMatrix, GridCase, build_ybus, load_case
from .powerflow import (
    ConvergenceError,
    MeasurementLayout,
    MeasurementVector,
    StateVector,
    full_layout,
    measurement_function,
    solve_power_flow,
)
from .seeding import derive_rng

__all__ = [
    "ProfileError",
    "LoadProfile",
    "ScenarioConfig",
    "Timestep",
    "HonestDataset",
    "ingest_profile",
    "synthetic_profile",
    "normalize_scaler",
    "scaled_injections",
    "generate_timestep",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "write_matrix",
    "read_matrix",
]

CSV_FMT = "%.17g"


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class LoadProfile:
    samples: np.ndarray
    resolution_minutes: float = 15.0
    label: str = "profile"

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ProfileError("a load profile needs at least two samples")
        if not np.all(np.isfinite(self.samples)):
            raise ProfileError("load profile contains non-finite values")


def ingest_profile(source, label: str | None = None, resolution_minutes: float = 15.0) -> LoadProfile:
    """Read a single-column numeric CSV (path, file object or raw text).

    A non-numeric first row is treated as a header.
    """
    if hasattr(source, "read"):
        text, name = source.read(), label or "profile"
    else:
        path = Path(source)
        if path.exists():
            text, name = path.read_text(), label or path.stem
        elif "\n" in str(source) or "," in str(source):
            text, name = str(source), label or "profile"
        else:
            raise ProfileError(f"profile file not found: {source}")
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ProfileError("empty load profile")
    values = []
    for i, row in enumerate(rows):
        cell = row[0].strip()
        try:
            values.append(float(cell))
        except ValueError:
            if i == 0:
                continue
            raise ProfileError(f"non-numeric value {cell!r} on line {i + 1}") from None
    if not values:
        raise ProfileError("load profile has no numeric samples")
    return LoadProfile(np.asarray(values, dtype=float), resolution_minutes, name)


def synthetic_profile(length: int = 9600, seed: int = 0) -> LoadProfile:
    """Sinusoid-plus-noise stand-in for a 15-minute regional load profile.

    Daily and weekly cycles plus AR(1) noise, in MW-like units.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    day = 96.0
    base = 10_000 + 1_800 * np.sin(2 * np.pi * (t / day - 0.3)) + 600 * np.sin(4 * np.pi * t / day)
    weekly = 700 * np.sin(2 * np.pi * t / (7 * day))
    seasonal = 900 * np.sin(2 * np.pi * t / length)
    noise = np.zeros(length)
    eps = rng.normal(0, 120, length)
    for i in range(1, length):
        noise[i] = 0.9 * noise[i - 1] + eps[i]
    return LoadProfile(base + weekly + seasonal + noise, 15.0, "synthetic")


def normalize_scaler(profile: LoadProfile, T: int) -> np.ndarray:
    """First ``T`` points (tiling the profile if it is shorter), standardized to
    zero mean and unit (population) standard deviation."""
    if T < 1:
        raise ProfileError("T must be positive")
    x = profile.samples
    if len(x) < T:
        x = np.tile(x, int(np.ceil(T / len(x))))
    x = x[:T]
    sd = x.std()
    if not sd > 0:
        raise ProfileError("cannot normalize a constant load profile")
    return (x - x.mean()) / sd


@dataclass(frozen=True)
class ScenarioConfig:
    k: float = 0.1
    sigma_s: float = 0.03
    sigma_n: float = 0.01
    scale_min: float = 0.7
    scale_max: float = 1.3
    variance_floor: float = 1e-4**2
    max_retries: int = 5

    def __post_init__(self):
        if min(self.k, self.sigma_s, self.sigma_n) < 0:
            raise ValueError("k, sigma_s and sigma_n must be nonnegative")
        if not 0 < self.scale_min < self.scale_max:
            raise ValueError("need 0 < scale_min < scale_max")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")


@dataclass(frozen=True)
class Timestep:
    z: MeasurementVector
    estimate: EstimationResult
    x_true: StateVector
    scales: np.ndarray  # per-bus realized scale (1.0 on unscaled buses)


def scaled_buses(case: GridCase) -> np.ndarray:
    """Buses whose load or dispatch follows the scaler (load buses and pv units)."""
    return np.array([i for i, b in enumerate(case.buses)
                     if b.p_load != 0 or b.q_load != 0 or b.kind == "pv"
                     or (b.kind == "pq" and (b.p_gen != 0 or b.q_gen != 0))], dtype=int)


def scaled_injections(case: GridCase, scales: np.ndarray) -> np.ndarray:
    """Net complex injections (p.u.) after scaling loads and generator output.

    Reactive load moves with active load (constant power factor); the slack
    unit is left to the power flow.
    """
    s = np.zeros(case.n_bus, dtype=complex)
    for i, b in enumerate(case.buses):
        a = scales[i]
        load = a * (b.p_load + 1j * b.q_load)
        if b.kind == "pv":
            gen = a * b.p_gen + 1j * b.q_gen
        elif b.kind == "pq":
            gen = a * (b.p_gen + 1j * b.q_gen)
        else:
            gen = b.p_gen + 1j * b.q_gen
        s[i] = gen - load
    return s / case.base_mva


def generate_timestep(case: GridCase, y: AdmittanceMatrix, s_t: float, rng: np.random.Generator,
                      config: ScenarioConfig = ScenarioConfig(), layout: MeasurementLayout | None = None) -> Timestep:
    """One honest snapshot: scale, solve the power flow, add meter noise, estimate."""
    layout = full_layout(case) if layout is None else layout
    which = scaled_buses(case)
    for attempt in range(config.max_retries + 1):
        scales = np.ones(case.n_bus)
        draws = rng.normal(1.0 + config.k * s_t, config.sigma_s, size=len(which))
        scales[which] = np.clip(draws, config.scale_min, config.scale_max)
        try:
            x_true = solve_power_flow(case, y, sbus=scaled_injections(case, scales))
            break
        except ConvergenceError:
            if attempt == config.max_retries:
                raise
    z_true = measurement_function(y, x_true, layout)
    # noise variance uses the true reading, the operator's R the measured one
    z = z_true + rng.standard_normal(len(z_true)) * np.sqrt(
        measurement_variances(z_true, config.sigma_n, config.variance_floor))
    zv = MeasurementVector(layout, z, measurement_variances(z, config.sigma_n, config.variance_floor))
    est = estimate_state(case, y, zv)
    return Timestep(zv, est, x_true, scales)


@dataclass
class HonestDataset:
    Z: np.ndarray
    X: np.ndarray
    meta: dict
    case: GridCase
    Y: np.ndarray | None = None
    attacks: dict | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return len(self.Z)


def generate_dataset(case: GridCase, profile: LoadProfile, T: int, config: ScenarioConfig = ScenarioConfig(),
                     seed: int = 0, progress=None) -> HonestDataset:
    """Run :func:`generate_timestep` for ``t = 0..T-1``.

    Timestep ``t`` draws from its own stream derived from ``(seed, t)`` so any
    single row can be regenerated in isolation.
    """
    y = build_ybus(case)
    layout = full_layout(case)
    s = normalize_scaler(profile, T)
    Z = np.empty((T, len(layout)))
    X = np.empty((T, 2 * case.n_bus))
    for t in range(T):
        step = generate_timestep(case, y, float(s[t]), derive_rng(seed, "scenario", t), config, layout)
        Z[t] = step.z.values
        X[t] = step.estimate.x_hat.as_row()
        if progress is not None:
            progress(t)
    meta = {
        "generator": f"gnnfdia {__version__}",
        "seed": int(seed),
        "case": case.name,
        "T": int(T),
        "profile": profile.label,
        "scenario": asdict(config),
        "layout": layout.describe(),
        "columns": layout.names(case),
        "state_columns": [f"vm:{i}" for i in case.bus_ids] + [f"va:{i}" for i in case.bus_ids],
    }
    return HonestDataset(Z, X, meta, case)


def write_matrix(path: Path, mat: np.ndarray, header: list[str], fmt: str = CSV_FMT) -> None:
    np.savetxt(path, mat, fmt=fmt, delimiter=",", header=",".join(header), comments="")


def read_matrix(path: Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, dtype=float))


def save_dataset(ds: HonestDataset, directory) -> Path:
    """Write ``meta.json``, ``case.json``, ``Z.csv``, ``X.csv`` (and ``Y.csv`` /
    ``attacks.json`` when labels are present)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "meta.json").write_text(json.dumps(ds.meta, indent=1, sort_keys=True) + "\n")
    (out / "case.json").write_text(json.dumps(ds.case.to_dict(), indent=1) + "\n")
    write_matrix(out / "Z.csv", ds.Z, ds.meta["columns"])
    write_matrix(out / "X.csv", ds.X, ds.meta["state_columns"])
    if ds.Y is not None:
        write_matrix(out / "Y.csv", ds.Y.reshape(-1, 1), ["y"], fmt="%d")
    if ds.attacks is not None:
        (out / "attacks.json").write_text(json.dumps(ds.attacks, indent=1, sort_keys=True) + "\n")
    return out


def load_dataset(directory) -> HonestDataset:
    path = Path(directory)
    if not (path / "meta.json").exists():
        raise FileNotFoundError(f"no dataset found at {path} (missing meta.json)")
    meta = json.loads((path / "meta.json").read_text())
    case = load_case(json.loads((path / "case.json").read_text()))
    Z = read_matrix(path / "Z.csv")
    X = read_matrix(path / "X.csv")
    Y = None
    if (path / "Y.csv").exists():
        Y = read_matrix(path / "Y.csv").ravel().astype(int)
    attacks = None
    if (path / "attacks.json").exists():
        attacks = json.loads((path / "attacks.json").read_text())
    return HonestDataset(Z, X, meta, case, Y, attacks)
