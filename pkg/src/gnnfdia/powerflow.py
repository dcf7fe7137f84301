"""Polar AC measurement model h(x), its Jacobian, and Newton-Raphson power flow.

All quantities are per unit on the case base. The full measurement vector is
laid out as ``[P_inj (n), Q_inj (n), P_from (nb), P_to (nb), Q_from (nb),
Q_to (nb)]``; a :class:`MeasurementLayout` selects and orders a subset of it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import AdmittanceMatrix, GridCase

__all__ = [
    "ConvergenceError",
    "StateVector",
    "MeasurementLayout",
    "MeasurementVector",
    "full_layout",
    "measurement_function",
    "jacobian",
    "jacobian_dense",
    "flat_start",
    "solve_power_flow",
    "newton_power_flow",
]

KINDS = ("p_inj", "q_inj", "p_flow", "q_flow")


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge."""


@dataclass(frozen=True)
class StateVector:
    vm: np.ndarray
    va: np.ndarray
    slack: int

    def __post_init__(self):
        if np.any(self.vm <= 0):
            raise ValueError("voltage magnitudes must be positive")

    @property
    def n(self) -> int:
        return len(self.vm)

    @property
    def voltage(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)

    def as_row(self) -> np.ndarray:
        """``[vm..., va...]``, the on-disk row format."""
        return np.r_[self.vm, self.va]

    @classmethod
    def from_row(cls, row, slack: int) -> "StateVector":
        row = np.asarray(row, dtype=float)
        n = len(row) // 2
        return cls(row[:n].copy(), row[n:].copy(), slack)

    def free(self) -> np.ndarray:
        """Estimation variables: angles without the slack, then all magnitudes."""
        return np.r_[np.delete(self.va, self.slack), self.vm]

    @classmethod
    def from_free(cls, vec, slack: int) -> "StateVector":
        vec = np.asarray(vec, dtype=float)
        n = (len(vec) + 1) // 2
        va = np.insert(vec[: n - 1], slack, 0.0)
        return cls(vec[n - 1:].copy(), va, slack)


@dataclass(frozen=True)
class MeasurementLayout:
    """Ordered set of meters.

    ``index[k]`` points into the full measurement vector; ``kind``/``element``/
    ``end`` describe entry ``k`` (``element`` is a bus index for injections and
    a branch index for flows; ``end`` is ``"from"``, ``"to"`` or ``""``).
    """

    index: np.ndarray
    kind: tuple[str, ...]
    element: np.ndarray
    end: tuple[str, ...]
    n_bus: int
    n_branch: int

    def __len__(self) -> int:
        return len(self.index)

    def names(self, case: GridCase) -> list[str]:
        out = []
        for kind, el, end in zip(self.kind, self.element, self.end):
            if end:
                br = case.branches[el]
                out.append(f"{kind}:{el}:{case.bus_ids[br.from_bus]}-{case.bus_ids[br.to_bus]}:{end}")
            else:
                out.append(f"{kind}:{case.bus_ids[el]}")
        return out

    def subset(self, positions) -> "MeasurementLayout":
        pos = np.asarray(positions, dtype=int)
        return MeasurementLayout(
            self.index[pos],
            tuple(self.kind[i] for i in pos),
            self.element[pos],
            tuple(self.end[i] for i in pos),
            self.n_bus,
            self.n_branch,
        )

    def positions(self, kind: str) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.kind) if k == kind], dtype=int)

    def describe(self) -> dict:
        return {
            "order": "p_inj by bus, q_inj by bus, p_flow by branch (from then to), q_flow by branch (from then to)",
            "m": len(self),
            "n_bus": self.n_bus,
            "n_branch": self.n_branch,
            "index": self.index.tolist(),
        }


def full_layout(case: GridCase) -> MeasurementLayout:
    """Every injection plus flows at both ends of every branch."""
    n, nb = case.n_bus, case.n_branch
    kind = ("p_inj",) * n + ("q_inj",) * n + ("p_flow",) * (2 * nb) + ("q_flow",) * (2 * nb)
    element = np.r_[np.arange(n), np.arange(n), np.tile(np.arange(nb), 4)].astype(int)
    end = ("",) * (2 * n) + (("from",) * nb + ("to",) * nb) * 2
    return MeasurementLayout(np.arange(2 * n + 4 * nb), kind, element, end, n, nb)


@dataclass(frozen=True)
class MeasurementVector:
    layout: MeasurementLayout
    values: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        if not (len(self.values) == len(self.variances) == len(self.layout)):
            raise ValueError("values, variances and layout must have equal length")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")


def _full_measurements(y: AdmittanceMatrix, v: np.ndarray) -> np.ndarray:
    sbus = v * np.conj(y.ybus @ v)
    sf = v[y.f] * np.conj(y.yf @ v)
    st = v[y.t] * np.conj(y.yt @ v)
    return np.r_[sbus.real, sbus.imag, sf.real, st.real, sf.imag, st.imag]


def measurement_function(y: AdmittanceMatrix, x: StateVector, layout: MeasurementLayout) -> np.ndarray:
    """Evaluate h(x) for the meters in ``layout``."""
    return _full_measurements(y, x.voltage)[layout.index]


def _coo(mat):
    m = mat.tocoo()
    return m.row.astype(np.int64), m.col.astype(np.int64), m.data


def _jacobian_structure(y: AdmittanceMatrix):
    cached = getattr(y, "_jac_cache", None)
    if cached is None:
        cached = (_coo(y.ybus), _coo(y.yf), _coo(y.yt))
        object.__setattr__(y, "_jac_cache", cached)
    return cached


def _full_jacobian_dense(y: AdmittanceMatrix, v: np.ndarray) -> np.ndarray:
    """d(full measurements)/d[va (all), vm (all)] as a dense array.

    Built entry-wise from the Ybus/Yf/Yt sparsity patterns:
    ``dS_i/dva_j = -j V_i conj(Y_ij V_j) + [i=j] j V_i conj(I_i)`` and
    ``dS_i/dvm_j = V_i conj(Y_ij Vn_j) + [i=j] conj(I_i) Vn_i`` with ``Vn = V/|V|``;
    branch ends use the same form with the terminal bus in place of ``i``.
    """
    n, nb = y.n, len(y.f)
    (yr, yc, yd), (fr, fc, fd), (tr, tc, td) = _jacobian_structure(y)
    vn = v / np.abs(v)
    ncol = 2 * n
    rows, cols, vals_va, vals_vm = [], [], [], []

    def add(bus_of_row, cur, r, c, d, p_off, q_off):
        vb = v[bus_of_row]
        d_va = -1j * vb[r] * np.conj(d * v[c])
        d_vm = vb[r] * np.conj(d * vn[c])
        k = np.arange(len(bus_of_row))
        dg = bus_of_row
        d_va = np.r_[d_va, 1j * np.conj(cur) * vb]
        d_vm = np.r_[d_vm, np.conj(cur) * vn[dg]]
        rr = np.r_[r, k]
        cc = np.r_[c, dg]
        for off, part in ((p_off, np.real), (q_off, np.imag)):
            rows.append(rr + off)
            cols.append(cc)
            vals_va.append(part(d_va))
            rows.append(rr + off)
            cols.append(cc + n)
            vals_vm.append(part(d_vm))

    add(np.arange(n), y.ybus @ v, yr, yc, yd, 0, n)
    add(y.f, y.yf @ v, fr, fc, fd, 2 * n, 2 * n + 2 * nb)
    add(y.t, y.yt @ v, tr, tc, td, 2 * n + nb, 2 * n + 3 * nb)
    rr = np.concatenate(rows)
    cc = np.concatenate(cols)
    vals = np.concatenate([x for pair in zip(vals_va, vals_vm) for x in pair])
    m_full = 2 * n + 4 * nb
    flat = np.bincount(rr * ncol + cc, weights=vals, minlength=m_full * ncol)
    return flat.reshape(m_full, ncol)


def jacobian_dense(y: AdmittanceMatrix, x: StateVector, layout: MeasurementLayout) -> np.ndarray:
    full = _full_jacobian_dense(y, x.voltage)
    keep = np.delete(np.arange(2 * x.n), x.slack)
    return full[np.ix_(layout.index, keep)]


def jacobian(y: AdmittanceMatrix, x: StateVector, layout: MeasurementLayout) -> sp.csr_matrix:
    """Analytic m x (2n-1) Jacobian; columns are angles (slack removed) then magnitudes."""
    return sp.csr_matrix(jacobian_dense(y, x, layout))


def flat_start(case: GridCase) -> StateVector:
    vm = np.array([b.v_set if b.kind != "pq" else 1.0 for b in case.buses], dtype=float)
    return StateVector(vm, np.zeros(case.n_bus), case.slack)


def newton_power_flow(case: GridCase, y: AdmittanceMatrix, sbus=None, tol: float = 1e-8,
                      max_iter: int = 20) -> tuple[StateVector, int]:
    """Newton-Raphson power flow from a flat start.

    ``sbus`` overrides the case's specified net injections (p.u.). Returns the
    solved state and the number of Newton iterations taken.
    """
    kinds = case.kinds()
    pv = np.flatnonzero(kinds == "pv")
    pq = np.flatnonzero(kinds == "pq")
    pvpq = np.r_[pv, pq]
    npvpq = len(pvpq)
    sbus = case.net_injection() if sbus is None else np.asarray(sbus, dtype=complex)
    x0 = flat_start(case)
    vm, va = x0.vm.copy(), x0.va.copy()
    ybus = y.ybus
    n = case.n_bus

    def mismatch(v):
        mis = v * np.conj(ybus @ v) - sbus
        return np.r_[mis[pvpq].real, mis[pq].imag]

    v = vm * np.exp(1j * va)
    f = mismatch(v)
    it = 0
    while np.max(np.abs(f), initial=0.0) > tol:
        if it >= max_iter:
            raise ConvergenceError(f"power flow did not converge in {max_iter} iterations "
                                   f"(max mismatch {np.max(np.abs(f)):.3e} p.u.)")
        it += 1
        full = _full_jacobian_dense(y, v)
        jac = full[np.ix_(np.r_[pvpq, n + pq], np.r_[pvpq, n + pq])]
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular power-flow Jacobian") from exc
        if not np.all(np.isfinite(dx)):
            raise ConvergenceError("singular power-flow Jacobian")
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:]
        if np.any(vm <= 0) or not np.all(np.isfinite(vm)):
            raise ConvergenceError("power flow diverged (nonpositive voltage magnitude)")
        v = vm * np.exp(1j * va)
        f = mismatch(v)
    return StateVector(vm, va, case.slack), it


def solve_power_flow(case: GridCase, y: AdmittanceMatrix, sbus=None, tol: float = 1e-8,
                     max_iter: int = 20) -> StateVector:
    return newton_power_flow(case, y, sbus, tol, max_iter)[0]
