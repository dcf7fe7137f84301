"""Grid cases, bus admittance matrix and the graph built on top of it."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CaseError",
    "Bus",
    "Branch",
    "GridCase",
    "GraphLaplacian",
    "AdmittanceMatrix",
    "load_case",
    "bundled_case",
    "build_ybus",
    "branch_admittances",
    "adjacency_from_ybus",
    "normalized_laplacian",
    "largest_eigenvalue",
    "k_hop_neighborhood",
]

BUS_KINDS = ("slack", "pv", "pq")
BUNDLED = ("ieee14", "ieee118", "ieee300")


class CaseError(ValueError):
    """Raised for malformed or physically invalid grid cases."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    p_load: float = 0.0
    q_load: float = 0.0
    p_gen: float = 0.0
    q_gen: float = 0.0
    v_set: float | None = None
    gs: float = 0.0
    bs: float = 0.0

    @property
    def is_zero_injection(self) -> bool:
        return self.p_load == 0 and self.q_load == 0 and self.p_gen == 0 and self.q_gen == 0

    @property
    def is_generator(self) -> bool:
        return self.kind in ("slack", "pv") or self.p_gen != 0 or self.q_gen != 0


@dataclass(frozen=True)
class Branch:
    # from/to are internal (0-based, contiguous) bus indices
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    shift: float = 0.0


@dataclass(frozen=True)
class GridCase:
    """A validated grid case with contiguous internal bus numbering.

    ``bus_ids[i]`` is the original id of internal bus ``i``.
    """

    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    bus_ids: tuple[int, ...] = field(default=())

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def slack(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == "slack")

    def index_of(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)

    def kinds(self) -> np.ndarray:
        return np.array([b.kind for b in self.buses])

    def net_injection(self) -> np.ndarray:
        """Specified complex net injections in p.u. (generation minus load)."""
        s = np.array([(b.p_gen - b.p_load) + 1j * (b.q_gen - b.q_load) for b in self.buses])
        return s / self.base_mva

    def neighbors(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n_bus)]
        for br in self.branches:
            if br.from_bus != br.to_bus:
                adj[br.from_bus].add(br.to_bus)
                adj[br.to_bus].add(br.from_bus)
        return adj

    def with_buses(self, buses) -> "GridCase":
        return GridCase(self.name, self.base_mva, tuple(buses), self.branches, self.bus_ids)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "buses": [
                {"id": self.bus_ids[i], "kind": b.kind, "p_load": b.p_load, "q_load": b.q_load,
                 "p_gen": b.p_gen, "q_gen": b.q_gen, "v_set": b.v_set, "gs": b.gs, "bs": b.bs}
                for i, b in enumerate(self.buses)
            ],
            "branches": [
                {"from": self.bus_ids[br.from_bus], "to": self.bus_ids[br.to_bus], "r": br.r,
                 "x": br.x, "b": br.b_charging, "tap": br.tap, "shift": br.shift}
                for br in self.branches
            ],
        }


def _num(entry: dict, key: str, default: float | None = 0.0) -> float | None:
    val = entry.get(key, default)
    if val is None:
        return None
    try:
        return float(val)
    except (TypeError, ValueError) as exc:
        raise CaseError(f"field {key!r} must be numeric, got {val!r}") from exc


def load_case(source) -> GridCase:
    """Build a GridCase from a dict, a JSON string/path, or a bundled case name."""
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if text in BUNDLED:
            return bundled_case(text)
        path = Path(text)
        if not text.lstrip().startswith("{") and (path.suffix == ".json" or path.exists()):
            if not path.exists():
                raise CaseError(f"case file not found: {path}")
            doc = json.loads(path.read_text())
            doc.setdefault("name", path.stem)
        else:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise CaseError(f"case file not found: {text}") from exc

    for key in ("base_mva", "buses", "branches"):
        if key not in doc:
            raise CaseError(f"missing top-level field {key!r}")
    base = _num(doc, "base_mva")
    if base is None or base <= 0:
        raise CaseError("base_mva must be positive")
    if not doc["buses"]:
        raise CaseError("case has no buses")

    ids: list[int] = []
    buses: list[Bus] = []
    for entry in doc["buses"]:
        if "id" not in entry or "kind" not in entry:
            raise CaseError("every bus needs 'id' and 'kind'")
        bid = int(entry["id"])
        if bid in ids:
            raise CaseError(f"duplicate bus id {bid}")
        kind = str(entry["kind"]).lower()
        if kind not in BUS_KINDS:
            raise CaseError(f"bus {bid}: unknown kind {kind!r}")
        v_set = _num(entry, "v_set", None)
        if kind != "pq":
            if v_set is None:
                v_set = 1.0
            if v_set <= 0:
                raise CaseError(f"bus {bid}: v_set must be positive")
        ids.append(bid)
        buses.append(Bus(bid, kind, _num(entry, "p_load"), _num(entry, "q_load"), _num(entry, "p_gen"),
                         _num(entry, "q_gen"), v_set, _num(entry, "gs"), _num(entry, "bs")))

    n_slack = sum(b.kind == "slack" for b in buses)
    if n_slack == 0:
        raise CaseError("case has no slack bus")
    if n_slack > 1:
        raise CaseError(f"multiple slack buses ({n_slack})")

    pos = {bid: i for i, bid in enumerate(ids)}
    branches: list[Branch] = []
    for k, entry in enumerate(doc["branches"]):
        try:
            f, t = pos[int(entry["from"])], pos[int(entry["to"])]
        except KeyError as exc:
            raise CaseError(f"branch {k} references unknown bus {exc.args[0]}") from exc
        x = _num(entry, "x")
        tap = _num(entry, "tap", 1.0)
        tap = 1.0 if tap in (None, 0.0) else tap
        if x == 0:
            raise CaseError(f"branch {k}: zero reactance")
        if tap <= 0:
            raise CaseError(f"branch {k}: tap must be positive")
        if f == t:
            raise CaseError(f"branch {k}: self loop at bus {ids[f]}")
        branches.append(Branch(f, t, _num(entry, "r"), x, _num(entry, "b"), tap, _num(entry, "shift") or 0.0))

    case = GridCase(str(doc.get("name", "case")), base, tuple(buses), tuple(branches), tuple(ids))
    seen = k_hop_neighborhood(case, 0, case.n_bus)
    if len(seen) != case.n_bus:
        raise CaseError(f"graph is disconnected ({case.n_bus - len(seen)} buses unreachable)")
    return case


def bundled_case(name: str) -> GridCase:
    """Load one of the shipped IEEE cases (``ieee14``, ``ieee118``, ``ieee300``)."""
    if name not in BUNDLED:
        raise CaseError(f"unknown bundled case {name!r}; choose from {BUNDLED}")
    text = resources.files("gnnfdia.cases").joinpath(f"{name}.json").read_text()
    return load_case(json.loads(text))


def branch_admittances(case: GridCase):
    """Per-branch pi-model terms (yff, yft, ytf, ytt) as complex arrays."""
    nb = case.n_branch
    r = np.array([br.r for br in case.branches])
    x = np.array([br.x for br in case.branches])
    bc = np.array([br.b_charging for br in case.branches])
    tap = np.array([br.tap for br in case.branches]) * np.exp(1j * np.array([br.shift for br in case.branches]))
    if nb == 0:
        empty = np.zeros(0, dtype=complex)
        return empty, empty, empty, empty
    ys = 1.0 / (r + 1j * x)
    ytt = ys + 0.5j * bc
    yff = ytt / (tap * np.conj(tap))
    yft = -ys / np.conj(tap)
    ytf = -ys / tap
    return yff, yft, ytf, ytt


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Bus admittance matrix plus the branch-end matrices it was built from.

    ``yf @ V`` and ``yt @ V`` are the branch currents injected at the from and
    to ends; ``cf``/``ct`` are the branch-bus incidence matrices.
    """

    n: int
    ybus: sp.csr_matrix
    yf: sp.csr_matrix
    yt: sp.csr_matrix
    cf: sp.csr_matrix
    ct: sp.csr_matrix
    f: np.ndarray
    t: np.ndarray
    ysh: np.ndarray

    def toarray(self) -> np.ndarray:
        return self.ybus.toarray()


def build_ybus(case: GridCase) -> AdmittanceMatrix:
    """Assemble Ybus from the branch pi-models (taps and phase shifts included)
    and the bus shunts."""
    n, nb = case.n_bus, case.n_branch
    yff, yft, ytf, ytt = branch_admittances(case)
    f = np.array([br.from_bus for br in case.branches], dtype=int)
    t = np.array([br.to_bus for br in case.branches], dtype=int)
    rows = np.arange(nb)
    yf = sp.csr_matrix((np.r_[yff, yft], (np.r_[rows, rows], np.r_[f, t])), shape=(nb, n), dtype=complex)
    yt = sp.csr_matrix((np.r_[ytf, ytt], (np.r_[rows, rows], np.r_[f, t])), shape=(nb, n), dtype=complex)
    ysh = np.array([b.gs + 1j * b.bs for b in case.buses])
    cf = sp.csr_matrix((np.ones(nb), (rows, f)), shape=(nb, n))
    ct = sp.csr_matrix((np.ones(nb), (rows, t)), shape=(nb, n))
    ybus = (cf.T @ yf + ct.T @ yt + sp.diags(ysh)).tocsr()
    ybus.sort_indices()
    return AdmittanceMatrix(n, ybus, yf, yt, cf, ct, f, t, ysh)


def adjacency_from_ybus(y) -> sp.csr_matrix:
    """Symmetric nonnegative weights ``W_ij = |Y_ij|`` with a zero diagonal."""
    ybus = y.ybus if isinstance(y, AdmittanceMatrix) else y
    w = abs(sp.csr_matrix(ybus)).astype(float)
    w.setdiag(0.0)
    w.eliminate_zeros()
    w = ((w + w.T) * 0.5).tocsr()
    w.sort_indices()
    return w


@dataclass(frozen=True)
class GraphLaplacian:
    n: int
    weights: sp.csr_matrix
    laplacian: sp.csr_matrix
    lambda_max: float
    scaled: sp.csr_matrix
    lambda_converged: bool = True


def largest_eigenvalue(mat, tol: float = 1e-6, max_iter: int = 1000, fallback: float = 2.0):
    """Power iteration for the dominant eigenvalue of a symmetric PSD matrix.

    Stops once the eigen-residual ``||A v - rho v||`` drops below ``tol``, which
    bounds the eigenvalue error by ``tol``. Returns ``(value, converged)``; on
    non-convergence the value is ``fallback``.
    """
    n = mat.shape[0]
    # deterministic start vector with components in every eigendirection
    v = np.cos(np.arange(1, n + 1) * 0.7) + 1.5
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        av = mat @ v
        rho = float(v @ av)
        if np.linalg.norm(av - rho * v) <= tol:
            return rho, True
        norm = np.linalg.norm(av)
        if norm == 0:
            return 0.0, True
        v = av / norm
    return fallback, False


def normalized_laplacian(weights) -> GraphLaplacian:
    """``L = I - D^-1/2 W D^-1/2`` plus its rescaling ``2 L / lambda_max - I``."""
    w = sp.csr_matrix(weights, dtype=float)
    n = w.shape[0]
    deg = np.asarray(w.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        raise CaseError(f"isolated vertex at index {int(np.argmin(deg))} (zero degree)")
    dinv = sp.diags(1.0 / np.sqrt(deg))
    lap = (sp.identity(n, format="csr") - dinv @ w @ dinv).tocsr()
    lap = ((lap + lap.T) * 0.5).tocsr()
    lam, ok = largest_eigenvalue(lap)
    scaled = (lap * (2.0 / lam) - sp.identity(n, format="csr")).tocsr()
    scaled.sort_indices()
    return GraphLaplacian(n, w, lap, lam, scaled, ok)


def k_hop_neighborhood(case: GridCase, p: int, r: int) -> set[int]:
    """Internal indices of all buses within ``r`` hops of bus ``p`` (inclusive)."""
    if not 0 <= p < case.n_bus:
        raise IndexError(f"bus index {p} out of range")
    adj = case.neighbors()
    dist = {p: 0}
    queue = deque([p])
    while queue:
        u = queue.popleft()
        if dist[u] == r:
            continue
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return set(dist)
