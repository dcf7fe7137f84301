"""Chebyshev graph-convolution detector, an MLP baseline, and the training /
evaluation loop shared by both.

Inputs are per-bus ``[P_inj, Q_inj]`` pairs taken from a measurement row, so a
snapshot is an ``n x 2`` array and a batch is ``B x n x 2``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from .grid import GridCase, adjacency_from_ybus, build_ybus, load_case, normalized_laplacian
from .nn import (
    DenseParams,
    Optimizer,
    activation,
    bce_grad,
    binary_cross_entropy,
    glorot_uniform,
    init_dense,
    load_checkpoint,
    save_checkpoint,
    sigmoid,
)
from .powerflow import full_layout
from .seeding import derive_rng

__all__ = [
    "GNN_DEFAULTS",
    "MLP_DEFAULTS",
    "DegenerateDatasetError",
    "ChebLayerParams",
    "Standardizer",
    "ChebDetector",
    "MLPDetector",
    "TrainConfig",
    "Metrics",
    "cheb_basis_apply",
    "cheb_layer_forward",
    "node_features",
    "scaled_laplacian",
    "build_detector",
    "build_mlp_baseline",
    "split_indices",
    "train",
    "evaluate",
    "roc_auc",
    "count_parameters",
    "cheb_parameter_formula",
    "inference_latency",
    "load_model",
]

# per-case architecture defaults: (layers, units, K, activation, optimizer)
GNN_DEFAULTS = {
    "ieee14": dict(layers=3, units=32, K=3, activation="relu", optimizer="adam"),
    "ieee118": dict(layers=3, units=16, K=3, activation="relu", optimizer="adam"),
    "ieee300": dict(layers=4, units=32, K=2, activation="relu", optimizer="adam"),
}
MLP_DEFAULTS = {
    "ieee14": dict(layers=4, units=16, activation="elu", optimizer="rmsprop"),
    "ieee118": dict(layers=3, units=16, activation="elu", optimizer="adam"),
    "ieee300": dict(layers=3, units=64, activation="elu", optimizer="rmsprop"),
}
THRESHOLD = 0.5


class DegenerateDatasetError(ValueError):
    """Training data with a single class, or an empty split."""


# -- Chebyshev filtering ------------------------------------------------------

def _batch_matmul(lt, x: np.ndarray) -> np.ndarray:
    """``lt @ x`` along the node axis of a ``B x n x c`` array."""
    b, n, c = x.shape
    flat = x.transpose(1, 0, 2).reshape(n, b * c)
    return np.asarray(lt @ flat).reshape(n, b, c).transpose(1, 0, 2)


def _basis(lt, x: np.ndarray, K: int) -> list[np.ndarray]:
    out = [x]
    if K > 1:
        out.append(_batch_matmul(lt, x))
    for _ in range(2, K):
        out.append(2.0 * _batch_matmul(lt, out[-1]) - out[-2])
    return out


def cheb_basis_apply(lt, x, K: int) -> list[np.ndarray]:
    """``[T_0(L~) x, ..., T_{K-1}(L~) x]`` by the three-term recursion.

    ``x`` may be ``n``, ``n x c`` or ``B x n x c``; outputs have its shape.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    x = np.asarray(x, dtype=float)
    if x.shape[-2 if x.ndim > 1 else 0] != lt.shape[0]:
        raise ValueError(f"signal has the wrong number of nodes for a {lt.shape[0]}-node operator")
    shaped = x.reshape(1, -1, 1) if x.ndim == 1 else (x[None] if x.ndim == 2 else x)
    return [t.reshape(x.shape) for t in _basis(lt, shaped, K)]


def _basis_adjoint(lt, grads: list[np.ndarray]) -> np.ndarray:
    """Gradient w.r.t. the input given gradients w.r.t. every basis term.

    Runs the recursion backwards; ``L~`` is symmetric so it is its own adjoint.
    """
    g = [a.copy() for a in grads]
    for k in range(len(g) - 1, 1, -1):
        g[k - 1] += 2.0 * _batch_matmul(lt, g[k])
        g[k - 2] -= g[k]
    if len(g) > 1:
        g[0] += _batch_matmul(lt, g[1])
    return g[0]


@dataclass
class ChebLayerParams:
    """Filter taps ``theta[k, c_in, c_out]`` and one bias row per tap.

    The bias rows act only through their sum; keeping ``K`` of them makes the
    allocated count equal ``K (c_in + 1) c_out``.
    """

    theta: np.ndarray
    bias: np.ndarray  # K x c_out

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.bias.ndim == 1:
            self.bias = np.vstack([self.bias] + [np.zeros_like(self.bias)] * (self.theta.shape[0] - 1))
        if self.theta.ndim != 3 or self.theta.shape[0] < 1:
            raise ValueError("theta must be K x c_in x c_out with K >= 1")
        if self.bias.shape != (self.theta.shape[0], self.theta.shape[2]):
            raise ValueError(f"bias shape {self.bias.shape} does not match theta {self.theta.shape}")

    @property
    def K(self) -> int:
        return self.theta.shape[0]

    @property
    def c_in(self) -> int:
        return self.theta.shape[1]

    @property
    def c_out(self) -> int:
        return self.theta.shape[2]

    @property
    def size(self) -> int:
        return self.theta.size + self.bias.size


def _stack_features(basis: list[np.ndarray]) -> np.ndarray:
    # (B*n) x (K*c) design matrix, tap-major along the columns
    b, n, c = basis[0].shape
    return np.concatenate(basis, axis=-1).reshape(b * n, len(basis) * c)


def _cheb_pre(p: ChebLayerParams, lt, x):
    basis = _basis(lt, x, p.K)
    b, n, _ = x.shape
    flat = _stack_features(basis) @ p.theta.reshape(-1, p.c_out)
    return flat.reshape(b, n, p.c_out) + p.bias.sum(axis=0), basis


def cheb_layer_forward(p: ChebLayerParams, lt, x, act: str = "relu") -> np.ndarray:
    """``act(sum_k T_k(L~) X theta_k + b)`` for ``X`` of shape ``n x c_in`` or ``B x n x c_in``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    xb = x[None] if single else x
    if xb.shape[-1] != p.c_in:
        raise ValueError(f"input has {xb.shape[-1]} channels, layer expects {p.c_in}")
    if xb.shape[1] != lt.shape[0]:
        raise ValueError("input node count does not match the Laplacian")
    pre, _ = _cheb_pre(p, lt, xb)
    out = activation(act)[0](pre)
    return out[0] if single else out


def scaled_laplacian(case: GridCase) -> sp.csr_matrix:
    return normalized_laplacian(adjacency_from_ybus(build_ybus(case))).scaled


def node_features(Z: np.ndarray, case: GridCase) -> np.ndarray:
    """``T x n x 2`` array of ``[P_inj, Q_inj]`` from full-layout measurement rows."""
    layout = full_layout(case)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != len(layout):
        raise ValueError(f"measurement rows have {Z.shape[1]} entries, expected {len(layout)}")
    return np.stack([Z[:, layout.positions("p_inj")], Z[:, layout.positions("q_inj")]], axis=-1)


# -- models -------------------------------------------------------------------

@dataclass
class Standardizer:
    """Per-feature (node, channel) shift and scale."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        if len(x) == 0:
            raise DegenerateDatasetError("cannot fit standardization on an empty split")
        mean = x.mean(axis=0)
        sd = x.std(axis=0)
        return cls(mean, np.where(sd > 1e-12, sd, 1.0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


class _Detector:
    """Shared plumbing: parameters as a flat list, prediction, checkpoints."""

    kind = "base"

    def __init__(self):
        self.standardizer: Standardizer | None = None

    # subclasses provide: params(), param_names(), _forward(xs), _backward(cache, y), config()
    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        if self.standardizer is None:
            raise RuntimeError("standardization has not been fitted; train the model first")
        return self.forward(self.standardizer.apply(np.asarray(x, dtype=float)))

    def forward(self, xs: np.ndarray) -> np.ndarray:
        """Probabilities for already-standardized inputs."""
        return self._forward(self._check(xs))[0]

    def loss_and_grads(self, xs: np.ndarray, y: np.ndarray):
        prob, cache = self._forward(self._check(xs))
        return binary_cross_entropy(y, prob), self._backward(cache, np.asarray(y, dtype=float)), prob

    def _check(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 2:
            xs = xs[None]
        if xs.shape[1:] != (self.n, 2):
            raise ValueError(f"expected inputs of shape (B, {self.n}, 2), got {xs.shape}")
        return xs

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def restore(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.params(), values):
            p[...] = v

    def save(self, path, extra: dict | None = None):
        arrays = dict(zip(self.param_names(), self.params()))
        if self.standardizer is not None:
            arrays["standardizer.mean"] = self.standardizer.mean
            arrays["standardizer.scale"] = self.standardizer.scale
        manifest = {"model": self.kind, "config": self.config(), "flatten": "node-major",
                    "init": "glorot_uniform", **(extra or {})}
        return save_checkpoint(path, manifest, arrays)


def _head_backward(head: DenseParams, flat, prob, y):
    # d(mean BCE)/d(logit) through the clipped probability
    dlogit = (bce_grad(y, prob) * prob * (1.0 - prob))[:, None]
    return head.weights.shape, flat.T @ dlogit, dlogit.sum(axis=0), dlogit @ head.weights.T


class ChebDetector(_Detector):
    """``L`` Chebyshev graph-convolution layers, flatten, dense sigmoid head."""

    kind = "gnn"

    def __init__(self, lt, K: int = 3, channels=(32, 32, 32), act: str = "relu", seed: int = 0,
                 case: GridCase | None = None):
        super().__init__()
        self.lt = sp.csr_matrix(lt)
        self.n = self.lt.shape[0]
        self.K = int(K)
        self.channels = tuple(int(c) for c in channels)
        self.act = act
        self.seed = int(seed)
        self.case = case
        activation(act)
        if self.K < 1:
            raise ValueError("K must be at least 1")
        rng = derive_rng(seed, "init", 0)
        self.layers = []
        c_prev = 2
        for c in self.channels:
            theta = glorot_uniform(rng, (self.K, c_prev, c), self.K * c_prev, c)
            self.layers.append(ChebLayerParams(theta, np.zeros((self.K, c))))
            c_prev = c
        self.head = init_dense(rng, self.n * c_prev, 1)

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.theta, layer.bias]
        return out + [self.head.weights, self.head.bias]

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names += [f"cheb{i}.theta", f"cheb{i}.bias"]
        return names + ["head.weights", "head.bias"]

    def config(self) -> dict:
        return {"K": self.K, "channels": list(self.channels), "activation": self.act, "seed": self.seed,
                "n": self.n}

    def _forward(self, xs):
        fwd, _ = activation(self.act)
        h = xs
        cache = []
        for layer in self.layers:
            pre, basis = _cheb_pre(layer, self.lt, h)
            out = fwd(pre)
            cache.append((basis, pre, out))
            h = out
        flat = h.reshape(len(h), -1)
        prob = sigmoid(flat @ self.head.weights + self.head.bias).ravel()
        return prob, (cache, flat, prob)

    def _backward(self, state, y):
        cache, flat, prob = state
        _, dw, db, dflat = _head_backward(self.head, flat, prob, y)
        grads = [dw, db]
        g = dflat.reshape(cache[-1][2].shape) if cache else None
        _, deriv = activation(self.act)
        layer_grads = []
        for layer, (basis, pre, out) in zip(reversed(self.layers), reversed(cache)):
            dpre = g * deriv(pre, out)
            b, n, _ = dpre.shape
            d2 = dpre.reshape(b * n, layer.c_out)
            dtheta = (_stack_features(basis).T @ d2).reshape(layer.theta.shape)
            dbias = np.broadcast_to(d2.sum(axis=0), layer.bias.shape).copy()
            dfeat = (d2 @ layer.theta.reshape(-1, layer.c_out).T).reshape(b, n, layer.K, layer.c_in)
            g = _basis_adjoint(self.lt, [dfeat[:, :, k, :] for k in range(layer.K)])
            layer_grads = [dtheta, dbias] + layer_grads
        return layer_grads + grads


class MLPDetector(_Detector):
    """Flattened ``[P, Q]`` input, ``layers`` hidden dense layers, sigmoid head."""

    kind = "mlp"

    def __init__(self, n: int, layers: int = 4, units: int = 16, act: str = "elu", seed: int = 0,
                 case: GridCase | None = None):
        super().__init__()
        self.n = int(n)
        self.units = int(units)
        self.act = act
        self.seed = int(seed)
        self.case = case
        activation(act)
        rng = derive_rng(seed, "init", 0)
        widths = [2 * self.n] + [self.units] * int(layers)
        self.hidden = [init_dense(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
        self.head = init_dense(rng, widths[-1], 1)

    def params(self) -> list[np.ndarray]:
        out = []
        for d in self.hidden:
            out += [d.weights, d.bias]
        return out + [self.head.weights, self.head.bias]

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.hidden)):
            names += [f"dense{i}.weights", f"dense{i}.bias"]
        return names + ["head.weights", "head.bias"]

    def config(self) -> dict:
        return {"layers": len(self.hidden), "units": self.units, "activation": self.act, "seed": self.seed,
                "n": self.n}

    def _forward(self, xs):
        fwd, _ = activation(self.act)
        h = xs.reshape(len(xs), -1)
        cache = []
        for d in self.hidden:
            pre = h @ d.weights + d.bias
            out = fwd(pre)
            cache.append((h, pre, out))
            h = out
        prob = sigmoid(h @ self.head.weights + self.head.bias).ravel()
        return prob, (cache, h, prob)

    def _backward(self, state, y):
        cache, flat, prob = state
        _, dw, db, g = _head_backward(self.head, flat, prob, y)
        _, deriv = activation(self.act)
        grads = [dw, db]
        for d, (inp, pre, out) in zip(reversed(self.hidden), reversed(cache)):
            dpre = g * deriv(pre, out)
            grads = [inp.T @ dpre, dpre.sum(axis=0)] + grads
            g = dpre @ d.weights.T
        return grads


def build_detector(case: GridCase, K: int | None = None, layers: int | None = None, units: int | None = None,
                   act: str | None = None, seed: int = 0) -> ChebDetector:
    """GNN detector with per-case defaults for anything not given."""
    d = GNN_DEFAULTS.get(case.name, GNN_DEFAULTS["ieee14"])
    layers = d["layers"] if layers is None else layers
    units = d["units"] if units is None else units
    return ChebDetector(scaled_laplacian(case), d["K"] if K is None else K, (units,) * layers,
                        d["activation"] if act is None else act, seed, case)


def build_mlp_baseline(case_or_n, layers: int | None = None, units: int | None = None, act: str | None = None,
                       seed: int = 0) -> MLPDetector:
    case = case_or_n if isinstance(case_or_n, GridCase) else None
    n = case.n_bus if case is not None else int(case_or_n)
    d = MLP_DEFAULTS.get(case.name if case is not None else "", MLP_DEFAULTS["ieee14"])
    return MLPDetector(n, d["layers"] if layers is None else layers, d["units"] if units is None else units,
                       d["activation"] if act is None else act, seed, case)


def cheb_parameter_formula(n: int, K: int, channels) -> int:
    """``K sum_l (c_{l-1} + 1) c_l + n c_L + 1`` with ``c_0 = 2``."""
    chain = [2] + list(channels)
    return K * sum((a + 1) * b for a, b in zip(chain[:-1], chain[1:])) + n * chain[-1] + 1


def count_parameters(model: _Detector) -> int:
    return model.n_params


# -- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 128
    patience: int = 16
    optimizer: str | None = None  # None -> per-case default
    lr: float = 1e-3
    splits: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0
    paper_standardization: bool = False

    def __post_init__(self):
        if abs(sum(self.splits) - 1.0) > 1e-9 or min(self.splits) < 0:
            raise ValueError("split fractions must be nonnegative and sum to 1")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch size, epochs and patience must be positive")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def split_indices(T: int, splits=(0.6, 0.2, 0.2)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contiguous time-ordered train / validation / test index ranges."""
    a = int(round(splits[0] * T))
    b = int(round((splits[0] + splits[1]) * T))
    idx = np.arange(T)
    return idx[:a], idx[a:b], idx[b:]


def _arrays(data, case=None):
    if isinstance(data, tuple):
        x, y = data
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if data.Y is None:
        raise DegenerateDatasetError("dataset has no labels; generate attacks first")
    return node_features(data.Z, case or data.case), np.asarray(data.Y, dtype=float)


@dataclass
class TrainResult:
    model: _Detector
    history: list[dict]
    best_epoch: int
    splits: dict
    seconds: float
    test: "Metrics | None" = None
    extra: dict = field(default_factory=dict)


def train(model: _Detector, data, cfg: TrainConfig = TrainConfig(), optimizer: str | None = None) -> TrainResult:
    """Mini-batch training on mean BCE with early stopping on validation loss.

    ``data`` is a labeled dataset or an ``(X, y)`` pair with ``X`` of shape
    ``T x n x 2``. The first 60% of rows train, the next 20% validate, the last
    20% test. The best-validation weights are restored at the end.
    """
    start = time.perf_counter()
    x, y = _arrays(data, getattr(model, "case", None))
    tr, va, te = split_indices(len(x), cfg.splits)
    if len(tr) == 0 or len(va) == 0:
        raise DegenerateDatasetError("training and validation splits must be nonempty")
    if len(np.unique(y[tr])) < 2:
        raise DegenerateDatasetError("training split contains a single class")
    model.standardizer = Standardizer.fit(x[tr])
    if cfg.paper_standardization:
        x_tr, x_va = x[tr], x[va]
        xs_tr, xs_va = Standardizer.fit(x_tr).apply(x_tr), Standardizer.fit(x_va).apply(x_va)
    else:
        xs_tr, xs_va = model.standardizer.apply(x[tr]), model.standardizer.apply(x[va])
    y_tr, y_va = y[tr], y[va]

    kind = optimizer or cfg.optimizer or _default_optimizer(model)
    opt = Optimizer(kind, cfg.lr)
    rng = derive_rng(cfg.seed, "train", 0)
    params = model.params()
    best_val, best_epoch, best = np.inf, 0, model.snapshot()
    wait = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(tr))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            b = order[s:s + cfg.batch_size]
            loss, grads, _ = model.loss_and_grads(xs_tr[b], y_tr[b])
            opt.step(params, grads)
            total += loss * len(b)
        val = binary_cross_entropy(y_va, model.forward(xs_va))
        history.append({"epoch": epoch, "train_loss": total / len(tr), "val_loss": val})
        if val < best_val:
            best_val, best_epoch, best = val, epoch, model.snapshot()
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    model.restore(best)
    result = TrainResult(model, history, best_epoch, {"train": len(tr), "val": len(va), "test": len(te)},
                         time.perf_counter() - start, extra={"optimizer": kind})
    if len(te):
        result.test = evaluate(model, (x[te], y[te]), own_statistics=cfg.paper_standardization)
    return result


def _default_optimizer(model) -> str:
    name = model.case.name if getattr(model, "case", None) is not None else "ieee14"
    table = GNN_DEFAULTS if model.kind == "gnn" else MLP_DEFAULTS
    return table.get(name, table["ieee14"])["optimizer"]


# -- evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    dr: float
    fa: float
    f1: float
    degenerate: tuple[str, ...] = ()

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "Metrics":
        flags = []
        if tp + fn == 0:
            flags.append("no_positives")
        if fp + tn == 0:
            flags.append("no_negatives")
        dr = tp / (tp + fn) if tp + fn else 0.0
        fa = fp / (fp + tn) if fp + tn else 0.0
        denom = 2 * tp + fp + fn
        if denom == 0:
            flags.append("f1_undefined")
        f1 = 2 * tp / denom if denom else 0.0
        return cls(int(tp), int(fp), int(tn), int(fn), dr, fa, f1, tuple(flags))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["degenerate"] = list(self.degenerate)
        return d


def evaluate(model: _Detector, data, own_statistics: bool = False, threshold: float = THRESHOLD) -> Metrics:
    """Detection rate, false-alarm rate and F1 at ``P(attack) > threshold``.

    With ``own_statistics`` the split is standardized with its own mean and
    scale instead of the training ones.
    """
    x, y = _arrays(data, getattr(model, "case", None))
    if len(x) == 0:
        raise DegenerateDatasetError("cannot evaluate an empty split")
    if own_statistics:
        prob = model.forward(Standardizer.fit(x).apply(x))
    else:
        prob = model.predict_proba(x)
    pred = prob > threshold
    truth = y > 0.5
    return Metrics.from_counts(int(np.sum(pred & truth)), int(np.sum(pred & ~truth)),
                               int(np.sum(~pred & ~truth)), int(np.sum(~pred & truth)))


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve (ties count one half)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    npos, nneg = labels.sum(), (~labels).sum()
    if npos == 0 or nneg == 0:
        raise ValueError("ROC-AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - npos * (npos + 1) / 2) / (npos * nneg))


def inference_latency(model: _Detector, repeats: int = 100, seed: int = 0) -> np.ndarray:
    """Wall-clock seconds of ``repeats`` single-snapshot forward passes."""
    x = np.random.default_rng(seed).standard_normal((1, model.n, 2))
    model.forward(x)
    out = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        model.forward(x)
        out[i] = time.perf_counter() - t0
    return out


def load_model(path) -> _Detector:
    manifest, arrays = load_checkpoint(path)
    cfg = manifest["config"]
    case = load_case(manifest["case"]) if "case" in manifest else None
    if manifest["model"] == "gnn":
        if case is None:
            raise ValueError("GNN checkpoint lacks the grid case needed for its Laplacian")
        model = ChebDetector(scaled_laplacian(case), cfg["K"], cfg["channels"], cfg["activation"], cfg["seed"], case)
    elif manifest["model"] == "mlp":
        model = MLPDetector(cfg["n"], cfg["layers"], cfg["units"], cfg["activation"], cfg["seed"], case)
    else:
        raise ValueError(f"unknown model kind {manifest['model']!r}")
    model.restore([arrays[name] for name in model.param_names()])
    if "standardizer.mean" in arrays:
        model.standardizer = Standardizer(arrays["standardizer.mean"], arrays["standardizer.scale"])
    return model


def save_model(model: _Detector, path, extra: dict | None = None):
    extra = dict(extra or {})
    if model.case is not None:
        extra["case"] = model.case.to_dict()
    return model.save(path, extra)


def clone(model: _Detector) -> _Detector:
    return copy.deepcopy(model)
