"""Small numpy neural-network toolkit: dense layers, activations, binary
cross-entropy, optimizers, gradient checking and checkpoint files.

Everything is float64 and gradients are written out by hand.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DenseParams",
    "init_dense",
    "dense_forward",
    "dense_backward",
    "ACTIVATIONS",
    "relu",
    "sigmoid",
    "elu",
    "activation",
    "binary_cross_entropy",
    "bce_grad",
    "OptimizerState",
    "Optimizer",
    "GradCheckReport",
    "finite_difference_check",
    "save_checkpoint",
    "load_checkpoint",
]

PROB_CLIP = 1e-7


@dataclass
class DenseParams:
    weights: np.ndarray  # c_in x c_out
    bias: np.ndarray  # c_out

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ValueError(f"inconsistent dense shapes {self.weights.shape} / {self.bias.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("dense parameters must be finite")

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_dense(rng: np.random.Generator, c_in: int, c_out: int) -> DenseParams:
    return DenseParams(glorot_uniform(rng, (c_in, c_out), c_in, c_out), np.zeros(c_out))


def dense_forward(p: DenseParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.weights.shape[0]:
        raise ValueError(f"input width {x.shape[-1]} does not match weights {p.weights.shape}")
    return x @ p.weights + p.bias


def dense_backward(p: DenseParams, x: np.ndarray, grad_out: np.ndarray):
    """Returns ``(dW, db, dx)`` for a batch ``x`` (B x c_in)."""
    return x.T @ grad_out, grad_out.sum(axis=0), grad_out @ p.weights.T


# activations: forward and derivative given (pre-activation, output)

def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    """Logistic function without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def elu(x, alpha: float = 1.0):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


ACTIVATIONS = {
    "relu": (relu, lambda a, out: (a > 0).astype(float)),
    "elu": (elu, lambda a, out: np.where(a > 0, 1.0, out + 1.0)),
    "tanh": (np.tanh, lambda a, out: 1.0 - out * out),
    "sigmoid": (sigmoid, lambda a, out: out * (1.0 - out)),
    "linear": (lambda a: np.asarray(a, dtype=float), lambda a, out: np.ones_like(a)),
}


def activation(name: str):
    """``(forward, derivative)`` pair; the derivative takes the pre-activation and the output."""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


def binary_cross_entropy(y_true, y_pred) -> float:
    y = np.asarray(y_true, dtype=float).ravel()
    p = np.clip(np.asarray(y_pred, dtype=float).ravel(), PROB_CLIP, 1 - PROB_CLIP)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))


def bce_grad(y_true, y_pred) -> np.ndarray:
    """d(mean BCE)/d(y_pred), zero where the clip is active."""
    y = np.asarray(y_true, dtype=float).ravel()
    raw = np.asarray(y_pred, dtype=float).ravel()
    p = np.clip(raw, PROB_CLIP, 1 - PROB_CLIP)
    g = (-(y / p) + (1 - y) / (1 - p)) / len(y)
    g[(raw < PROB_CLIP) | (raw > 1 - PROB_CLIP)] = 0.0
    return g


@dataclass
class OptimizerState:
    kind: str
    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.9
    eps: float = 1e-8
    m: list = field(default_factory=list, repr=False)
    v: list = field(default_factory=list, repr=False)


class Optimizer:
    """Adam, SGD or RMSprop updating a list of arrays in place."""

    KINDS = ("adam", "sgd", "rmsprop")

    def __init__(self, kind: str = "adam", lr: float = 1e-3, **hyper):
        if kind not in self.KINDS:
            raise ValueError(f"unknown optimizer {kind!r}; choose from {list(self.KINDS)}")
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.state = OptimizerState(kind, float(lr), **hyper)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        st = self.state
        if not st.m:
            st.m = [np.zeros_like(p) for p in params]
            st.v = [np.zeros_like(p) for p in params]
        st.step += 1
        for p, g, m, v in zip(params, grads, st.m, st.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            if st.kind == "sgd":
                p -= st.lr * g
            elif st.kind == "rmsprop":
                v *= st.rho
                v += (1 - st.rho) * g * g
                p -= st.lr * g / (np.sqrt(v) + st.eps)
            else:
                m *= st.beta1
                m += (1 - st.beta1) * g
                v *= st.beta2
                v += (1 - st.beta2) * g * g
                m_hat = m / (1 - st.beta1 ** st.step)
                v_hat = v / (1 - st.beta2 ** st.step)
                p -= st.lr * m_hat / (np.sqrt(v_hat) + st.eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: list[float]
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def finite_difference_check(loss_fn, params: list[np.ndarray], grads: list[np.ndarray], step: float = 1e-6,
                            tolerance: float = 1e-4, max_entries: int | None = None, rng=None,
                            floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic ``grads`` with central differences of ``loss_fn()``.

    ``loss_fn`` takes no arguments and reads ``params`` (perturbed in place and
    restored). Relative error is ``|a - n| / max(|a|, |n|, floor)``. With
    ``max_entries`` only a random subset of entries per array is probed.
    """
    per = []
    checked = 0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), np.asarray(g).reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = np.random.default_rng(0) if rng is None else rng
            idx = rng.choice(flat.size, max_entries, replace=False)
        worst = 0.0
        for i in idx:
            old = flat[i]
            flat[i] = old + step
            up = loss_fn()
            flat[i] = old - step
            down = loss_fn()
            flat[i] = old
            num = (up - down) / (2 * step)
            err = abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), floor)
            worst = max(worst, err)
            checked += 1
        per.append(worst)
    return GradCheckReport(max(per, default=0.0), per, checked, tolerance)


def save_checkpoint(path, manifest: dict, arrays: dict[str, np.ndarray]) -> Path:
    """Write ``<path>.json`` (manifest plus array layout) and ``<path>.bin``
    (little-endian float64 values, concatenated in manifest order)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    layout, offset = [], 0
    for name, arr in arrays.items():
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    blob = np.concatenate([np.asarray(a, dtype="<f8").ravel() for a in arrays.values()]) if arrays else np.zeros(0)
    doc = dict(manifest)
    doc["arrays"] = layout
    doc["dtype"] = "<f8"
    path.with_suffix(".json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    path.with_suffix(".bin").write_bytes(blob.astype("<f8").tobytes())
    return path.with_suffix(".json")


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    doc = json.loads(path.with_suffix(".json").read_text())
    blob = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    arrays = {}
    for entry in doc.pop("arrays"):
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = blob[entry["offset"]:entry["offset"] + size].reshape(entry["shape"]).astype(float)
    doc.pop("dtype", None)
    return doc, arrays
