"""Small dense kernels with hand-written backward passes.

Everything here works on float64 numpy arrays. Matrices are plain 2-D
``np.ndarray`` objects; parameter collections are ``dict[str, np.ndarray]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

Params = dict[str, np.ndarray]


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max-subtracted) along ``axis``."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax of empty input")
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Return ``(-log softmax(logits)[label], softmax(logits) - onehot(label))``."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[0]:
        raise IndexError(f"label {label} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    log_z = math.log(np.exp(shifted).sum())
    loss = log_z - shifted[label]
    grad = softmax(logits)
    grad[label] -= 1.0
    return float(loss), grad


def batch_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows of ``logits`` and its gradient w.r.t. logits."""
    n, c = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,) or np.any(labels < 0) or np.any(labels >= c):
        raise IndexError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def linear_layer(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """y = W x."""
    if w.ndim != 2 or x.shape != (w.shape[1],):
        raise ValueError(f"shape mismatch: W {w.shape}, x {x.shape}")
    return w @ x


def linear_layer_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(W^T dy, outer(dy, x))``."""
    if w.ndim != 2 or x.shape != (w.shape[1],) or dy.shape != (w.shape[0],):
        raise ValueError(f"shape mismatch: W {w.shape}, x {x.shape}, dy {dy.shape}")
    return w.T @ dy, np.outer(dy, x)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # subgradient is 0 at the kink
    return np.where(x > 0.0, dy, 0.0)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[Params, AdamState]:
    """One AdamW step; returns new params and new state, inputs untouched.

    Weight decay is decoupled: ``p <- p * (1 - lr * wd)`` before the
    bias-corrected Adam update.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    if set(params) != set(grads):
        raise ValueError("params and grads have different keys")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch for {name}: {g.shape} vs {p.shape}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        if m.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"accumulator shape mismatch for {name}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        q = p * (1.0 - lr * weight_decay)
        new_p[name] = q - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_p, AdamState(t, new_m, new_v, b1, b2, state.eps)


def clip_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[Params, float]:
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    scale = 1.0 if total <= max_norm else max_norm / total
    return {k: g * scale for k, g in grads.items()}, total


@dataclass(frozen=True)
class Schedule:
    base_lr: float
    warmup_epochs: int
    total_epochs: int

    def __post_init__(self) -> None:
        if self.base_lr <= 0:
            raise ValueError("base_lr must be > 0")
        if not 0 <= self.warmup_epochs <= self.total_epochs:
            raise ValueError("need 0 <= warmup_epochs <= total_epochs")


def lr_at(epoch: int, s: Schedule) -> float:
    """Linear warmup over ``warmup_epochs`` then cosine decay towards zero."""
    if not 0 <= epoch < s.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {s.total_epochs})")
    if epoch < s.warmup_epochs:
        return s.base_lr * (epoch + 1) / s.warmup_epochs
    span = s.total_epochs - s.warmup_epochs
    return s.base_lr * 0.5 * (1.0 + math.cos(math.pi * (epoch - s.warmup_epochs) / span))


# ---------------------------------------------------------------------------
# gradient verification


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def numeric_grad(
    f: Callable[[Params], float], params: Params, h: float = 1e-5
) -> Params:
    """Central-difference gradient of ``f`` for every coordinate of ``params``."""
    if h <= 0:
        raise ValueError("h must be > 0")
    work = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    out: Params = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(work)
            flat[i] = orig - h
            fm = f(work)
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"non-finite evaluation at {name}[{i}]")
            gflat[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


def grad_check_report(
    f: Callable[[Params], float], params: Params, grads: Params, h: float = 1e-5
) -> dict[str, float]:
    """Max relative error per parameter array."""
    numeric = numeric_grad(f, params, h)
    return {k: float(relative_error(grads[k], numeric[k]).max()) for k in params}


def grad_check(
    f: Callable[[Params], float], params: Params, grads: Params, h: float = 1e-5
) -> float:
    """Largest relative error between ``grads`` and central differences of ``f``."""
    return max(grad_check_report(f, params, grads, h).values())
