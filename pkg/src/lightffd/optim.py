"""Cross-entropy loss and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .errors import InvalidLabelError, InvalidShapeError

LOG_CLAMP = 1e-12


@dataclass
class Hyperparams:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 <= b < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def _check_labels(labels: Sequence[int], n: int, k: int) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.shape != (n,):
        raise InvalidShapeError(f"expected {n} labels, got shape {lab.shape}")
    if lab.size and (not np.issubdtype(lab.dtype, np.integer) or lab.min() < 0 or lab.max() >= k):
        raise InvalidLabelError(f"labels must be integers in [0, {k}), got {labels!r}")
    return lab.astype(np.int64)


def cross_entropy_loss(probs: np.ndarray, labels: Sequence[int]) -> float:
    """Batch mean of -ln p(true class), with p clamped to [1e-12, 1]."""
    if probs.ndim != 2:
        raise InvalidShapeError(f"probs must be N x K, got {probs.shape}")
    lab = _check_labels(labels, probs.shape[0], probs.shape[1])
    p = probs[np.arange(lab.size), lab].astype(np.float64)
    return float(np.mean(-np.log(np.clip(p, LOG_CLAMP, 1.0))))


def softmax_ce_grad(probs: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the softmax logits."""
    if probs.ndim != 2:
        raise InvalidShapeError(f"probs must be N x K, got {probs.shape}")
    n = probs.shape[0]
    lab = _check_labels(labels, n, probs.shape[1])
    d = probs.copy()
    d[np.arange(n), lab] -= 1
    return d / n


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: AdamState, h: Hyperparams) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if set(grads) != set(params):
        raise InvalidShapeError("gradient keys do not match parameter keys")
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise InvalidShapeError(f"gradient {k!r} has shape {grads[k].shape}, param {p.shape}")
    if not state.m:
        fresh = AdamState.zeros_like(params)
        state.m, state.v = fresh.m, fresh.v
    state.t += 1
    b1, b2 = h.beta1, h.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, p in params.items():
        g = grads[k]
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (h.learning_rate * m_hat / (np.sqrt(v_hat) + h.epsilon)).astype(p.dtype, copy=False)
