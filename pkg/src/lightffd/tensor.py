"""Dense float tensors.

Tensors are plain :class:`numpy.ndarray` objects in C (row-major) order with
activations laid out N x C x H x W. This module holds the few primitives the
layer kernels need on top of numpy, with the shape checks the rest of the
package relies on.
"""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidShapeError, NumericError

FLOAT32 = np.float32
FLOAT64 = np.float64

_BINARY_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def _check_extents(shape: Sequence[int]) -> Tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not shape or len(shape) > 4:
        raise InvalidShapeError(f"tensors have 1 to 4 extents, got {shape}")
    if any(s < 1 for s in shape):
        raise InvalidShapeError(f"every extent must be >= 1, got {shape}")
    return shape


def tensor_new(shape: Sequence[int], fill: float = 0.0, dtype=FLOAT32) -> np.ndarray:
    shape = _check_extents(shape)
    return np.full(shape, fill, dtype=dtype)


def reshape(t: np.ndarray, new_shape: Sequence[int]) -> np.ndarray:
    """Reshape without reordering elements; the result never aliases ``t``."""
    new_shape = _check_extents(new_shape)
    if int(np.prod(new_shape)) != t.size:
        raise InvalidShapeError(f"cannot reshape {t.shape} ({t.size} elements) to {new_shape}")
    return np.ascontiguousarray(t).reshape(new_shape).copy()


def zip_binary(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    if a.shape != b.shape:
        raise InvalidShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    try:
        fn = _BINARY_OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_BINARY_OPS)}") from None
    return fn(a, b)


def reduce_channel_stats(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and biased variance of an N x C x H x W tensor.

    Accumulation is always done in float64; the results are float64 as well
    and callers cast back to their working precision.
    """
    if t.ndim != 4:
        raise InvalidShapeError(f"expected N x C x H x W, got shape {t.shape}")
    x = t.astype(np.float64, copy=False)
    count = t.shape[0] * t.shape[2] * t.shape[3]
    mean = x.sum(axis=(0, 2, 3)) / count
    centered = x - mean[None, :, None, None]
    var = np.einsum("nchw,nchw->c", centered, centered) / count
    return mean, var


def check_finite(t: np.ndarray, what: str = "tensor") -> None:
    if not np.all(np.isfinite(t)):
        raise NumericError(f"{what} contains NaN or Inf")
