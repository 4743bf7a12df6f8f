"""Forward and backward kernels for the layer kinds used by the LightFFDNets.

Every forward returns ``(output, cache)``; the matching backward consumes the
cache. Arrays keep the dtype they come in with (float32 for training,
float64 for gradient checks).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from . import kernels
from .errors import DegenerateBatchError, InvalidShapeError, NumericError
from .tensor import reduce_channel_stats

BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5


class ConvParams(NamedTuple):
    weights: np.ndarray  # O x I x 3 x 3
    bias: np.ndarray  # O


@dataclass
class BNParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"BN momentum must lie in (0, 1), got {self.momentum}")
        if self.epsilon <= 0.0:
            raise ValueError(f"BN epsilon must be positive, got {self.epsilon}")

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32, **kw) -> "BNParams":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            **kw,
        )


@dataclass
class ConvCache:
    input: np.ndarray
    weights: np.ndarray

    @property
    def out_shape(self):
        N, _, H, W = self.input.shape
        return (N, self.weights.shape[0], H, W)


@dataclass
class BNCache:
    x_hat: np.ndarray
    inv_std: np.ndarray  # per channel, working dtype
    gamma: np.ndarray
    mean: np.ndarray
    var: np.ndarray


@dataclass
class ReluCache:
    mask: np.ndarray


@dataclass
class PoolCache:
    argmax: np.ndarray  # flat index into the pooled input, one per output cell
    in_shape: Tuple[int, ...]


@dataclass
class FCCache:
    input: np.ndarray
    weights: np.ndarray


def _expect_shape(got, want, what):
    if tuple(got) != tuple(want):
        raise InvalidShapeError(f"{what}: expected shape {tuple(want)}, got {tuple(got)}")


# -- convolution -------------------------------------------------------------

def conv2d_forward(x: np.ndarray, p: ConvParams):
    """3x3, stride 1, zero padding 1 ("same") convolution.

    The batch is processed one image at a time: the patch matrix of a full
    224 x 224 batch would not fit comfortably in memory.
    """
    if x.ndim != 4:
        raise InvalidShapeError(f"conv input must be N x C x H x W, got {x.shape}")
    w = p.weights
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise InvalidShapeError(f"conv weights must be O x I x 3 x 3, got {w.shape}")
    N, I, H, W = x.shape
    O = w.shape[0]
    if w.shape[1] != I:
        raise InvalidShapeError(f"conv expects {w.shape[1]} input channels, got {I}")
    _expect_shape(p.bias.shape, (O,), "conv bias")
    w_mat = w.reshape(O, I * 9)
    out = np.empty((N, O, H, W), dtype=x.dtype)
    for n in range(N):
        cols = kernels.im2col3x3(x[n])
        out[n] = (w_mat @ cols).reshape(O, H, W)
    out += p.bias[None, :, None, None]
    return out, ConvCache(input=x, weights=w)


def conv2d_backward(cache: ConvCache, d_out: np.ndarray):
    _expect_shape(d_out.shape, cache.out_shape, "conv d_out")
    x, w = cache.input, cache.weights
    N, I, H, W = x.shape
    O = w.shape[0]
    w_mat = w.reshape(O, I * 9)
    d_w = np.zeros((O, I * 9), dtype=x.dtype)
    d_x = np.empty_like(x)
    for n in range(N):
        cols = kernels.im2col3x3(x[n])
        g = d_out[n].reshape(O, H * W)
        d_w += g @ cols.T
        d_x[n] = kernels.col2im3x3(w_mat.T @ g, H, W)
    d_b = d_out.sum(axis=(0, 2, 3))
    return d_x, d_w.reshape(w.shape), d_b


# -- batch normalization ------------------------------------------------------

def batchnorm_forward(x: np.ndarray, p: BNParams, mode: str = "train"):
    """Per-channel batch normalization.

    In train mode the running statistics in ``p`` are updated in place as
    ``running = (1 - momentum) * running + momentum * batch``. Infer mode
    normalizes with the running statistics and mutates nothing; it returns no
    cache.
    """
    if x.ndim != 4:
        raise InvalidShapeError(f"batchnorm input must be N x C x H x W, got {x.shape}")
    C = x.shape[1]
    _expect_shape(p.gamma.shape, (C,), "batchnorm gamma")
    dt = x.dtype
    if mode == "infer":
        inv_std = (1.0 / np.sqrt(p.running_var.astype(np.float64) + p.epsilon)).astype(dt)
        x_hat = (x - p.running_mean.astype(dt)[None, :, None, None]) * inv_std[None, :, None, None]
        return p.gamma[None, :, None, None] * x_hat + p.beta[None, :, None, None], None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if x.shape[0] * x.shape[2] * x.shape[3] < 2:
        raise DegenerateBatchError("train-mode batchnorm needs at least 2 values per channel")
    mean, var = reduce_channel_stats(x)
    inv_std = (1.0 / np.sqrt(var + p.epsilon)).astype(dt)
    x_hat = (x - mean.astype(dt)[None, :, None, None]) * inv_std[None, :, None, None]
    out = p.gamma[None, :, None, None] * x_hat + p.beta[None, :, None, None]
    m = p.momentum
    p.running_mean[...] = (1.0 - m) * p.running_mean + m * mean
    p.running_var[...] = (1.0 - m) * p.running_var + m * var
    return out, BNCache(x_hat=x_hat, inv_std=inv_std, gamma=p.gamma, mean=mean, var=var)


def batchnorm_backward(cache: BNCache, d_out: np.ndarray):
    _expect_shape(d_out.shape, cache.x_hat.shape, "batchnorm d_out")
    x_hat = cache.x_hat
    M = x_hat.shape[0] * x_hat.shape[2] * x_hat.shape[3]
    d_beta = d_out.sum(axis=(0, 2, 3))
    d_gamma = (d_out * x_hat).sum(axis=(0, 2, 3))
    scale = (cache.gamma * cache.inv_std / M)[None, :, None, None]
    d_x = scale * (M * d_out - d_beta[None, :, None, None] - x_hat * d_gamma[None, :, None, None])
    return d_x.astype(d_out.dtype, copy=False), d_gamma, d_beta


# -- ReLU ---------------------------------------------------------------------

def relu_apply(x: np.ndarray):
    mask = x > 0
    return np.where(mask, x, np.zeros((), dtype=x.dtype)), ReluCache(mask=mask)


def relu_backward(cache: ReluCache, d_out: np.ndarray):
    _expect_shape(d_out.shape, cache.mask.shape, "relu d_out")
    # subgradient at exactly 0 is 0
    return np.where(cache.mask, d_out, np.zeros((), dtype=d_out.dtype))


# -- max pooling ----------------------------------------------------------------

def maxpool_forward(x: np.ndarray):
    """2x2 / stride 2 max pooling; a trailing odd row or column is dropped."""
    if x.ndim != 4:
        raise InvalidShapeError(f"maxpool input must be N x C x H x W, got {x.shape}")
    if x.shape[2] < 2 or x.shape[3] < 2:
        raise InvalidShapeError(f"maxpool needs H, W >= 2, got {x.shape}")
    out, idx = kernels.maxpool2x2_forward(x)
    return out, PoolCache(argmax=idx, in_shape=x.shape)


def maxpool_backward(cache: PoolCache, d_out: np.ndarray):
    _expect_shape(d_out.shape, cache.argmax.shape, "maxpool d_out")
    return kernels.maxpool2x2_backward(d_out, cache.argmax, cache.in_shape)


# -- fully connected ----------------------------------------------------------

def fc_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise InvalidShapeError(f"fc: input {x.shape} incompatible with weights {weights.shape}")
    _expect_shape(bias.shape, (weights.shape[0],), "fc bias")
    return x @ weights.T + bias, FCCache(input=x, weights=weights)


def fc_backward(cache: FCCache, d_logits: np.ndarray):
    _expect_shape(d_logits.shape, (cache.input.shape[0], cache.weights.shape[0]), "fc d_logits")
    d_w = d_logits.T @ cache.input
    d_b = d_logits.sum(axis=0)
    d_x = d_logits @ cache.weights
    return d_x, d_w, d_b


# -- softmax ------------------------------------------------------------------

def softmax_apply(logits: np.ndarray) -> np.ndarray:
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise InvalidShapeError(f"softmax expects N x K with K >= 2, got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax received non-finite logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
