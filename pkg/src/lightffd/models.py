"""LightFFDNet v1 and v2: architecture descriptors, parameters, forward/backward.

Both networks are plain sequences of Conv(32, 3x3, same) -> BatchNorm -> ReLU
blocks, with a 2x2 max pool after every block except the last (v2) or after
the first block only (v1), then Flatten -> FullyConnected(2) -> Softmax.

Parameters live in a flat ``name -> ndarray`` map keyed by the layer's
position in the descriptor list, e.g. ``"1.conv.weight"`` or
``"2.bn.gamma"``. BatchNorm running statistics are kept separately in
``Model.buffers`` since they are not trained.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import layers as L
from .errors import InvalidShapeError, UnknownArchitectureError

NUM_FILTERS = 32
NUM_CLASSES = 2
FULL_INPUT_SIZE = 224
IN_CHANNELS = 3


class Layer(NamedTuple):
    kind: str  # input | conv | bn | relu | pool | flatten | fc | softmax
    size: int = 0  # conv: filters, fc: classes, input: spatial side


@dataclass(frozen=True)
class ArchSpec:
    arch_id: str
    layers: Tuple[Layer, ...]

    @property
    def input_size(self) -> int:
        return self.layers[0].size

    def shapes(self) -> List[Tuple[int, ...]]:
        """Per-sample output shape of every descriptor (C, H, W) or (D,)."""
        shape: Tuple[int, ...] = (IN_CHANNELS, self.input_size, self.input_size)
        out = []
        for layer in self.layers:
            if layer.kind == "conv":
                shape = (layer.size,) + shape[1:]
            elif layer.kind == "pool":
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif layer.kind == "fc":
                shape = (layer.size,)
            out.append(shape)
        return out

    @property
    def fc_input_dim(self) -> int:
        shapes = self.shapes()
        i = self.index_of("fc")[0]
        return shapes[i - 1][0]

    def index_of(self, kind: str) -> List[int]:
        return [i for i, layer in enumerate(self.layers) if layer.kind == kind]

    @property
    def weighted_layer_count(self) -> int:
        """Number of layers that carry weights (conv and fully connected)."""
        return len(self.index_of("conv")) + len(self.index_of("fc"))

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes = self.shapes()
        channels = IN_CHANNELS
        out: Dict[str, Tuple[int, ...]] = {}
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv":
                out[f"{i}.conv.weight"] = (layer.size, channels, 3, 3)
                out[f"{i}.conv.bias"] = (layer.size,)
                channels = layer.size
            elif layer.kind == "bn":
                out[f"{i}.bn.gamma"] = (channels,)
                out[f"{i}.bn.beta"] = (channels,)
            elif layer.kind == "fc":
                out[f"{i}.fc.weight"] = (layer.size, shapes[i - 1][0])
                out[f"{i}.fc.bias"] = (layer.size,)
        return out

    def buffer_shapes(self) -> Dict[str, Tuple[int, ...]]:
        out = {}
        for name, shape in self.param_shapes().items():
            if name.endswith(".bn.gamma"):
                prefix = name[: -len("gamma")]
                out[prefix + "running_mean"] = shape
                out[prefix + "running_var"] = shape
        return out


def make_arch(arch_id: str, input_size: int, pool_after: Sequence[bool],
              filters: int = NUM_FILTERS) -> ArchSpec:
    """Assemble a conv-block stack; ``pool_after[k]`` puts a max pool after block k."""
    seq = [Layer("input", input_size)]
    for pool in pool_after:
        seq += [Layer("conv", filters), Layer("bn"), Layer("relu")]
        if pool:
            seq.append(Layer("pool"))
    seq += [Layer("flatten"), Layer("fc", NUM_CLASSES), Layer("softmax")]
    spec = ArchSpec(arch_id, tuple(seq))
    for shape in spec.shapes():
        if len(shape) == 3 and min(shape[1:]) < 1:
            raise InvalidShapeError(f"input size {input_size} too small for {arch_id}")
    return spec


_POOLING = {
    "v1": (True, False),
    "v2": (True, True, True, True, False),
}
_ID_RE = re.compile(r"^(?:lightffdnet-)?(v[12])(?:-r(\d+))?$")


def parse_arch_id(arch_id: str) -> Tuple[str, int]:
    m = _ID_RE.match(arch_id.strip().lower())
    if not m:
        raise UnknownArchitectureError(f"unknown architecture {arch_id!r}")
    return m.group(1), int(m.group(2)) if m.group(2) else FULL_INPUT_SIZE


def build_arch(version: str, input_size: int = FULL_INPUT_SIZE) -> ArchSpec:
    """Layer sequence of LightFFDNet ``version`` ("v1" / "v2").

    A non-default ``input_size`` gives a reduced variant with id suffix
    ``-r<size>``; those exist for fast tests and never carry the plain id.
    """
    v, size_from_id = parse_arch_id(version)
    if size_from_id != FULL_INPUT_SIZE:
        input_size = size_from_id
    arch_id = f"lightffdnet-{v}"
    if input_size != FULL_INPUT_SIZE:
        arch_id += f"-r{input_size}"
    return make_arch(arch_id, input_size, _POOLING[v])


@dataclass
class Model:
    spec: ArchSpec
    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]
    seed: int = 0
    bn_momentum: float = L.BN_MOMENTUM
    bn_epsilon: float = L.BN_EPSILON
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def bn_params(self, i: int) -> L.BNParams:
        return L.BNParams(
            gamma=self.params[f"{i}.bn.gamma"],
            beta=self.params[f"{i}.bn.beta"],
            running_mean=self.buffers[f"{i}.bn.running_mean"],
            running_var=self.buffers[f"{i}.bn.running_var"],
            momentum=self.bn_momentum,
            epsilon=self.bn_epsilon,
        )

    def copy(self) -> "Model":
        return Model(
            spec=self.spec,
            params={k: v.copy() for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            seed=self.seed,
            bn_momentum=self.bn_momentum,
            bn_epsilon=self.bn_epsilon,
            metadata=dict(self.metadata),
        )


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(spec: ArchSpec, seed: int, dtype=np.float32) -> Model:
    """Glorot-uniform conv/FC weights, zero biases, BN gamma=1, beta=0."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".weight"):
            if len(shape) == 4:
                fan_in, fan_out = shape[1] * 9, shape[0] * 9
            else:
                fan_in, fan_out = shape[1], shape[0]
            bound = glorot_bound(fan_in, fan_out)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    buffers = {
        name: (np.ones(shape, dtype=dtype) if name.endswith("running_var")
               else np.zeros(shape, dtype=dtype))
        for name, shape in spec.buffer_shapes().items()
    }
    return Model(spec=spec, params=params, buffers=buffers, seed=seed)


def param_count(model: Model) -> int:
    """Number of trainable scalars; BN running statistics are excluded."""
    return int(sum(p.size for p in model.params.values()))


def model_forward(model: Model, batch: np.ndarray, mode: str = "infer"):
    """Run the network; returns ``(probs, caches)``, caches is None in infer mode."""
    s = model.spec.input_size
    if batch.ndim != 4 or batch.shape[1:] != (IN_CHANNELS, s, s):
        raise InvalidShapeError(
            f"{model.spec.arch_id} expects N x {IN_CHANNELS} x {s} x {s}, got {batch.shape}")
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    train = mode == "train"
    x = batch.astype(model.dtype, copy=False)
    caches: List[object] = []
    for i, layer in enumerate(model.spec.layers):
        cache = None
        if layer.kind == "conv":
            p = L.ConvParams(model.params[f"{i}.conv.weight"], model.params[f"{i}.conv.bias"])
            x, cache = L.conv2d_forward(x, p)
        elif layer.kind == "bn":
            x, cache = L.batchnorm_forward(x, model.bn_params(i), mode)
        elif layer.kind == "relu":
            x, cache = L.relu_apply(x)
        elif layer.kind == "pool":
            x, cache = L.maxpool_forward(x)
        elif layer.kind == "flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)  # channel-major: c, then y, then x
        elif layer.kind == "fc":
            x, cache = L.fc_forward(x, model.params[f"{i}.fc.weight"], model.params[f"{i}.fc.bias"])
        elif layer.kind == "softmax":
            x = L.softmax_apply(x)
        caches.append(cache)
    return x, (caches if train else None)


def model_backward(model: Model, caches, d_logits: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of every trainable parameter given dLoss/dlogits (N x 2).

    The softmax layer is skipped: callers pass the fused softmax + loss
    gradient with respect to the logits.
    """
    spec_layers = model.spec.layers
    if caches is None or len(caches) != len(spec_layers):
        raise InvalidShapeError("caches do not come from a train-mode forward of this model")
    grads: Dict[str, np.ndarray] = {}
    g = d_logits.astype(model.dtype, copy=False)
    for i in range(len(spec_layers) - 1, 0, -1):
        kind = spec_layers[i].kind
        cache = caches[i]
        if kind == "softmax":
            continue
        if kind == "fc":
            g, grads[f"{i}.fc.weight"], grads[f"{i}.fc.bias"] = L.fc_backward(cache, g)
        elif kind == "flatten":
            g = g.reshape(cache)
        elif kind == "pool":
            g = L.maxpool_backward(cache, g)
        elif kind == "relu":
            g = L.relu_backward(cache, g)
        elif kind == "bn":
            g, grads[f"{i}.bn.gamma"], grads[f"{i}.bn.beta"] = L.batchnorm_backward(cache, g)
        elif kind == "conv":
            g, grads[f"{i}.conv.weight"], grads[f"{i}.conv.bias"] = L.conv2d_backward(cache, g)
    return {k: grads[k] for k in model.params}


def predict_proba(model: Model, batch: np.ndarray) -> np.ndarray:
    return model_forward(model, batch, "infer")[0]


def save_checkpoint(model: Model, path, metadata: Optional[dict] = None) -> None:
    from .checkpoint import save_checkpoint as _save

    _save(model, path, metadata)


def load_checkpoint(path) -> Model:
    from .checkpoint import load_checkpoint as _load

    return _load(path)
