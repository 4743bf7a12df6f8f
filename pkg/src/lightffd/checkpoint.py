"""Binary checkpoint format (``.lffd``).

Layout, all integers unsigned 32-bit little-endian::

    b"LFFD" | format version | header length in bytes | header | payload

The header is UTF-8 JSON holding the architecture id, BN settings, training
metadata and a tensor directory (name, shape, byte offset into the payload,
byte length). The payload is the raw float32 little-endian data of every
tensor, in directory order. Parameters come first, then BN running
statistics. Within a tensor, elements are row-major; FC weights are K x D
with D enumerated channel-major (c, y, x) over the last feature map.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointCorruptError, UnknownArchitectureError
from .models import Model, build_arch

MAGIC = b"LFFD"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_STORE_DTYPE = np.dtype("<f4")


def _encode(model: Model, metadata: dict | None) -> bytes:
    directory = []
    chunks = []
    offset = 0
    for name, arr in list(model.params.items()) + list(model.buffers.items()):
        raw = np.ascontiguousarray(arr, dtype=_STORE_DTYPE).tobytes()
        directory.append({"name": name, "shape": list(arr.shape),
                          "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    meta = dict(model.metadata)
    if metadata:
        meta.update(metadata)
    header = {
        "architecture": model.spec.arch_id,
        "seed": int(model.seed),
        "bn_momentum": model.bn_momentum,
        "bn_epsilon": model.bn_epsilon,
        "tensors": directory,
        "payload_bytes": offset,
        "metadata": meta,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(head)), head] + chunks)


def save_checkpoint(model: Model, path, metadata: dict | None = None) -> None:
    """Write ``model`` to ``path``. Tensors are stored as float32."""
    blob = _encode(model, metadata)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> Model:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointCorruptError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(blob, source=str(path))


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Model:
    def corrupt(msg):
        return CheckpointCorruptError(f"{source}: {msg}")

    if len(blob) < 12 or blob[:4] != MAGIC:
        raise corrupt("missing LFFD magic bytes")
    (version,) = _U32.unpack_from(blob, 4)
    if version != FORMAT_VERSION:
        raise corrupt(f"unsupported format version {version}")
    (head_len,) = _U32.unpack_from(blob, 8)
    start = 12 + head_len
    if start > len(blob):
        raise corrupt("truncated header")
    try:
        header = json.loads(blob[12:start].decode("utf-8"))
        arch_id = header["architecture"]
        directory = header["tensors"]
        payload_bytes = int(header["payload_bytes"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise corrupt(f"malformed header ({exc})") from exc
    if len(blob) - start != payload_bytes:
        raise corrupt(f"payload is {len(blob) - start} bytes, header says {payload_bytes}")
    try:
        spec = build_arch(arch_id)
    except UnknownArchitectureError as exc:
        raise corrupt(str(exc)) from exc
    if spec.arch_id != arch_id:
        raise corrupt(f"architecture id {arch_id!r} is not canonical")

    expected = dict(spec.param_shapes())
    expected.update(spec.buffer_shapes())
    tensors = {}
    for entry in directory:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected:
            raise corrupt(f"unexpected tensor {name!r} for {arch_id}")
        if shape != expected[name]:
            raise corrupt(f"tensor {name!r} has shape {shape}, {arch_id} needs {expected[name]}")
        off, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if nbytes != int(np.prod(shape)) * _STORE_DTYPE.itemsize or off < 0 \
                or off + nbytes > payload_bytes:
            raise corrupt(f"tensor {name!r} has an inconsistent directory entry")
        data = np.frombuffer(blob, dtype=_STORE_DTYPE, count=nbytes // 4, offset=start + off)
        tensors[name] = data.reshape(shape).astype(np.float32)
    missing = set(expected) - set(tensors)
    if missing:
        raise corrupt(f"missing tensors {sorted(missing)}")

    param_names = list(spec.param_shapes())
    buffer_names = list(spec.buffer_shapes())
    return Model(
        spec=spec,
        params={k: tensors[k] for k in param_names},
        buffers={k: tensors[k] for k in buffer_names},
        seed=int(header.get("seed", 0)),
        bn_momentum=float(header.get("bn_momentum", 0.1)),
        bn_epsilon=float(header.get("bn_epsilon", 1e-5)),
        metadata=dict(header.get("metadata", {})),
    )
