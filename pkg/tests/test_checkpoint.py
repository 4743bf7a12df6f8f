import json
import struct

import numpy as np
import pytest

from lightffd.checkpoint import MAGIC, decode_checkpoint, load_checkpoint, save_checkpoint
from lightffd.errors import CheckpointCorruptError
from lightffd.models import build_arch, init_params, model_forward, param_count


@pytest.fixture
def small_model():
    model = init_params(build_arch("v2", 32), 11)
    for name in model.buffers:  # non-trivial running stats
        model.buffers[name] += np.float32(0.25)
    return model


def test_round_trip_is_bitwise(tmp_path, small_model, rng):
    path = tmp_path / "m.lffd"
    save_checkpoint(small_model, path, {"epochs": 3})
    loaded = load_checkpoint(path)
    assert loaded.spec == small_model.spec
    for store in ("params", "buffers"):
        a, b = getattr(small_model, store), getattr(loaded, store)
        assert list(a) == list(b)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert loaded.metadata["epochs"] == 3
    x = rng.random((4, 3, 32, 32), dtype=np.float32)
    assert model_forward(small_model, x)[0].tobytes() == model_forward(loaded, x)[0].tobytes()


def test_full_v1_round_trip_keeps_param_count(tmp_path):
    model = init_params(build_arch("v1"), 0)
    save_checkpoint(model, tmp_path / "v1.lffd")
    assert param_count(load_checkpoint(tmp_path / "v1.lffd")) == 813_090


def test_header_layout(tmp_path, small_model):
    path = tmp_path / "m.lffd"
    save_checkpoint(small_model, path)
    blob = path.read_bytes()
    assert blob[:4] == MAGIC
    version, head_len = struct.unpack_from("<II", blob, 4)
    header = json.loads(blob[12:12 + head_len].decode("utf-8"))
    assert version == 1 and header["architecture"] == "lightffdnet-v2-r32"
    first = header["tensors"][0]
    raw = np.frombuffer(blob, "<f4", count=first["nbytes"] // 4, offset=12 + head_len + first["offset"])
    np.testing.assert_array_equal(raw.reshape(first["shape"]), small_model.params[first["name"]])


def test_save_is_deterministic(tmp_path, small_model):
    save_checkpoint(small_model, tmp_path / "a.lffd")
    save_checkpoint(small_model, tmp_path / "b.lffd")
    assert (tmp_path / "a.lffd").read_bytes() == (tmp_path / "b.lffd").read_bytes()


def test_truncated_file(tmp_path, small_model):
    path = tmp_path / "m.lffd"
    save_checkpoint(small_model, path)
    blob = path.read_bytes()
    for cut in (3, 11, 40, len(blob) - 1):
        path.write_bytes(blob[:cut])
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)


def _rewrite_header(blob, edit):
    head_len = struct.unpack_from("<I", blob, 8)[0]
    header = json.loads(blob[12:12 + head_len])
    edit(header)
    head = json.dumps(header).encode()
    return blob[:8] + struct.pack("<I", len(head)) + head + blob[12 + head_len:]


def test_corrupt_headers(small_model, tmp_path):
    path = tmp_path / "m.lffd"
    save_checkpoint(small_model, path)
    blob = path.read_bytes()
    with pytest.raises(CheckpointCorruptError, match="version"):
        decode_checkpoint(blob[:4] + struct.pack("<I", 99) + blob[8:])
    with pytest.raises(CheckpointCorruptError, match="magic"):
        decode_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(_rewrite_header(blob, lambda h: h.update(architecture="lightffdnet-v1-r32")))
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(_rewrite_header(blob, lambda h: h.update(architecture="resnet")))

    def bad_shape(h):
        h["tensors"][0]["shape"] = [1, 2, 3]
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(_rewrite_header(blob, bad_shape))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointCorruptError):
        load_checkpoint(tmp_path / "nope.lffd")
