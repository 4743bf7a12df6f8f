import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lightffd import kernels  # noqa: E402
from lightffd.data import DatasetManifest, scan_dataset, write_synthetic_dataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def overfit_manifest(root, size=32):
    """16 training images (8 per class) plus 2 val and 2 test images per class."""
    write_synthetic_dataset(root, per_class=12, size=size, seed=7)
    m = scan_dataset(root)
    records = []
    for r in m.records:
        idx = int(r.path.rsplit("_", 1)[1].split(".")[0])
        split = "train" if idx < 8 else ("val" if idx < 10 else "test")
        records.append(replace(r, split=split))
    return DatasetManifest(records, m.class_names, m.root)


@pytest.fixture
def tiny_manifest(tmp_path):
    return overfit_manifest(tmp_path / "synthetic")


def pytest_terminal_summary(terminalreporter):
    results = sys.modules.get("test_acceptance")
    lines = getattr(results, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
