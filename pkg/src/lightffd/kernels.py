"""Backend selection for the hot kernels.

The compiled extension (``_ckernels``) is used when it imports; otherwise the
numpy fallback in ``_kernels_py`` is used. Set ``LIGHTFFD_KERNELS`` to
``python`` or ``compiled`` to force a choice at import time, or call
:func:`set_backend` at runtime. Both backends produce bitwise-identical
results.
"""
import logging
import os

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _kernels_py}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

BACKEND = None


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name):
    """Switch the module-level kernel functions to backend ``name``."""
    global BACKEND, _impl
    if name == "auto":
        name = "compiled" if "compiled" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}")
    _impl = _BACKENDS[name]
    BACKEND = name
    return name


def im2col3x3(x):
    return _impl.im2col3x3(np.ascontiguousarray(x))


def col2im3x3(cols, H, W):
    return _impl.col2im3x3(np.ascontiguousarray(cols), H, W)


def maxpool2x2_forward(x):
    return _impl.maxpool2x2_forward(np.ascontiguousarray(x))


def maxpool2x2_backward(d_out, idx, in_shape):
    return _impl.maxpool2x2_backward(np.ascontiguousarray(d_out), idx, tuple(in_shape))


_requested = os.environ.get("LIGHTFFD_KERNELS", "auto").strip().lower() or "auto"
try:
    set_backend(_requested)
except ValueError:
    log.warning("LIGHTFFD_KERNELS=%s unavailable, falling back to numpy kernels", _requested)
    set_backend("python")
