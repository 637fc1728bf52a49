"""Convolution kernels with a compiled core and a numpy fallback.

The compiled extension (`airbone._kernels._ext`, Cython + OpenMP) is used
when it imported cleanly; otherwise the vectorized numpy implementation
takes over. Force a choice with AIRBONE_BACKEND={auto,ext,numpy}.

Both backends implement the same four entry points and agree to float
rounding; `benchmarks/bench_kernels.py` compares their throughput.
"""

import importlib
import os

from airbone._kernels import _numpy_impl

_ext = None
if os.environ.get("AIRBONE_BACKEND", "auto") != "numpy":
    try:
        _ext = importlib.import_module("airbone._kernels._ext")
    except ImportError:
        _ext = None
        if os.environ.get("AIRBONE_BACKEND") == "ext":
            raise ImportError(
                "AIRBONE_BACKEND=ext requested but the compiled extension "
                "is not available; reinstall with a working C toolchain")

_impl = _ext if _ext is not None else _numpy_impl


def backend_name() -> str:
    return "ext" if _impl is _ext and _ext is not None else "numpy"


def get_impl(name: str | None = None):
    """Return the kernel module for `name` (default: the selected backend)."""
    if name in (None, "auto"):
        return _impl
    if name == "numpy":
        return _numpy_impl
    if name == "ext":
        if _ext is None:
            raise ImportError("compiled kernel extension not available")
        return _ext
    raise ValueError(f"unknown backend {name!r}")


conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
