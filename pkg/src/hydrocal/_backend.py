"""Kernel selection.

The compiled extension is used when importable; set ``HYDROCAL_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("HYDROCAL_PURE_PYTHON", "").strip() not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = kernels.BACKEND


def available_backends():
    """Map backend name to kernel module for every backend importable here."""
    out = {"numpy": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
