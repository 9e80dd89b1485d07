"""Kernel backend selection.

The compiled extension is preferred; set ``FLSIM_PURE=1`` to force the numpy
fallback (the benchmark and the backend-equivalence tests do this).
"""
import os

from . import _kernels_py

BACKEND = "python"
_compiled = None

if os.environ.get("FLSIM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py

gram = _impl.gram
row_sqdist = _impl.row_sqdist
sgd_epoch = _impl.sgd_epoch
mst_prim = _impl.mst_prim


def backends():
    """Mapping of available backend name to kernel module."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
