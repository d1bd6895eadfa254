"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``PRISM_FORGE_PURE=1`` to force the Python fallback (useful for
benchmarks and for checking the two implementations against each other).
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PRISM_FORGE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py

GEOMETRIC = _kernels_py.GEOMETRIC
DYNAMIC = _kernels_py.DYNAMIC
STATUS_OK = _kernels_py.STATUS_OK
STATUS_DEGENERATE = _kernels_py.STATUS_DEGENERATE
STATUS_NONFINITE = _kernels_py.STATUS_NONFINITE

drive_mean = _impl.drive_mean
segment_product = _impl.segment_product
half_cycle = _impl.half_cycle
quat_axis = _impl.quat_axis
run_engine = _impl.run_engine


def python_backend():
    """The pure-Python kernel module, regardless of which one is active."""
    return _kernels_py


def compiled_backend():
    """The compiled kernel module, or ``None`` when it was not built."""
    try:
        from . import _ckernels
    except ImportError:  # pragma: no cover
        return None
    return _ckernels
