"""Picks the compiled kernels when they are built, else the numpy fallback.

Set PCNNRANK_PURE=1 to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("PCNNRANK_PURE") == "1":
    impl = _pykernels
else:
    try:
        from . import _ckernels as impl
    except ImportError:
        impl = _pykernels

BACKEND = "python" if impl is _pykernels else "cython"

gather_windows = impl.gather_windows
scatter_windows = impl.scatter_windows
pool_forward = impl.pool_forward
pool_backward = impl.pool_backward
