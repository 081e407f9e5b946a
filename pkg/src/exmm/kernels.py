"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``EXMM_PURE_PYTHON=1`` to force the fallback.
"""
import os

BACKEND = "python"

if not os.environ.get("EXMM_PURE_PYTHON"):
    try:
        from ._kernels import LRUCache, bucket_pair, hash64, mix64  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._kernels_py import LRUCache, bucket_pair, hash64, mix64  # noqa: F401

from ._kernels_py import MASK64  # noqa: F401,E402
