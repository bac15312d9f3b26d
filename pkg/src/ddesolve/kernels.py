"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``DDE_SOLVE_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("DDE_SOLVE_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl

        BACKEND = "python"

rk_stages = _impl.rk_stages
combine = _impl.combine
error_norm = _impl.error_norm
dense_eval = _impl.dense_eval
cubic_uniform = _impl.cubic_uniform

__all__ = ["BACKEND", "rk_stages", "combine", "error_norm", "dense_eval", "cubic_uniform"]
