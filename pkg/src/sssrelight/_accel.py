"""Kernel backend selection.

Hot inner loops exist twice: a numba @njit version (_kernels_nb) and a
vectorized pure-numpy version (_kernels_np) with identical signatures and
bit-identical arithmetic. The numba path is the default whenever numba
imports; set SSSRELIGHT_NO_NUMBA=1 to force the numpy path (useful for
debugging and as the reference in benchmarks/kernel_bench.py).
"""

import os

ENV_FLAG = "SSSRELIGHT_NO_NUMBA"


def _disabled_by_env() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


NUMBA_AVAILABLE = False
if not _disabled_by_env():
    try:
        import numba  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def get_kernels():
    """Return the active kernel module (frozen at first import per env flag)."""
    if USE_NUMBA:
        from . import _kernels_nb

        return _kernels_nb
    from . import _kernels_np

    return _kernels_np
