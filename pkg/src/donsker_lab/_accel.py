"""Backend selection for the hot kernels.

Set ``DONSKER_LAB_NO_NUMBA=1`` to force the pure-numpy kernels. The default
thread count for numba's parallel loops comes from ``DONSKER_LAB_THREADS``.
"""
import os

_FALSY = ("", "0", "false", "no", "off")


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


try:
    import numba

    HAVE_NUMBA = True
    # the bundled TBB is too old for numba; skip straight to the other layers
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _flag("DONSKER_LAB_NO_NUMBA")

numba_default = {"nogil": True, "cache": True, "fastmath": False}
numba_parallel = dict(numba_default, parallel=True)


def set_threads(n):
    """Set the numba worker count, clamped to what the runtime allows.

    Thread count never changes results: every kernel writes one output slot
    per path and reductions happen afterwards in fixed order.
    """
    if not HAVE_NUMBA or n is None:
        return 1
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


_env_threads = os.environ.get("DONSKER_LAB_THREADS")
if _env_threads:
    set_threads(_env_threads)
