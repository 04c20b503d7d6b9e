"""Kernel backend selection.

The hot loops (tile compositing, trilinear gathers, plane deposits) have a
numba implementation and a pure-numpy one.  ``CYLSPLAT_BACKEND=numpy`` forces
the numpy path for the whole process; otherwise numba is used when it imports.
Every kernel entry point also takes an explicit ``backend=`` override so the
two paths can be compared side by side.
"""

import os

# numba caps set_num_threads() at NUMBA_NUM_THREADS, which defaults to the core
# count; raise the ceiling so ``--threads 8`` is honoured on small machines.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))
# prefer OpenMP / the builtin workqueue; old system TBB builds only emit warnings
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

_REQUESTED = os.environ.get("CYLSPLAT_BACKEND", "numba").strip().lower()

numba = None
if _REQUESTED != "numpy":
    try:
        import numba  # noqa: F811
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None

HAVE_NUMBA = numba is not None
DEFAULT_BACKEND = "numba" if HAVE_NUMBA else "numpy"


def resolve(backend=None):
    """Return the backend name to use for a call."""
    name = DEFAULT_BACKEND if backend is None else backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is disabled or missing")
    return name


def set_threads(n):
    """Set the worker thread count used by the parallel numba kernels."""
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if HAVE_NUMBA:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def get_threads():
    return numba.get_num_threads() if HAVE_NUMBA else 1


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or an identity decorator when disabled."""
    if not HAVE_NUMBA:
        def deco(fn):
            return fn
        return deco(args[0]) if args and callable(args[0]) else deco
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


prange = numba.prange if HAVE_NUMBA else range
