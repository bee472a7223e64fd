"""Backend selection for the trajectory-ensemble kernels.

Two implementations of the same kernel API:

    numba  -- jit-compiled, parallel over trajectories (default when importable)
    numpy  -- pure vectorized fallback, always available

Select explicitly via get_backend("numpy"), or globally with the environment
variable SPINKICK_BACKEND=numpy|numba.  Both backends follow the same
two-stage matrix-multiply association, so their results agree to rounding
noise (~1e-13); within one backend results are bitwise reproducible for a
fixed seed regardless of worker count.
"""

from __future__ import annotations

import os

__all__ = ["get_backend", "available_backends", "default_backend_name", "set_jobs"]

_ENV_VAR = "SPINKICK_BACKEND"


def _try_numba():
    try:
        from . import numba_backend

        return numba_backend
    except ImportError:
        return None


def available_backends() -> list[str]:
    names = []
    if _try_numba() is not None:
        names.append("numba")
    names.append("numpy")
    return names


def default_backend_name() -> str:
    env = os.environ.get(_ENV_VAR)
    if env:
        return env
    return "numba" if _try_numba() is not None else "numpy"


def get_backend(name: str | None = None):
    """Return the kernel module for the requested (or default) backend."""
    name = name or default_backend_name()
    if name == "numpy":
        from . import numpy_backend

        return numpy_backend
    if name == "numba":
        mod = _try_numba()
        if mod is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return mod
    raise ValueError(f"unknown backend {name!r}, expected 'numba' or 'numpy'")


def set_jobs(n_jobs: int) -> int:
    """Set the worker count for the numba backend; returns the effective count.

    Clamped to the thread budget numba established at import; a no-op for the
    numpy backend.  Results never depend on this value.
    """
    if n_jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {n_jobs}")
    mod = _try_numba()
    if mod is None:
        return 1
    import numba

    effective = min(n_jobs, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(effective)
    return effective
