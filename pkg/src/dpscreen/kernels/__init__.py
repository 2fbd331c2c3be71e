"""Hot inner loops, compiled with numba when available.

Two interchangeable implementations live side by side:

* ``_numba``  -- explicit loops under ``@njit``
* ``_numpy``  -- pure numpy, vectorised over clusters / rows

The backend is picked once at import time from ``DPSCREEN_BACKEND``
(``numba`` or ``numpy``; default ``numba``).  If numba cannot be imported the
numpy path is used silently.  Both modules expose the same functions with the
same signatures so callers never branch on the backend.
"""

import os

_requested = os.environ.get("DPSCREEN_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(
        "DPSCREEN_BACKEND must be 'numba' or 'numpy', got %r" % _requested)

if _requested == "numba":
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is optional
        from . import _numpy as _impl
        BACKEND = "numpy"
else:
    from . import _numpy as _impl
    BACKEND = "numpy"

alloc_sweep_1d = _impl.alloc_sweep_1d
alloc_sweep_2d = _impl.alloc_sweep_2d
mixture_density_1d = _impl.mixture_density_1d
mixture_density_2d = _impl.mixture_density_2d
trace_log_bf = _impl.trace_log_bf
knn_counts = _impl.knn_counts


def available_backends():
    """Names of the kernel backends importable in this interpreter."""
    names = ["numpy"]
    try:
        from . import _numba  # noqa: F401
        names.insert(0, "numba")
    except ImportError:  # pragma: no cover
        pass
    return names


def get_backend(name):
    """Return the kernel module for ``name`` regardless of the env flag."""
    if name == "numba":
        from . import _numba
        return _numba
    if name == "numpy":
        from . import _numpy
        return _numpy
    raise ValueError("unknown backend %r" % name)


__all__ = [
    "BACKEND",
    "alloc_sweep_1d",
    "alloc_sweep_2d",
    "mixture_density_1d",
    "mixture_density_2d",
    "trace_log_bf",
    "knn_counts",
    "available_backends",
    "get_backend",
]
