"""Backend switch for the hot propagation kernels.

Set ``QREFRIG_BACKEND=numpy`` to force the pure-numpy path (no JIT).  The
default is ``numba`` when it can be imported.
"""

import os
from typing import Any, Callable

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba_njit = None
    HAVE_NUMBA = False


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _numba_njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def _initial_backend() -> str:
    name = os.environ.get("QREFRIG_BACKEND", "numba" if HAVE_NUMBA else "numpy").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"QREFRIG_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


_BACKEND = _initial_backend()


def get_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> str:
    """Select the kernel backend at runtime; returns the previous one."""
    global _BACKEND
    name = name.lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _BACKEND = _BACKEND, name
    return previous
