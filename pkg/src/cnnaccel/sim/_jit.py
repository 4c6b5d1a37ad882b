"""numba switch. Set CNNACCEL_DISABLE_NUMBA=1 to force the pure-numpy kernels."""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

NUMBA_DISABLED = os.environ.get("CNNACCEL_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
BACKENDS = ("numba", "numpy")


def njit(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and not NUMBA_DISABLED else "numpy"


def resolve_backend(name: str | None) -> str:
    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return name
