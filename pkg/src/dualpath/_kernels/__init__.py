"""Kernel backend selection.

The hot kernels (barrier term-table evaluation and the per-block Newton
solve) exist twice: a Cython extension and a pure-numpy twin with
identical semantics.  The compiled backend is used when importable;
``DUALPATH_BACKEND=python`` (or ``cython``) forces the choice.
"""
from __future__ import annotations

import os

from . import py_backend
from .tables import TermTable  # noqa: F401  (re-export)

_requested = os.environ.get("DUALPATH_BACKEND", "").strip().lower()

if _requested in ("python", "py"):
    impl = py_backend
elif _requested in ("cython", "cy", "c"):
    from . import cy_backend as impl  # hard failure if unavailable: explicit request
else:
    try:
        from . import cy_backend as impl
    except ImportError:
        impl = py_backend

BACKEND = impl.NAME


def backend_name():
    return BACKEND
