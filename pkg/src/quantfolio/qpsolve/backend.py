"""Kernel backend selection.

The compiled extension is preferred when importable; setting the
environment variable ``QUANTFOLIO_PURE_PYTHON`` (to anything non-empty)
forces the numpy fallback. ``benchmarks/bench_kernels.py`` compares the
two on representative problems.
"""

import os

from . import _kernels_py

if os.environ.get("QUANTFOLIO_PURE_PYTHON"):
    _active = _kernels_py
else:
    try:
        from . import _kernels as _active  # type: ignore[attr-defined]
    except ImportError:
        _active = _kernels_py

BACKEND_NAME = _active.BACKEND


def active_kernels():
    return _active


def python_kernels():
    return _kernels_py
