"""Backend selection for the hot kernels.

The compiled extension is preferred when importable; the numpy fallback is
always available. Selection happens once at import and can be forced with
the environment variable FURST_KERNELS=compiled|python, or temporarily with
the `use(...)` context manager (used by the benchmark and the twin tests).
"""

import os
from contextlib import contextmanager

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

COMPILED_AVAILABLE = _ckernels is not None

_BACKENDS = {"python": _pykernels}
if COMPILED_AVAILABLE:
    _BACKENDS["compiled"] = _ckernels


def _initial():
    want = os.environ.get("FURST_KERNELS", "auto")
    if want == "python":
        return _pykernels
    if want == "compiled":
        if not COMPILED_AVAILABLE:
            raise ImportError("FURST_KERNELS=compiled but furst._ckernels is not built")
        return _ckernels
    return _ckernels if COMPILED_AVAILABLE else _pykernels


_active = _initial()


def backend_name():
    return _active.BACKEND


def get(name):
    return _BACKENDS[name]


@contextmanager
def use(name):
    """Temporarily switch the active kernel backend (tests/benchmarks)."""
    global _active
    prev = _active
    _active = _BACKENDS[name]
    try:
        yield _active
    finally:
        _active = prev


def raster_tube(occ, delta, half, nx, ny, c, w):
    return _active.raster_tube(occ, delta, half, nx, ny, c, w)


def union_counts(tube_ptr, tube_cells, cell_ptr, cell_tubes):
    return _active.union_counts(tube_ptr, tube_cells, cell_ptr, cell_tubes)


def disc_counts(rowpref, ii, jj, r2):
    return _active.disc_counts(rowpref, ii, jj, r2)


def greedy_net(feat, sep):
    return _active.greedy_net(feat, sep)


def nonconc_counts(feat, radii):
    return _active.nonconc_counts(feat, radii)
