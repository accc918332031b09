"""Dense dyadic-grid representation of delta-discretized plane sets.

The window is the fixed square [-4, 4]^2. At level k the grid has
(8 * 2^k)^2 cells of side delta = 2^-k; cell (i, j) is the half-open square
[-4 + i*delta, -4 + (i+1)*delta) x [-4 + j*delta, -4 + (j+1)*delta).
All measures are exact: count * delta^2. Balls, neighborhoods and tubes are
open (strict inequality at the radius) and are tested against cell centers,
so every count here is a deterministic integer.

CellSet keeps the sorted flat ids of the occupied cells; the dense boolean
grid is materialized on demand (instances hold hundreds of per-tube sets,
which must not each pin a full grid).
"""

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage, signal

from . import kernels
from .errors import InvalidParameter, InvalidRadius, RadiusBelowResolution

WINDOW_HALF = 4.0

_MAGIC_CELLS = b"FCS1"


@dataclass(frozen=True)
class Scale:
    """Discretization level k with delta = 2^-k on the fixed window."""

    k: int

    def __post_init__(self):
        if not (4 <= self.k <= 12):
            raise InvalidParameter(f"scale level k={self.k} outside supported range [4, 12]")

    @property
    def delta(self) -> float:
        return 2.0 ** (-self.k)

    @property
    def half(self) -> float:
        return WINDOW_HALF

    @property
    def n(self) -> int:
        """Cells per side: 8 * 2^k."""
        return 1 << (self.k + 3)

    def centers(self) -> np.ndarray:
        return -self.half + (np.arange(self.n) + 0.5) * self.delta

    def dyadic_radii(self, r_max: float = 2.0) -> list[float]:
        """Dyadic radii delta, 2*delta, ..., up to r_max."""
        out = []
        r = self.delta
        while r <= r_max * (1 + 1e-12):
            out.append(r)
            r *= 2.0
        return out


@dataclass(frozen=True)
class CellSet:
    """Immutable delta-discretized set: sorted flat ids over the grid."""

    scale: Scale
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.unique(np.asarray(self.cells, dtype=np.int64))
        if len(arr) and (arr[0] < 0 or arr[-1] >= self.scale.n * self.scale.n):
            raise InvalidParameter("cell ids outside the window grid")
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)

    # -- constructors ------------------------------------------------------

    @classmethod
    def empty(cls, scale: Scale) -> "CellSet":
        return cls(scale, np.zeros(0, dtype=np.int64))

    @classmethod
    def full(cls, scale: Scale) -> "CellSet":
        return cls(scale, np.arange(scale.n * scale.n, dtype=np.int64))

    @classmethod
    def from_dense(cls, scale: Scale, occ: np.ndarray) -> "CellSet":
        if occ.shape != (scale.n, scale.n):
            raise InvalidParameter("dense grid shape does not match the scale")
        return cls(scale, np.flatnonzero(occ.reshape(-1)))

    @classmethod
    def from_indices(cls, scale: Scale, ii, jj) -> "CellSet":
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        keep = (ii >= 0) & (ii < scale.n) & (jj >= 0) & (jj < scale.n)
        return cls(scale, ii[keep] * scale.n + jj[keep])

    @classmethod
    def from_points(cls, scale: Scale, xs, ys) -> "CellSet":
        """Cells containing the given points (half-open cells); points outside
        the window are dropped."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        ii = np.floor((xs + scale.half) / scale.delta).astype(np.int64)
        jj = np.floor((ys + scale.half) / scale.delta).astype(np.int64)
        return cls.from_indices(scale, ii, jj)

    # -- basic queries -----------------------------------------------------

    @property
    def cell_count(self) -> int:
        return len(self.cells)

    @property
    def measure(self) -> float:
        return self.cell_count * self.scale.delta**2

    def indices(self):
        return self.cells // self.scale.n, self.cells % self.scale.n

    def flat_ids(self) -> np.ndarray:
        """Row-major flat cell ids, ascending."""
        return self.cells

    def centers_of_occupied(self):
        ii, jj = self.indices()
        d, h = self.scale.delta, self.scale.half
        return -h + (ii + 0.5) * d, -h + (jj + 0.5) * d

    def is_empty(self) -> bool:
        return self.cell_count == 0

    @property
    def occupancy(self) -> np.ndarray:
        """Dense boolean grid (materialized fresh on every access)."""
        occ = np.zeros(self.scale.n * self.scale.n, dtype=bool)
        occ[self.cells] = True
        return occ.reshape(self.scale.n, self.scale.n)

    def contains_cell(self, i: int, j: int) -> bool:
        flat = i * self.scale.n + j
        pos = np.searchsorted(self.cells, flat)
        return pos < len(self.cells) and self.cells[pos] == flat

    # -- set algebra (same scale) ------------------------------------------

    def _check_scale(self, other: "CellSet"):
        if other.scale.k != self.scale.k:
            raise InvalidParameter("cell sets live on different grids")

    def union(self, other: "CellSet") -> "CellSet":
        self._check_scale(other)
        return CellSet(self.scale, np.union1d(self.cells, other.cells))

    def intersection(self, other: "CellSet") -> "CellSet":
        self._check_scale(other)
        return CellSet(self.scale, np.intersect1d(self.cells, other.cells, assume_unique=True))

    def difference(self, other: "CellSet") -> "CellSet":
        self._check_scale(other)
        return CellSet(self.scale, np.setdiff1d(self.cells, other.cells, assume_unique=True))

    def issubset(self, other: "CellSet") -> bool:
        self._check_scale(other)
        pos = np.searchsorted(other.cells, self.cells)
        pos = np.minimum(pos, max(len(other.cells) - 1, 0))
        if len(other.cells) == 0:
            return len(self.cells) == 0
        return bool((other.cells[pos] == self.cells).all())

    @classmethod
    def union_all(cls, scale: Scale, parts) -> "CellSet":
        arrays = [p.cells for p in parts]
        if not arrays:
            return cls.empty(scale)
        return cls(scale, np.concatenate(arrays))

    def __eq__(self, other):
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.scale.k == other.scale.k and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.scale.k, self.cell_count))

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        header = struct.pack("<4sBB", _MAGIC_CELLS, 1, self.scale.k)
        payload = np.packbits(self.occupancy.reshape(-1)).tobytes()
        return header + payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CellSet":
        magic, version, k = struct.unpack_from("<4sBB", blob, 0)
        if magic != _MAGIC_CELLS or version != 1:
            raise InvalidParameter("not a CellSet blob")
        scale = Scale(k)
        bits = np.unpackbits(
            np.frombuffer(blob, dtype=np.uint8, offset=6), count=scale.n * scale.n
        )
        return cls(scale, np.flatnonzero(bits))

    def to_json_obj(self) -> dict:
        ii, jj = self.indices()
        return {"k": self.scale.k, "cells": [[int(a), int(b)] for a, b in zip(ii, jj)]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CellSet":
        scale = Scale(int(obj["k"]))
        cells = obj["cells"]
        if cells:
            ii, jj = zip(*cells)
        else:
            ii, jj = [], []
        return cls.from_indices(scale, list(ii), list(jj))

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> "CellSet":
        return cls.from_json_obj(json.loads(text))


@dataclass(frozen=True)
class MeasureReport:
    cell_count: int
    lebesgue: float
    covering_numbers: dict


def measure(a: CellSet) -> float:
    """Exact Lebesgue measure: cell count times delta^2."""
    return a.measure


def neighborhood(a: CellSet, r: float) -> CellSet:
    """Cells whose center is within (strictly) r + delta of some occupied
    cell center, clipped to the window. Contains `a`."""
    s = a.scale
    if r < s.delta:
        raise RadiusBelowResolution(f"r={r} below delta={s.delta}")
    if r > 2 * s.half:
        raise InvalidParameter(f"r={r} exceeds window size")
    if a.is_empty():
        return a
    reach = r + s.delta
    rad_cells = int(np.floor(reach / s.delta)) + 1
    d = np.arange(-rad_cells, rad_cells + 1, dtype=np.float64) * s.delta
    foot = (d[:, None] ** 2 + d[None, :] ** 2) < reach * reach

    n = s.n
    foot_size = int(foot.sum())
    if a.cell_count * foot_size <= 4 * n * n:
        # sparse path: occupied ids shifted by every footprint offset
        di, dj = np.nonzero(foot)
        di -= rad_cells
        dj -= rad_cells
        ii, jj = a.indices()
        oi = (ii[:, None] + di[None, :]).reshape(-1)
        oj = (jj[:, None] + dj[None, :]).reshape(-1)
        return CellSet.from_indices(s, oi, oj)
    occ = a.occupancy
    if rad_cells <= 32:
        out = ndimage.binary_dilation(occ, structure=foot)
    else:
        conv = signal.fftconvolve(occ.astype(np.float64), foot.astype(np.float64), mode="same")
        out = conv > 0.5
    return CellSet.from_dense(s, out)


def covering_number(a: CellSet, rho: float) -> int:
    """Number of canonical dyadic rho-squares meeting `a`."""
    s = a.scale
    t = rho / s.delta
    m = int(round(np.log2(t))) if t > 0 else -1
    if m < 0 or m > s.k + 3 or t != float(1 << m):
        raise InvalidRadius(f"rho={rho} is not a dyadic multiple of delta in [delta, 8]")
    if a.is_empty():
        return 0
    ii, jj = a.indices()
    nb = s.n >> m
    return len(np.unique((ii >> m) * nb + (jj >> m)))


def ball_count(a: CellSet, center, r: float) -> float:
    """Measure of `a` restricted to cells whose center lies in the open
    disc B(center, r)."""
    if r < 0:
        raise InvalidParameter("negative radius")
    x0, y0 = float(center[0]), float(center[1])
    cx, cy = a.centers_of_occupied()
    cnt = int(((cx - x0) ** 2 + (cy - y0) ** 2 < r * r).sum())
    return cnt * a.scale.delta**2


def rasterize_tube(ell, width: float, s: Scale) -> CellSet:
    """Cells whose center is within (strictly) `width` of the line, clipped
    to the window. `ell` must expose normal_form() -> (nx, ny, c) with the
    line {p : p.(nx,ny) = c} and (nx,ny) unit."""
    if width < s.delta:
        raise RadiusBelowResolution(f"width={width} below delta={s.delta}")
    nx, ny, c = ell.normal_form()
    occ = np.zeros((s.n, s.n), dtype=bool)
    kernels.raster_tube(_as_kernel_grid(occ), s.delta, s.half, nx, ny, c, width)
    return CellSet.from_dense(s, occ)


def _as_kernel_grid(occ: np.ndarray):
    # the compiled kernel wants uint8; the numpy one works on the bool view
    if kernels.backend_name() == "compiled":
        return occ.view(np.uint8)
    return occ


def strip_cells(a: CellSet, ell, width: float) -> np.ndarray:
    """Boolean mask over a's occupied cells: center strictly within `width`
    of the line."""
    nx, ny, c = ell.normal_form()
    cx, cy = a.centers_of_occupied()
    return np.abs(cx * nx + cy * ny - c) < width


def measure_report(a: CellSet) -> MeasureReport:
    rhos = a.scale.dyadic_radii(r_max=2 * a.scale.half)
    return MeasureReport(
        cell_count=a.cell_count,
        lebesgue=a.measure,
        covering_numbers={r: covering_number(a, r) for r in rhos},
    )


def row_prefix(a: CellSet) -> np.ndarray:
    """Per-column prefix sums used by the disc-count kernels:
    out[i, j] = occupied cells in occupancy[:i, j]."""
    n = a.scale.n
    out = np.zeros((n + 1, n), dtype=np.int64)
    np.cumsum(a.occupancy, axis=0, out=out[1:])
    return out


def disc_cell_counts(a: CellSet, ii, jj, r: float) -> np.ndarray:
    """Occupied-cell counts of `a` in open discs of radius `r` around the
    cell centers (ii, jj). Exact: center-to-center distances are delta times
    an integer lattice norm, so the strict test is integer arithmetic
    (d^2 <= ceil((r/delta)^2) - 1)."""
    r2 = int(np.ceil((r / a.scale.delta) ** 2 - 1e-9)) - 1
    pref = row_prefix(a)
    return kernels.disc_counts(
        pref, np.asarray(ii, dtype=np.int64), np.asarray(jj, dtype=np.int64), r2
    )


# ---------------------------------------------------------------------------
# 1-d sets (used by the projective product structure and its refinement)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalSet:
    """Dyadic 1-d cell set on [-4, 4]: cell i = [-4 + i*h, -4 + (i+1)*h)."""

    level: int
    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (0 <= self.level <= 20):
            raise InvalidParameter(f"interval level {self.level} out of range")
        occ = np.ascontiguousarray(self.occupancy, dtype=bool)
        if occ.shape != (self.n,):
            raise InvalidParameter("occupancy length does not match level")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def h(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def n(self) -> int:
        return 1 << (self.level + 3)

    @property
    def half(self) -> float:
        return WINDOW_HALF

    @classmethod
    def empty(cls, level: int) -> "IntervalSet":
        return cls(level, np.zeros(1 << (level + 3), dtype=bool))

    @classmethod
    def from_indices(cls, level: int, ii) -> "IntervalSet":
        occ = np.zeros(1 << (level + 3), dtype=bool)
        ii = np.asarray(ii, dtype=np.int64)
        keep = (ii >= 0) & (ii < occ.size)
        occ[ii[keep]] = True
        return cls(level, occ)

    @cached_property
    def cell_count(self) -> int:
        return int(self.occupancy.sum())

    @property
    def measure(self) -> float:
        return self.cell_count * self.h

    def indices(self) -> np.ndarray:
        return np.nonzero(self.occupancy)[0].astype(np.int64)

    def centers_of_occupied(self) -> np.ndarray:
        return -self.half + (self.indices() + 0.5) * self.h

    def is_empty(self) -> bool:
        return self.cell_count == 0

    def union(self, other: "IntervalSet") -> "IntervalSet":
        if other.level != self.level:
            raise InvalidParameter("interval sets live on different grids")
        return IntervalSet(self.level, self.occupancy | other.occupancy)

    def issubset(self, other: "IntervalSet") -> bool:
        if other.level != self.level:
            raise InvalidParameter("interval sets live on different grids")
        return not (self.occupancy & ~other.occupancy).any()

    def dilate(self, r: float) -> "IntervalSet":
        """Cells whose center is strictly within r + h of an occupied
        center."""
        if self.is_empty():
            return self
        reach = int(np.ceil((r + self.h) / self.h - 1e-12)) - 1
        occ = self.occupancy.copy()
        for d in range(1, reach + 1):
            occ[d:] |= self.occupancy[:-d]
            occ[:-d] |= self.occupancy[d:]
        return IntervalSet(self.level, occ)

    def interval_counts(self, centers_idx, r: float) -> np.ndarray:
        """Occupied-cell counts in open center-distance-r windows."""
        reach = int(np.ceil(r / self.h - 1e-9)) - 1
        pref = np.concatenate([[0], np.cumsum(self.occupancy)]).astype(np.int64)
        idx = np.asarray(centers_idx, dtype=np.int64)
        lo = np.maximum(idx - reach, 0)
        hi = np.minimum(idx + reach + 1, self.n)
        return pref[hi] - pref[lo]

    def to_json_obj(self) -> dict:
        return {"level": self.level, "cells": [int(i) for i in self.indices()]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "IntervalSet":
        return cls.from_indices(int(obj["level"]), obj["cells"])
