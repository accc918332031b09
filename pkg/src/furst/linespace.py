"""The space of affine lines in the plane: parametrizations, the metric,
separated nets and non-concentration checks.

A line is stored as (theta, s) with direction e = (cos theta, sin theta),
theta in [0, pi), unit normal n = (-sin theta, cos theta) and foot vector
v = s * n (the point of the line closest to the origin). The metric is

    d(l1, l2) = |sgn(s1) e1 - sgn(s2) e2| + |v1 - v2|,

i.e. the direction representative is oriented consistently with the dual
point v/|v|^2. With this orientation the distance agrees exactly with the
explicit dual-point formula (see dual_distance); lines through the origin
take the + orientation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import InvalidParameter, NoDualRepresentation, NoSlopeIntercept
from .grid import CellSet, Scale, rasterize_tube


@dataclass(frozen=True)
class Line:
    theta: float
    s: float

    def __post_init__(self):
        t = float(self.theta)
        s = float(self.s)
        if not math.isfinite(t) or not math.isfinite(s):
            raise InvalidParameter("non-finite line parameters")
        # fold theta into [0, pi); each half-turn flips the offset sign
        turns = math.floor(t / math.pi)
        t = t - turns * math.pi
        if t >= math.pi:  # guard the rounding edge t == pi
            t -= math.pi
            turns += 1
        if turns % 2:
            s = -s
        object.__setattr__(self, "theta", t)
        object.__setattr__(self, "s", s)

    # -- geometry ------------------------------------------------------------

    def direction(self):
        return math.cos(self.theta), math.sin(self.theta)

    def normal(self):
        return -math.sin(self.theta), math.cos(self.theta)

    def foot(self):
        nx, ny = self.normal()
        return self.s * nx, self.s * ny

    def normal_form(self):
        """(nx, ny, c) with the line {p : p.(nx,ny) = c}, (nx,ny) unit."""
        nx, ny = self.normal()
        return nx, ny, self.s

    def feature(self) -> np.ndarray:
        """(sgn(s)*e, v) row used by the metric kernels."""
        ex, ey = self.direction()
        vx, vy = self.foot()
        sg = 1.0 if self.s >= 0 else -1.0
        return np.array([sg * ex, sg * ey, vx, vy])

    def point_distance(self, p) -> float:
        nx, ny, c = self.normal_form()
        return abs(p[0] * nx + p[1] * ny - c)

    def meets_ball(self, center, r: float) -> bool:
        """Whether the line meets the open ball B(center, r)."""
        return self.point_distance(center) < r

    def point_at(self, t: float):
        """foot + t * direction."""
        ex, ey = self.direction()
        vx, vy = self.foot()
        return vx + t * ex, vy + t * ey

    def translate(self, dx: float, dy: float) -> "Line":
        """The line translated by (dx, dy)."""
        nx, ny = self.normal()
        return Line(self.theta, self.s + dx * nx + dy * ny)

    def rotate(self, phi: float) -> "Line":
        """The line rotated about the origin by phi."""
        return Line(self.theta + phi, self.s)

    # -- constructors ----------------------------------------------------------

    @classmethod
    def from_two_points(cls, p, q) -> "Line":
        dx, dy = q[0] - p[0], q[1] - p[1]
        if dx == 0.0 and dy == 0.0:
            raise InvalidParameter("coincident points do not determine a line")
        theta = math.atan2(dy, dx)
        nx, ny = -math.sin(theta), math.cos(theta)
        return cls(theta, p[0] * nx + p[1] * ny)

    @classmethod
    def vertical(cls, x: float) -> "Line":
        return cls(math.pi / 2, -x)

    @classmethod
    def horizontal(cls, y: float) -> "Line":
        return cls(0.0, y)

    # -- conversions -----------------------------------------------------------

    def to_slope_intercept(self) -> "SlopeIntercept":
        sn = math.sin(self.theta)
        if sn == 0.0:
            raise NoSlopeIntercept("horizontal line has no x = a*y + b form")
        return SlopeIntercept(math.cos(self.theta) / sn, -self.s / sn)

    def to_dual(self) -> "DualPoint":
        if self.s == 0.0:
            raise NoDualRepresentation("line through the origin has no dual point")
        nx, ny = self.normal()
        return DualPoint(nx / self.s, ny / self.s)


@dataclass(frozen=True)
class SlopeIntercept:
    """The line {(x, y) : x = a*y + b}."""

    a: float
    b: float

    def to_line(self) -> Line:
        theta = math.atan2(1.0, self.a)
        norm = math.sqrt(1.0 + self.a * self.a)
        return Line(theta, -self.b / norm)

    def to_dual(self) -> DualPoint:
        if self.b == 0.0:
            raise NoDualRepresentation("line through the origin has no dual point")
        return DualPoint(1.0 / self.b, -self.a / self.b)


@dataclass(frozen=True)
class DualPoint:
    """v != 0 encoding the line {x : x.v = 1}."""

    vx: float
    vy: float

    def __post_init__(self):
        if self.vx == 0.0 and self.vy == 0.0:
            raise NoDualRepresentation("zero vector is not a dual point")

    @property
    def norm(self) -> float:
        return math.sqrt(self.vx * self.vx + self.vy * self.vy)

    def to_line(self) -> Line:
        r = self.norm
        ux, uy = self.vx / r, self.vy / r
        return Line(math.atan2(-ux, uy), 1.0 / r)

    def to_slope_intercept(self) -> SlopeIntercept:
        if self.vx == 0.0:
            raise NoSlopeIntercept("horizontal line has no x = a*y + b form")
        return SlopeIntercept(-self.vy / self.vx, 1.0 / self.vx)


def line_distance(l1: Line, l2: Line) -> float:
    """The line-space metric (orientation tied to the dual point, so this
    agrees with dual_distance wherever duals exist)."""
    f1, f2 = l1.feature(), l2.feature()
    return float(
        math.sqrt((f1[0] - f2[0]) ** 2 + (f1[1] - f2[1]) ** 2)
        + math.sqrt((f1[2] - f2[2]) ** 2 + (f1[3] - f2[3]) ** 2)
    )


def line_distance_geometric(l1: Line, l2: Line) -> float:
    """Orientation-free variant: min over direction signs of |e1 - e2| plus
    the foot gap. Dominated by line_distance; used for the intersection-
    geometry diagnostics, where the dual-consistent orientation would
    inflate distances across the origin."""
    e1x, e1y = l1.direction()
    e2x, e2y = l2.direction()
    v1x, v1y = l1.foot()
    v2x, v2y = l2.foot()
    de = min(
        math.hypot(e1x - e2x, e1y - e2y),
        math.hypot(e1x + e2x, e1y + e2y),
    )
    return de + math.hypot(v1x - v2x, v1y - v2y)


def dual_distance(v1: DualPoint, v2: DualPoint) -> float:
    """Explicit distance formula in the dual parametrization:
    |v/|v| - v'/|v'|| + |v/|v|^2 - v'/|v'|^2|."""
    r1, r2 = v1.norm, v2.norm
    du = math.hypot(v1.vx / r1 - v2.vx / r2, v1.vy / r1 - v2.vy / r2)
    dw = math.hypot(v1.vx / r1**2 - v2.vx / r2**2, v1.vy / r1**2 - v2.vy / r2**2)
    return du + dw


def dual_distance_sandwich(v1: DualPoint, v2: DualPoint):
    """(lower, ratio, upper) for d/|v - v'|.

    lower = min{1,|v|}/(|v||v'|) as printed in the source inequality. The
    printed upper constant 4/|v|^2 only holds for |v| <= 2 (the unit-vector
    difference obeys |u - u'| <= 2|v - v'|/max(|v|,|v'|), which is weaker
    than 4|v - v'|/|v|^2 once |v| > 2), so the provable two-sided form used
    here is  d/|v-v'| <= 2/max(|v|,|v'|) + 1/(|v||v'|).
    """
    r1, r2 = v1.norm, v2.norm
    gap = math.hypot(v1.vx - v2.vx, v1.vy - v2.vy)
    if gap == 0.0:
        return 0.0, None, float("inf")
    ratio = dual_distance(v1, v2) / gap
    lower = min(1.0, r1) / (r1 * r2)
    upper = 2.0 / max(r1, r2) + 1.0 / (r1 * r2)
    return lower, ratio, upper


def features(lines) -> np.ndarray:
    if len(lines) == 0:
        return np.zeros((0, 4))
    return np.ascontiguousarray(np.stack([l.feature() for l in lines]))


def separated_net(lines, sep: float) -> list[Line]:
    """Greedy maximal sep-separated subfamily, insertion order = input order.
    Every input line is within sep of some kept line."""
    if sep <= 0:
        raise InvalidParameter("separation must be positive")
    if not lines:
        return []
    kept = kernels.greedy_net(features(lines), float(sep))
    return [lines[i] for i in kept]


@dataclass(frozen=True)
class LineFamily:
    """A finite delta-separated family with a target dimension exponent."""

    scale: Scale
    lines: tuple
    beta: float

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        return features(self.lines)

    def __len__(self):
        return len(self.lines)

    def pairwise_min_distance(self) -> float:
        f = self.feature_matrix
        if len(f) < 2:
            return math.inf
        best = math.inf
        block = max(1, int(4e6) // max(len(f), 1))
        for s in range(0, len(f), block):
            e = min(s + block, len(f))
            d0 = f[s:e, None, 0] - f[None, :, 0]
            d1 = f[s:e, None, 1] - f[None, :, 1]
            d2 = f[s:e, None, 2] - f[None, :, 2]
            d3 = f[s:e, None, 3] - f[None, :, 3]
            d = np.sqrt(d0 * d0 + d1 * d1) + np.sqrt(d2 * d2 + d3 * d3)
            d[np.arange(s, e) - s, np.arange(s, e)] = np.inf
            best = min(best, float(d.min()))
        return best

    def to_json_obj(self) -> dict:
        return {
            "k": self.scale.k,
            "beta": self.beta,
            "lines": [
                {"theta": float(f"{l.theta:.17g}"), "s": float(f"{l.s:.17g}")}
                for l in self.lines
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj) -> "LineFamily":
        return cls(
            Scale(int(obj["k"])),
            tuple(Line(d["theta"], d["s"]) for d in obj["lines"]),
            float(obj["beta"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "LineFamily":
        return cls.from_json_obj(json.loads(text))


def family_nonconcentration(fam: LineFamily, beta: float):
    """Worst concentration ratios of the family at every dyadic radius,
    in cardinality form: sup over members of
    #{l' : d(l, l') <= r} / (r/delta)^beta, plus the global mass ratio
    |fam| * delta^beta."""
    from .regularity import RegularityReport  # local import avoids a cycle

    s = fam.scale
    radii = s.dyadic_radii(r_max=2.0)
    if len(fam) == 0:
        return RegularityReport(
            per_scale_ratio={r: 0.0 for r in radii}, mass_ratio=0.0, delta=s.delta
        )
    counts = kernels.nonconc_counts(fam.feature_matrix, np.asarray(radii))
    per_scale = {
        r: float(counts[:, t].max() / (r / s.delta) ** beta)
        for t, r in enumerate(radii)
    }
    mass = len(fam) * s.delta**beta
    return RegularityReport(per_scale_ratio=per_scale, mass_ratio=mass, delta=s.delta)


def _hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; handles collinear/degenerate input."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def point_set_diameter(points: np.ndarray) -> float:
    if len(points) == 0:
        return 0.0
    hull = _hull(np.asarray(points, dtype=np.float64))
    if len(hull) == 1:
        return 0.0
    d2 = ((hull[:, None, :] - hull[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.max()))


def tube_intersection_diameter(l1: Line, l2: Line, s: Scale) -> float:
    """Exact cell-center diameter of tube(l1, 2*delta) & tube(l2, 2*delta)
    restricted to B(0, 2); 0 when empty."""
    if l1 == l2:
        raise InvalidParameter("lines must be distinct")
    inter = rasterize_tube(l1, 2 * s.delta, s).intersection(
        rasterize_tube(l2, 2 * s.delta, s)
    )
    if inter.is_empty():
        return 0.0
    cx, cy = inter.centers_of_occupied()
    keep = cx * cx + cy * cy <= 4.0
    if not keep.any():
        return 0.0
    return point_set_diameter(np.column_stack([cx[keep], cy[keep]]))


def rasterize_line_set(ell: Line, ts, s: Scale) -> CellSet:
    """Cells hit by the points foot + t*e for t in ts (a 1-d sample of the
    line), clipped to the window."""
    ex, ey = ell.direction()
    vx, vy = ell.foot()
    ts = np.asarray(ts, dtype=np.float64)
    return CellSet.from_points(s, vx + ts * ex, vy + ts * ey)
