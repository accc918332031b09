"""The projective involution psi(x, y) = (x/y, 1/y) and its pushforward
machinery: line images, distortion certificates, the product structure of
images of origin fans, and 1-d projection covering counts.

psi sends lines through the origin to vertical lines and {x = a*y + b} to
{x = b*y + a}. On a horizontal band y in [y0, 2*y0] it is bi-Lipschitz;
the certificate asserts the provable two-sided bounds

    min(1, y0)/(6 * (2*y0)^2) * |p - q|  <=  |psi p - psi q|
                                          <=  36 * y0^-2 * |p - q|

and counts (without asserting) violations of the cruder printed lower
constant y0^-2, which fails on horizontal pairs for y0 < 2.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter, InvariantViolation
from .grid import CellSet, IntervalSet, Scale
from .linespace import SlopeIntercept

_MAGIC_PSI = b"FPI1"


class OnExcludedLine(InvalidParameter):
    """psi is undefined on the x-axis."""


class NothingInBand(InvalidParameter):
    """No cells survive the [y0, 2*y0] band clip."""


def psi_point(p):
    """(x, y) -> (x/y, 1/y); undefined for y = 0."""
    x, y = float(p[0]), float(p[1])
    if y == 0.0:
        raise OnExcludedLine("psi is undefined on the x-axis")
    return (x / y, 1.0 / y)


def psi_points(xs: np.ndarray, ys: np.ndarray):
    if (ys == 0.0).any():
        raise OnExcludedLine("psi is undefined on the x-axis")
    return xs / ys, 1.0 / ys


def psi_line(line: SlopeIntercept) -> SlopeIntercept:
    """{x = a*y + b} maps to {x = b*y + a}."""
    return SlopeIntercept(line.b, line.a)


def psi_jacobian_det(p) -> float:
    y = float(p[1])
    if y == 0.0:
        raise OnExcludedLine("psi is undefined on the x-axis")
    return -1.0 / y**3


def distortion_lower_constant(y_lo: float, y_hi: float, x_max: float = 4.0) -> float:
    """Provable lower expansion bound of psi on the band y in [y_lo, y_hi],
    |x| <= x_max:  |psi p - psi q| >= m |p - q| with
    m = min(1, y_lo) / ((x_max + 2) * y_hi^2)."""
    return min(1.0, y_lo) / ((x_max + 2.0) * y_hi * y_hi)


@dataclass(frozen=True)
class DistortionCertificate:
    pairs_checked: int
    min_ratio: float
    max_ratio: float
    lower_bound: float
    upper_bound: float
    literal_lower_violations: int
    jacobian_ok: bool

    @property
    def ok(self) -> bool:
        return (
            self.min_ratio >= self.lower_bound * (1 - 1e-9)
            and self.max_ratio <= self.upper_bound * (1 + 1e-9)
            and self.jacobian_ok
        )


def distortion_certificate(xs, ys, y0: float, rng=None, pairs: int = 2048) -> DistortionCertificate:
    """Sample point pairs in the band and verify the expansion sandwich and
    the Jacobian range [y0^-3/8, y0^-3]."""
    if rng is None:
        rng = np.random.default_rng(0)
    m = len(xs)
    if m < 2:
        return DistortionCertificate(0, math.inf, 0.0, 0.0, math.inf, 0, True)
    a = rng.integers(0, m, size=pairs)
    b = rng.integers(0, m, size=pairs)
    dx = xs[a] - xs[b]
    dy = ys[a] - ys[b]
    gap = np.sqrt(dx * dx + dy * dy)
    keep = gap > 0
    a, b, gap = a[keep], b[keep], gap[keep]
    if len(a) == 0:
        return DistortionCertificate(0, math.inf, 0.0, 0.0, math.inf, 0, True)
    ux, uy = psi_points(xs, ys)
    dgx = ux[a] - ux[b]
    dgy = uy[a] - uy[b]
    img_gap = np.sqrt(dgx * dgx + dgy * dgy)
    ratios = img_gap / gap
    lower = distortion_lower_constant(y0, 2 * y0)
    upper = 36.0 / (y0 * y0)
    literal = int((ratios < 1.0 / (y0 * y0) * (1 - 1e-9)).sum())
    dets = 1.0 / ys**3
    jac_ok = bool(
        ((dets >= y0**-3 / 8 * (1 - 1e-9)) & (dets <= y0**-3 * (1 + 1e-9))).all()
    )
    return DistortionCertificate(
        pairs_checked=int(len(a)),
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
        lower_bound=lower,
        upper_bound=upper,
        literal_lower_violations=literal,
        jacobian_ok=jac_ok,
    )


@dataclass(frozen=True)
class PsiImage:
    """Image of a band-clipped cell set under psi, on its own dyadic target
    grid of cell size delta1 ~ y0^-2 * delta (rounded down to a level).

    The image is shifted down by y_offset (a multiple of the target cell) so
    tall bands fit the window; column structure is unaffected. The stored
    cells conservatively cover the true image: 3x3 point samples per source
    cell, dilated by one target cell.
    """

    source_scale: Scale
    y0: float
    target_scale: Scale
    delta1_exact: float
    y_offset: float
    cells: CellSet
    clip_count: int
    overflow_count: int
    certificate: DistortionCertificate = field(repr=False, default=None)

    def to_bytes(self) -> bytes:
        header = struct.pack(
            "<4sBBddIq",
            _MAGIC_PSI, 1, self.source_scale.k,
            self.y0, self.y_offset, self.clip_count,
            int(self.delta1_exact / self.target_scale.delta * (1 << 30)),
        )
        return header + self.cells.to_bytes()

    @classmethod
    def from_bytes(cls, blob: bytes):
        magic, _, k, y0, y_off, clip, ratio_fp = struct.unpack_from("<4sBBddIq", blob, 0)
        if magic != _MAGIC_PSI:
            raise InvalidParameter("not a PsiImage blob")
        off = struct.calcsize("<4sBBddIq")
        cells = CellSet.from_bytes(blob[off:])
        return cls(
            source_scale=Scale(k), y0=y0, target_scale=cells.scale,
            delta1_exact=ratio_fp / (1 << 30) * cells.scale.delta,
            y_offset=y_off, cells=cells, clip_count=clip, overflow_count=0,
        )


def target_level(y0: float, s: Scale) -> tuple[int, float]:
    """Dyadic level for delta1 = y0^-2 * delta rounded down (delta1 <= exact),
    clamped to the representable range [4, 12]."""
    exact = s.delta / (y0 * y0)
    level = math.ceil(-math.log2(exact) - 1e-12)
    return min(max(level, 4), 12), exact


def psi_pushforward(a: CellSet, y0: float, rng=None) -> PsiImage:
    """Map the cells of `a` whose closed y-extent sits inside [y0, 2*y0]
    through psi onto the target grid; attach the distortion certificate."""
    if y0 <= 0:
        raise InvalidParameter("y0 must be positive")
    s = a.scale
    ii, jj = a.indices()
    y_lo = -s.half + jj * s.delta
    in_band = (y_lo >= y0 - 1e-12) & (y_lo + s.delta <= 2 * y0 + 1e-12)
    clip_count = int((~in_band).sum())
    ii, jj = ii[in_band], jj[in_band]
    if len(ii) == 0:
        raise NothingInBand(f"no cells inside the band [{y0}, {2 * y0}]")

    level, exact = target_level(y0, s)
    tscale = Scale(level)
    d1 = tscale.delta

    offs = np.array([0.0, 0.5, 1.0]) * s.delta
    px = (-s.half + ii[:, None] * s.delta + offs[None, :])[:, :, None]
    py = (-s.half + jj[:, None] * s.delta + offs[None, :])[:, None, :]
    px = np.broadcast_to(px, (len(ii), 3, 3)).reshape(-1)
    py = np.broadcast_to(py, (len(ii), 3, 3)).reshape(-1)
    ux, uy = psi_points(px, py)

    # shift tall image bands down onto the window (columns unaffected)
    y_offset = 0.0
    if uy.max() > tscale.half:
        y_offset = d1 * math.floor((uy.max() - tscale.half) / d1 + 1.0)
    uy = uy - y_offset
    inside = (np.abs(ux) < tscale.half) & (uy >= -tscale.half) & (uy < tscale.half)
    overflow = int((~inside).sum())
    hit = CellSet.from_points(tscale, ux[inside], uy[inside])
    # one-cell conservative dilation
    ti, tj = hit.indices()
    sh = np.array([-1, 0, 1])
    shape = (len(ti), 3, 3)
    di = np.broadcast_to(ti[:, None, None] + sh[None, :, None], shape).reshape(-1)
    dj = np.broadcast_to(tj[:, None, None] + sh[None, None, :], shape).reshape(-1)
    img = CellSet.from_indices(tscale, di, dj)

    cx = -s.half + (ii + 0.5) * s.delta
    cy = -s.half + (jj + 0.5) * s.delta
    cert = distortion_certificate(cx, cy, y0, rng=rng)
    if not cert.ok:
        raise InvariantViolation("psi distortion certificate failed")
    return PsiImage(
        source_scale=s, y0=y0, target_scale=tscale, delta1_exact=exact,
        y_offset=y_offset, cells=img, clip_count=clip_count,
        overflow_count=overflow, certificate=cert,
    )


def product_projection(img: PsiImage) -> IntervalSet:
    """The occupied target-grid columns of the image, as a 1-d cell set at
    the target level."""
    ti, _ = img.cells.indices()
    return IntervalSet.from_indices(img.target_scale.k, np.unique(ti))


def projection_covering(points: np.ndarray, e, s: Scale) -> int:
    """Exact number of occupied delta-intervals of {e . x : x in points} on
    the canonical 1-d grid."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return 0
    ex, ey = float(e[0]), float(e[1])
    dots = pts[:, 0] * ex + pts[:, 1] * ey
    return len(np.unique(np.floor(dots / s.delta).astype(np.int64)))
