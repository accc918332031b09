"""Counting statistics of Furstenberg instances: the relation ~, pair
counts and the deficiency exponent, stabilizers, strip masses, the
Cauchy-Schwarz union bound, pairwise tube intersections, the dyadic-shell
accounting, and box-dimension regression.

Pair counting is exact and streamed per cell: the ordered pairs (c1, c2)
lying together in some tube are grouped by c1, so the union count is the
sum over occupied cells of |union of the tubes through that cell|. This
needs no global pair table and no dedup pass.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InsufficientData, InvalidParameter, InvariantViolation
from .generators import FurstInstance, _beta_prune
from .grid import CellSet, Scale, strip_cells
from .linespace import Line, line_distance
from .regularity import polylog_budget


@dataclass(frozen=True)
class PairCount:
    """Exact ordered-pair counts of the relation x ~ y.

    union_pairs: |union over tubes of R x R| in cells^2, deduplicated.
    sum_pairs:   sum over tubes of |R-cells|^2.
    gamma_measured:      log2(cells^2 / union_pairs) / (2k)  (>= 0).
    product_deficiency:  log2(sum_pairs / union_pairs) / (2k) (>= 0; near 0
                         means the products R x R are nearly disjoint).
    """

    cells: int
    union_pairs: int
    sum_pairs: int
    gamma_measured: float
    product_deficiency: float


def related_counts(inst: FurstInstance):
    """(cell_ids, counts): for each occupied cell of the union, the number
    of distinct cells related to it (including itself)."""
    cell_ids, cell_ptr, cell_tubes, tube_ptr, tube_cells = inst.incidence
    counts = kernels.union_counts(tube_ptr, tube_cells, cell_ptr, cell_tubes)
    return cell_ids, counts


def relation_pairs(inst: FurstInstance) -> PairCount:
    _, counts = related_counts(inst)
    union_pairs = int(counts.sum())
    sum_pairs = sum(int(r.cell_count) ** 2 for r in inst.r_sets)
    cells = inst.e_union.cell_count
    k = inst.scale.k
    if union_pairs == 0:
        raise InvalidParameter("instance has no occupied cells")
    gamma = math.log2(cells**2 / union_pairs) / (2 * k)
    deficiency = math.log2(sum_pairs / union_pairs) / (2 * k)
    return PairCount(
        cells=cells,
        union_pairs=union_pairs,
        sum_pairs=sum_pairs,
        gamma_measured=gamma,
        product_deficiency=deficiency,
    )


def omega_stab(inst: FurstInstance, cell) -> np.ndarray:
    """Indices of the lines whose R contains the given (i, j) cell."""
    return inst.stab_of_cell(int(cell[0]), int(cell[1]))


def stab_diagnostic(inst: FurstInstance, cell, gamma: float) -> float:
    """|Omega_x| * delta^(alpha + gamma), the measured form of the
    stabilizer cap."""
    stab = omega_stab(inst, cell)
    return len(stab) * inst.scale.delta ** (inst.alpha + gamma)


def heavy_points(inst: FurstInstance, gamma: float, eps: float) -> CellSet:
    """Cells whose related mass is at least delta^(2 - 2*alpha + gamma + eps)."""
    s = inst.scale
    threshold = s.delta ** (2 - 2 * inst.alpha + gamma + eps)
    cell_ids, counts = related_counts(inst)
    keep = counts * s.delta**2 >= threshold
    return CellSet(s, cell_ids[keep])


def strip_mass(a: CellSet, line: Line, width: float) -> float:
    """Exact measure of A inside the width-neighborhood of the line."""
    if width < a.scale.delta:
        raise InvalidParameter("strip width below resolution")
    if a.is_empty():
        return 0.0
    return int(strip_cells(a, line, width).sum()) * a.scale.delta**2


@dataclass(frozen=True)
class CsBound:
    """The Cauchy-Schwarz union lower bound (sum |T_j|)^2 / sum |T_i & T_j|."""

    bound: float
    union: float
    sum_measures: float
    pair_sum: float

    @property
    def slack(self) -> float:
        return self.union / self.bound if self.bound > 0 else math.inf


def cs_lower_bound(sets) -> CsBound:
    """Exact integer evaluation of the union bound; the inequality
    union >= bound is asserted (it is a theorem)."""
    if not sets:
        raise InvalidParameter("need at least one set")
    scale = sets[0].scale
    d2 = scale.delta**2
    arrays = [s.flat_ids() for s in sets]
    counts = [len(a) for a in arrays]
    total = sum(counts)
    if total == 0:
        return CsBound(bound=0.0, union=0.0, sum_measures=0.0, pair_sum=0.0)
    pair = 0
    for i, a in enumerate(arrays):
        pair += counts[i]  # |T_i & T_i|
        for b in arrays[i + 1 :]:
            pair += 2 * len(np.intersect1d(a, b, assume_unique=True))
    union_cnt = len(np.unique(np.concatenate(arrays)))
    if union_cnt * pair < total * total:
        raise InvariantViolation("Cauchy-Schwarz union bound violated (impossible)")
    # measures: bound = (sum c_j * d2)^2 / (pair * d2^2) = total^2/pair * d2
    return CsBound(
        bound=total * total / pair * d2,
        union=union_cnt * d2,
        sum_measures=total * d2,
        pair_sum=pair * d2,
    )


@dataclass(frozen=True)
class IntersectionReport:
    counts: np.ndarray  # exact |R_i & R_j| in cells
    gamma: np.ndarray  # pairwise line distances
    max_cap_ratio: float  # max off-diagonal of count * gamma^alpha

    def measures(self, scale: Scale) -> np.ndarray:
        return self.counts * scale.delta**2


def pairwise_intersection_counts(inst: FurstInstance) -> np.ndarray:
    """Exact |R_i & R_j| cell counts via the shared-cell incidence index."""
    n = len(inst.omega)
    out = np.zeros((n, n), dtype=np.int64)
    for idx, r in enumerate(inst.r_sets):
        out[idx, idx] = r.cell_count
    _, cell_ptr, cell_tubes, _, _ = inst.incidence
    deg = np.diff(cell_ptr)
    for pos in np.nonzero(deg > 1)[0]:
        tubes = cell_tubes[cell_ptr[pos] : cell_ptr[pos + 1]]
        for a in tubes:
            for b in tubes:
                if a != b:
                    out[a, b] += 1
    return out


def line_distance_matrix(lines) -> np.ndarray:
    """Pairwise geometric line distances (direction-sign free), the form the
    intersection-diameter bound is stated for."""
    if not lines:
        return np.zeros((0, 0))
    e = np.array([l.direction() for l in lines])
    v = np.array([l.foot() for l in lines])
    de_minus = np.sqrt(((e[:, None, :] - e[None, :, :]) ** 2).sum(axis=2))
    de_plus = np.sqrt(((e[:, None, :] + e[None, :, :]) ** 2).sum(axis=2))
    dv = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=2))
    return np.minimum(de_minus, de_plus) + dv


def pairwise_intersections(inst: FurstInstance) -> IntersectionReport:
    counts = pairwise_intersection_counts(inst)
    gamma = line_distance_matrix(list(inst.omega.lines))
    n = len(counts)
    ratio = 0.0
    if n > 1:
        off = ~np.eye(n, dtype=bool)
        ratio = float((counts[off] * gamma[off] ** inst.alpha).max())
    return IntersectionReport(counts=counts, gamma=gamma, max_cap_ratio=ratio)


@dataclass(frozen=True)
class AppendixReport:
    """|E| against delta^(2-(alpha+beta)) with the dyadic-shell breakdown of
    the pairwise intersection sum."""

    ratio: float
    shells: dict
    offdiag_total: int
    identity_ok: bool
    alpha: float
    beta_eff: float


def appendix_bound(inst: FurstInstance) -> AppendixReport:
    alpha, beta = inst.alpha, inst.beta
    if beta > alpha:
        # an (alpha,beta)-instance contains an (alpha,alpha)-instance
        rng = np.random.default_rng(0)
        kept_lines = _beta_prune(list(inst.omega.lines), inst.scale, alpha, rng)
        index = {l: i for i, l in enumerate(inst.omega.lines)}
        keep_idx = [index[l] for l in kept_lines]
        sub = FurstInstance.build(
            inst.scale, alpha, alpha,
            [inst.omega.lines[i] for i in keep_idx],
            [inst.r_sets[i] for i in keep_idx],
            meta={"generator": "sub", "parent": inst.meta.get("generator")},
            validate=False,
        )
        return appendix_bound(sub)

    s = inst.scale
    ratio = inst.e_union.measure / s.delta ** (2 - (alpha + beta))
    counts = pairwise_intersection_counts(inst)
    gamma = line_distance_matrix(list(inst.omega.lines))
    n = len(counts)
    off = ~np.eye(n, dtype=bool)
    shells: dict = {}
    if n > 1:
        with np.errstate(divide="ignore"):
            shell_of = np.ceil(-np.log2(np.maximum(gamma, 1e-300))).astype(np.int64)
        for m in range(int(shell_of[off].min()), int(shell_of[off].max()) + 1):
            mask = off & (shell_of == m)
            if mask.any():
                shells[m] = int(counts[mask].sum())
    offdiag_total = int(counts[off].sum()) if n > 1 else 0
    return AppendixReport(
        ratio=ratio,
        shells=shells,
        offdiag_total=offdiag_total,
        identity_ok=sum(shells.values()) == offdiag_total,
        alpha=alpha,
        beta_eff=beta,
    )


@dataclass(frozen=True)
class ExponentFit:
    samples: tuple  # (k, log2 measure)
    slope: float
    intercept: float
    residual: float

    @property
    def dimension(self) -> float:
        """measure ~ delta^(2-d) means log2(measure) = (d-2)*k."""
        return 2.0 + self.slope


def exponent_fit(runs) -> ExponentFit:
    """Least-squares of log2(measure) against the level k."""
    samples = []
    for scale, m in runs:
        k = scale.k if isinstance(scale, Scale) else int(scale)
        if m <= 0:
            raise InvalidParameter("measure must be positive for the log fit")
        samples.append((k, math.log2(m)))
    if len({k for k, _ in samples}) < 3:
        raise InsufficientData("need at least 3 distinct scales")
    ks = np.array([k for k, _ in samples], dtype=np.float64)
    ys = np.array([y for _, y in samples])
    slope, intercept = np.polyfit(ks, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (slope * ks + intercept)) ** 2)))
    return ExponentFit(
        samples=tuple(samples), slope=float(slope), intercept=float(intercept),
        residual=resid,
    )


def gamma0_formula(alpha: float, lam: float) -> float:
    """The quantitative exponent gain lambda / (176 + 656/alpha)."""
    if not (0 < alpha <= 0.5):
        raise InvalidParameter("alpha must be in (0, 1/2]")
    if lam < 0:
        raise InvalidParameter("lambda must be >= 0")
    return lam / (176.0 + 656.0 / alpha)


def double_counting_identity(inst: FurstInstance) -> bool:
    """Sum over occupied cells of |Omega_x| equals sum over tubes of |R|."""
    _, cell_ptr, _, tube_ptr, _ = inst.incidence
    return int(cell_ptr[-1]) == int(tube_ptr[-1])


def gamma_budget_floor(scale: Scale) -> float:
    """-3 * log2(log2(1/delta)) / log2(1/delta), the deficiency floor implied
    by the nearly-disjoint-products bound at the default cubed budget."""
    k = scale.k
    return -3.0 * math.log2(k) / k
