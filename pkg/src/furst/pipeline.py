"""Executable replica of the proof pipeline: every selection step is
performed on a concrete instance and every displayed inequality becomes a
(measured, predicted, ratio) record in the trace.

Soundness policy: exact-arithmetic facts (partitions, double counting,
pigeonhole fractions, nesting, the final lower-bound chain) are asserted;
the source inequalities with loose polylog constants are recorded as
diagnostics and never abort a run. A run aborts only when a stage comes
out structurally empty (PipelineDegenerate with the stage name).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import InvalidParameter, InvariantViolation, PipelineDegenerate
from .generators import FurstInstance
from .grid import CellSet, IntervalSet, Scale
from .linespace import Line, line_distance
from .projective import (
    NothingInBand,
    distortion_lower_constant,
    product_projection,
    psi_pushforward,
)
from .regularity import polylog_budget, refine_split_1d


@dataclass(frozen=True)
class PipelineParams:
    """The exponent bookkeeping: eps, gamma and the eta ladder with the
    stated floors enforced, plus the derived lambda exponents."""

    alpha: float
    gamma: float
    eps: float = 0.01
    eta1: float = None
    eta2: float = None
    eta3: float = None
    eta4: float = None
    eta5: float = None
    pair_search_budget: int = 4096

    def __post_init__(self):
        if not (0 < self.alpha <= 0.5):
            raise InvalidParameter("pipeline requires alpha in (0, 1/2]")
        if self.gamma < 0 or self.eps <= 0:
            raise InvalidParameter("need gamma >= 0 and eps > 0")
        floors = self.floors(self.alpha, self.gamma, self.eps)
        for name, floor in floors.items():
            value = getattr(self, name)
            if value is None:
                object.__setattr__(self, name, floor)
            elif value < floor - 1e-12:
                raise InvalidParameter(f"{name}={value} below its floor {floor}")
        # eta3 and eta5 floors depend on the resolved eta1/eta2/eta4
        eta3_floor = self.eta1 + self.eta2 + self.eps
        if self.eta3 is None or self.eta3 < eta3_floor - 1e-12:
            if self.eta3 is not None and self.eta3 < eta3_floor - 1e-12:
                raise InvalidParameter("eta3 below eta1 + eta2 + eps")
            object.__setattr__(self, "eta3", eta3_floor)
        eta5_floor = (
            7 * self.gamma + self.alpha * self.eta3 + 2 * self.eta4 + 4 * self.eps
        )
        if self.eta5 is None or self.eta5 < eta5_floor - 1e-12:
            if self.eta5 is not None and self.eta5 < eta5_floor - 1e-12:
                raise InvalidParameter("eta5 below 7g + a*eta3 + 2*eta4 + 4e")
            object.__setattr__(self, "eta5", eta5_floor)

    @staticmethod
    def floors(alpha: float, gamma: float, eps: float) -> dict:
        return {
            "eta1": (12 * gamma + 8 * eps) / alpha,
            "eta2": (4 * gamma + 3 * eps) / alpha,
            "eta4": (6 * gamma + 5 * eps) / alpha,
        }

    @property
    def lambda1(self) -> float:
        return 7 * self.gamma + self.alpha * self.eta3 + 2 * self.eta4 + self.eta5 + 4 * self.eps

    @property
    def lambda2(self) -> float:
        return 2 * self.eta3 + self.eps

    @property
    def lambda3(self) -> float:
        return 6 * self.gamma + 4 * self.eps

    @property
    def lambda4(self) -> float:
        return 7 * self.gamma + self.alpha * self.eta3 + 2 * self.eta4 + 4 * self.eps


@dataclass
class StageRecord:
    stage: str
    measured: float
    predicted: float = None
    note: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def ratio(self):
        if self.predicted in (None, 0.0):
            return None
        return self.measured / self.predicted

    def row(self):
        return (self.stage, self.measured, self.predicted, self.ratio)


@dataclass
class PipelineTrace:
    params: PipelineParams
    gamma_used: float
    seed: int
    records: list = field(default_factory=list)
    sets: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    def add(self, stage, measured, predicted=None, note="", **extras):
        rec = StageRecord(stage, float(measured),
                          None if predicted is None else float(predicted),
                          note, dict(extras))
        self.records.append(rec)
        return rec

    def to_json_obj(self) -> dict:
        return {
            "gamma_used": self.gamma_used,
            "seed": self.seed,
            "params": {
                "alpha": self.params.alpha, "gamma": self.params.gamma,
                "eps": self.params.eps,
                "eta": [self.params.eta1, self.params.eta2, self.params.eta3,
                        self.params.eta4, self.params.eta5],
                "lambda": [self.params.lambda1, self.params.lambda2,
                           self.params.lambda3, self.params.lambda4],
            },
            "values": {k: _plain(v) for k, v in self.values.items()},
            "stages": [
                {
                    "stage": r.stage, "measured": r.measured,
                    "predicted": r.predicted, "ratio": r.ratio, "note": r.note,
                    "extras": {k: _plain(v) for k, v in r.extras.items()},
                }
                for r in self.records
            ],
        }

    def csv_rows(self):
        yield ("stage", "measured", "predicted", "ratio")
        for r in self.records:
            yield (r.stage, r.measured,
                   "" if r.predicted is None else r.predicted,
                   "" if r.ratio is None else r.ratio)


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# stage helpers
# ---------------------------------------------------------------------------


def _related_union(inst: FurstInstance, flat_cell: int) -> np.ndarray:
    """Sorted flat ids of all cells related to the given cell."""
    cell_ids, cell_ptr, cell_tubes, tube_ptr, tube_cells = inst.incidence
    pos = np.searchsorted(cell_ids, flat_cell)
    if pos >= len(cell_ids) or cell_ids[pos] != flat_cell:
        return np.zeros(0, dtype=np.int64)
    tubes = cell_tubes[cell_ptr[pos] : cell_ptr[pos + 1]]
    parts = [tube_cells[tube_ptr[t] : tube_ptr[t + 1]] for t in tubes]
    return np.unique(np.concatenate(parts))


def _cell_center(scale: Scale, flat: int):
    i, j = divmod(int(flat), scale.n)
    return (-scale.half + (i + 0.5) * scale.delta, -scale.half + (j + 0.5) * scale.delta)


def select_pair(inst: FurstInstance, e1: CellSet, params: PipelineParams, rng):
    """Seeded randomized search for a well-separated related pair: samples
    candidate pairs from E x E, scores them by the off-strip doubly-related
    mass inside E1, and returns the argmax with its E2."""
    if e1.is_empty():
        raise PipelineDegenerate("E1")
    s = inst.scale
    eta1_w = s.delta**params.eta1
    min_sep = s.delta**params.eta2
    pool = inst.e_union.cells
    n_try = params.pair_search_budget
    ca = pool[rng.integers(0, len(pool), size=n_try)]
    cb = pool[rng.integers(0, len(pool), size=n_try)]

    best = (-1, None, None, None)
    for y1_flat, y2_flat in zip(ca, cb):
        if y1_flat == y2_flat:
            continue
        p1 = _cell_center(s, y1_flat)
        p2 = _cell_center(s, y2_flat)
        if math.hypot(p1[0] - p2[0], p1[1] - p2[1]) < min_sep:
            continue
        common = np.intersect1d(
            _related_union(inst, int(y1_flat)),
            _related_union(inst, int(y2_flat)),
            assume_unique=True,
        )
        common = np.intersect1d(common, e1.cells, assume_unique=True)
        if len(common) <= best[0]:
            continue
        joining = Line.from_two_points(p1, p2)
        nx, ny, c = joining.normal_form()
        ii, jj = common // s.n, common % s.n
        cx = -s.half + (ii + 0.5) * s.delta
        cy = -s.half + (jj + 0.5) * s.delta
        keep = np.abs(cx * nx + cy * ny - c) > eta1_w
        score = int(keep.sum())
        if score > best[0]:
            best = (score, int(y1_flat), int(y2_flat), common[keep])
    score, y1_flat, y2_flat, cells = best
    if score <= 0:
        raise PipelineDegenerate("select_pair", "no pair with positive off-strip score")
    return y1_flat, y2_flat, CellSet(s, cells)


def split_omega(inst: FurstInstance, e2: CellSet, y1_flat: int, y2_flat: int,
                params: PipelineParams):
    """Exact ball-line incidence partition of Omega and the pigeonhole side
    choice: returns (omega1 indices, chosen_y flat id, diagnostics)."""
    s = inst.scale
    r3 = s.delta**params.eta3
    p1 = _cell_center(s, y1_flat)
    p2 = _cell_center(s, y2_flat)
    hits1 = np.array([l.meets_ball(p1, r3) for l in inst.omega.lines])
    hits2 = np.array([l.meets_ball(p2, r3) for l in inst.omega.lines])
    part_b1 = hits1
    part_b2 = hits2 & ~hits1
    part_rest = ~hits1 & ~hits2
    if int(part_b1.sum()) + int(part_b2.sum()) + int(part_rest.sum()) != len(hits1):
        raise InvariantViolation("omega partition is not exact")

    cnt = np.array(
        [len(np.intersect1d(r.cells, e2.cells, assume_unique=True)) for r in inst.r_sets],
        dtype=np.int64,
    )
    miss1 = ~hits1
    miss2 = ~hits2
    s1 = int(cnt[miss1].sum())
    s2 = int(cnt[miss2].sum())
    if s1 >= s2:
        omega1 = np.flatnonzero(miss1)
        chosen = y1_flat
        side_sum = s1
    else:
        omega1 = np.flatnonzero(miss2)
        chosen = y2_flat
        side_sum = s2
    if len(omega1) == 0:
        raise PipelineDegenerate("split_omega", "no line misses either ball")
    diag = {
        "parts": (int(part_b1.sum()), int(part_b2.sum()), int(part_rest.sum())),
        "both_ball_lines": int((hits1 & hits2).sum()),
        "both_ball_e2_mass": int(cnt[hits1 & hits2].sum()),
        "side_sum_cells": side_sum,
        "total_sum_cells": int(cnt.sum()),
    }
    return omega1, chosen, diag


@dataclass
class Frame:
    """Instance data after the translation (and possible vertical flip)
    placing the chosen point at the origin."""

    scale: Scale
    offset_cells: tuple
    flipped: bool
    lines: list  # all instance lines, translated
    r_cells: list  # translated per-tube flat ids (window-clipped)
    clipped_cells: int

    def translate_set(self, a: CellSet) -> CellSet:
        return CellSet(self.scale, self._shift(a.cells))

    def _shift(self, flat: np.ndarray) -> np.ndarray:
        """Cell indices after moving the chosen cell corner to the origin
        (and reflecting vertically when flipped), window-clipped."""
        n = self.scale.n
        iy, jy = self.offset_cells
        ii = flat // n - iy
        jj = flat % n - jy
        if self.flipped:
            jj = -jj - 1
        ii += n // 2
        jj += n // 2
        keep = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
        return np.sort(ii[keep] * n + jj[keep])


def _make_frame(inst: FurstInstance, chosen_flat: int, flipped: bool) -> Frame:
    s = inst.scale
    n = s.n
    iy, jy = divmod(int(chosen_flat), n)
    ox = -s.half + iy * s.delta
    oy = -s.half + jy * s.delta
    lines = []
    for l in inst.omega.lines:
        t = l.translate(-ox, -oy)
        if flipped:
            t = Line(math.pi - t.theta, t.s)
        lines.append(t)
    frame = Frame(s, (iy, jy), flipped, lines, [], 0)
    clipped = 0
    for r in inst.r_sets:
        shifted = frame._shift(r.cells)
        clipped += len(r.cells) - len(shifted)
        frame.r_cells.append(shifted)
    frame.clipped_cells = clipped
    return frame


def _line_b_value(line: Line):
    """x-intercept of {x = a*y + b}; None for horizontal lines."""
    nx, ny, c = line.normal_form()
    if nx == 0.0:
        return None
    return c / nx


def remove_strip_and_localize(inst: FurstInstance, omega1: np.ndarray, e2: CellSet,
                              chosen_flat: int, params: PipelineParams, trace):
    """Translate the chosen point to the origin, drop the horizontal strip,
    then localize dyadically in height and intercept (sequential argmax
    pigeonholing, both fractions machine-checked)."""
    s = inst.scale
    eta4_w = s.delta**params.eta4

    frame = _make_frame(inst, chosen_flat, flipped=False)
    e2t = frame.translate_set(e2)
    _, jj = e2t.indices()
    cy = -s.half + (jj + 0.5) * s.delta
    e3 = CellSet(s, e2t.cells[np.abs(cy) > eta4_w])
    if e3.is_empty():
        raise PipelineDegenerate("E3", "everything sits in the horizontal strip")
    trace.add("E3", e3.measure, 0.5 * e2.measure,
              note="kept mass after removing the horizontal strip (>= half)")

    # intercept bands over omega1
    bvals = []
    for idx in omega1:
        b = _line_b_value(frame.lines[idx])
        bvals.append(math.nan if b is None else b)
    bvals = np.array(bvals)
    cnt3 = np.array(
        [len(np.intersect1d(frame.r_cells[idx], e3.cells, assume_unique=True))
         for idx in omega1],
        dtype=np.int64,
    )
    usable = np.isfinite(bvals) & (np.abs(bvals) >= s.delta**params.eta3) & (np.abs(bvals) <= 8.0)
    bands: dict = {}
    for t in np.flatnonzero(usable):
        key = (1 if bvals[t] > 0 else -1, math.floor(math.log2(abs(bvals[t]))))
        bands.setdefault(key, []).append(t)
    if not bands:
        raise PipelineDegenerate("omega_bands", "no usable intercepts")
    band_sums = {key: int(cnt3[members].sum()) for key, members in bands.items()}
    key_b = max(band_sums, key=lambda key: (band_sums[key], key))
    omega_prime = omega1[np.array(bands[key_b], dtype=np.int64)]
    b_sign, b_exp = key_b
    b0 = 2.0**b_exp
    total_b = sum(band_sums.values())
    if band_sums[key_b] * len(band_sums) < total_b:
        raise InvariantViolation("intercept pigeonhole fraction violated")
    trace.add("omega_prime", band_sums[key_b], total_b / max(len(band_sums), 1),
              note="intercept-band mass vs pigeonhole floor",
              bands=len(band_sums), b0=b_sign * b0,
              skipped_lines=int((~usable).sum()))

    # height bands of E3 against the chosen omega band
    flipped = False
    r_in_band = np.unique(np.concatenate([frame.r_cells[i] for i in omega_prime]))
    e3_active = np.intersect1d(e3.cells, r_in_band, assume_unique=True)
    if len(e3_active) == 0:
        raise PipelineDegenerate("Eprime", "chosen lines carry none of E3")
    jj = e3_active % s.n
    cy = -s.half + (jj + 0.5) * s.delta
    ybands: dict = {}
    for pos, y in enumerate(cy):
        if abs(y) < eta4_w or abs(y) > 4.0:
            continue
        key = (1 if y > 0 else -1, math.floor(math.log2(abs(y))))
        ybands.setdefault(key, []).append(pos)
    if not ybands:
        raise PipelineDegenerate("Eprime", "no usable heights")
    yband_sums = {}
    for key, members in ybands.items():
        cells_in = e3_active[np.array(members, dtype=np.int64)]
        total = 0
        for idx in omega_prime:
            total += len(np.intersect1d(frame.r_cells[idx], cells_in, assume_unique=True))
        yband_sums[key] = total
    key_y = max(yband_sums, key=lambda key: (yband_sums[key], key))
    y_sign, y_exp = key_y
    total_y = sum(yband_sums.values())
    if yband_sums[key_y] * len(yband_sums) < total_y:
        raise InvariantViolation("height pigeonhole fraction violated")

    eprime_cells = e3_active[np.array(ybands[key_y], dtype=np.int64)]
    if y_sign < 0:
        # reflect the whole frame so the band is positive
        flipped = True
        frame = _make_frame(inst, chosen_flat, flipped=True)
        e3 = e3_reflect(s, e3)
        eprime_cells = _reflect_cells(s, eprime_cells)
    y0 = 2.0**y_exp
    eprime = CellSet(s, eprime_cells)
    if eprime.is_empty():
        raise PipelineDegenerate("Eprime")
    trace.add(
        "Eprime_selection", yband_sums[key_y],
        total_y / max(len(yband_sums), 1),
        note="height-band tube mass vs pigeonhole floor",
        y0=y0, bands=len(yband_sums), flipped=flipped,
    )
    sum_pred = inst.scale.delta ** (
        2 - 3 * params.alpha + 6 * params.gamma + 3 * params.eps
    )
    trace.add("sum_omega_prime", yband_sums[key_y] * s.delta**2, sum_pred,
              note="sum over Omega' of |R & E'| vs the displayed bound")
    return frame, e3, eprime, omega_prime, y0, b_sign * b0


def _reflect_cells(s: Scale, flat: np.ndarray) -> np.ndarray:
    n = s.n
    ii = flat // n
    jj = n - 1 - flat % n
    return np.sort(ii * n + jj)


def e3_reflect(s: Scale, e3: CellSet) -> CellSet:
    return CellSet(s, _reflect_cells(s, e3.cells))


def build_mu_and_f(frame: Frame, inst: FurstInstance, eprime: CellSet,
                   omega_prime: np.ndarray, y0: float, params: PipelineParams,
                   trace, rng):
    """Product projection of the psi image, its 1-d refinement, the interval
    selection, the uniform measure decay report, and the dual-point set F."""
    s = inst.scale
    delta = s.delta
    try:
        img = psi_pushforward(eprime, y0, rng=rng)
    except NothingInBand as exc:
        raise PipelineDegenerate("psi_image", str(exc))
    a_cols = product_projection(img)
    trace.add("A_columns", a_cols.measure,
              img.delta1_exact * delta ** (-params.alpha - params.gamma),
              note="product-structure width |A| vs delta1 * delta^(-a-g)",
              clip=img.clip_count, target_level=img.target_scale.k,
              literal_lower_violations=img.certificate.literal_lower_violations)
    trace.values["distortion_certificate"] = {
        "pairs": img.certificate.pairs_checked,
        "min_ratio": img.certificate.min_ratio,
        "max_ratio": img.certificate.max_ratio,
        "lower_bound": img.certificate.lower_bound,
        "upper_bound": img.certificate.upper_bound,
    }

    # re-rasterize the column set onto the instance delta-grid
    k1 = img.target_scale.k
    idx = a_cols.indices()
    if k1 <= s.k:
        step = 1 << (s.k - k1)
        fine = (idx[:, None] * step + np.arange(step)[None, :]).reshape(-1)
    else:
        fine = np.unique(idx >> (k1 - s.k))
    a_delta = IntervalSet.from_indices(s.k, fine)

    split = refine_split_1d(a_delta, params.alpha + params.gamma + 2 * params.eta4,
                            params.eta5)
    a_star = split.e_star
    trace.add("A_star", a_star.measure, a_delta.measure,
              note="refined column set (1-d refinement at delta)",
              double_star=sum(p.cell_count for p in split.e_double_star.values()))

    # pullback binning: per delta-interval sums and line counts over Omega'
    eprime_cells = eprime.cells
    per_interval_mass: dict = {}
    per_interval_lines: dict = {}
    for idx_line in omega_prime:
        mine = np.intersect1d(frame.r_cells[idx_line], eprime_cells, assume_unique=True)
        if len(mine) == 0:
            continue
        ii, jj = mine // s.n, mine % s.n
        cx = -s.half + (ii + 0.5) * delta
        cy = -s.half + (jj + 0.5) * delta
        cols = np.floor((cx / cy + s.half) / delta).astype(np.int64)
        for col, cnt in zip(*np.unique(cols, return_counts=True)):
            per_interval_mass[col] = per_interval_mass.get(col, 0) + int(cnt)
            per_interval_lines.setdefault(col, set()).add(int(idx_line))

    star_idx = set(int(i) for i in a_star.indices())
    inside = {col: m for col, m in per_interval_mass.items() if col in star_idx}
    s_tot = sum(inside.values())
    m_intervals = max(a_star.cell_count, 1)
    trace.add("pullback_mass", s_tot * delta**2,
              delta ** (2 - 3 * params.alpha + 6 * params.gamma + 3 * params.eps),
              note="mass of E' over A*-columns vs the displayed bound",
              outside=sum(per_interval_mass.values()) - s_tot)
    if s_tot == 0:
        raise PipelineDegenerate("J_selection", "no pullback mass over A*")
    chosen = {col for col, m in inside.items() if 2 * m_intervals * m >= s_tot}
    kept_mass = sum(inside[c] for c in chosen)
    if 2 * kept_mass < s_tot:
        raise InvariantViolation("interval selection kept less than half the mass")
    if not chosen:
        raise PipelineDegenerate("J_selection")
    j_intervals = np.array(sorted(chosen), dtype=np.int64)
    line_counts = np.array([len(per_interval_lines[c]) for c in j_intervals])
    trace.add("J_count", len(j_intervals),
              delta ** (-params.alpha + 6 * params.gamma
                        + params.alpha * params.eta3 + 3 * params.eps),
              note="|J| vs the displayed bound", kept_mass=kept_mass)
    trace.add("J_line_floor", float(line_counts.min()),
              delta ** (-2 * params.alpha + 7 * params.gamma
                        + params.alpha * params.eta3 + 2 * params.eta4 + 3 * params.eps),
              note="per-interval line count vs the displayed bound")

    # uniform measure on the union of J and its decay report
    centers = -s.half + (j_intervals + 0.5) * delta
    decay_max = 0.0
    for r in s.dyadic_radii(r_max=1.0):
        within = (
            np.searchsorted(centers, centers + r, side="right")
            - np.searchsorted(centers, centers - r, side="left")
        )
        mu_ball = within.max() / len(j_intervals)
        bound = delta**params.eps * delta**-params.lambda1 * r**params.alpha
        decay_max = max(decay_max, mu_ball / bound)
    trace.add("mu_decay", decay_max, polylog_budget(delta),
              note="max of mu(B(x,r)) / (d^e d^-l1 r^a) vs the budget")

    # F = dual points of Omega'
    f_pts = []
    f_lines = []
    dropped = 0
    for idx_line in omega_prime:
        line = frame.lines[idx_line]
        if line.s == 0.0:
            dropped += 1
            continue
        dual = line.to_dual()
        f_pts.append((dual.vx, dual.vy))
        f_lines.append(idx_line)
    if not f_pts:
        raise PipelineDegenerate("F", "no dual representations")
    f_pts = np.array(f_pts)
    f_radius = float(np.sqrt((f_pts**2).sum(axis=1)).max())
    trace.add("F_radius", f_radius, delta**-params.lambda2,
              note="max |phi(omega)| vs delta^-lambda2", dropped=dropped)

    # eq-(4.10)-style bi-Lipschitz diagnostic on sampled pairs
    if len(f_pts) >= 2:
        take = min(len(f_pts), 64)
        sel = rng.choice(len(f_pts), size=take, replace=False)
        ratios = []
        for a_pos in range(take):
            for b_pos in range(a_pos + 1, take):
                ia, ib = int(sel[a_pos]), int(sel[b_pos])
                d = line_distance(frame.lines[f_lines[ia]], frame.lines[f_lines[ib]])
                if d == 0:
                    continue
                gap = math.hypot(*(f_pts[ia] - f_pts[ib]))
                ratios.append(gap / d)
        if ratios:
            trace.add("phi_bilipschitz_low", min(ratios), None,
                      note="min |phi-phi'|/d", )
            trace.add("phi_bilipschitz_high", max(ratios),
                      delta**(-2 * params.eta3),
                      note="max |phi-phi'|/d vs delta^-2*eta3")
        d_min = math.inf
        for a_pos in range(min(len(f_pts), 256)):
            diffs = f_pts[a_pos + 1 :] - f_pts[a_pos]
            if len(diffs):
                d_min = min(d_min, float(np.sqrt((diffs**2).sum(axis=1)).min()))
        trace.add("F_separation", d_min, delta,
                  note="min pairwise gap in F vs delta (delta/C-separated)")
    return img, a_cols, a_star, j_intervals, per_interval_lines, f_pts, np.array(f_lines)


def final_accounting(frame: Frame, inst: FurstInstance, eprime: CellSet,
                     omega_prime: np.ndarray, j_intervals: np.ndarray,
                     f_pts: np.ndarray, f_lines: np.ndarray, y0: float,
                     params: PipelineParams, trace):
    """Per-interval fibers, their 1-d projection counts, and a fully
    explicit lower-bound chain for |E| (every constant auditable; weak but
    sound, asserted against the true measure)."""
    s = inst.scale
    delta = s.delta
    n = s.n
    line_pos = {int(l): t for t, l in enumerate(f_lines)}

    # per-line cell data inside E'
    per_line = {}
    for idx_line in omega_prime:
        mine = np.intersect1d(frame.r_cells[idx_line], eprime.cells, assume_unique=True)
        if len(mine):
            ii, jj = mine // n, mine % n
            cx = -s.half + (ii + 0.5) * delta
            cy = -s.half + (jj + 0.5) * delta
            per_line[int(idx_line)] = (cx, cy)

    fiber_counts = []
    pi_counts = []
    certified_rows = 0
    parity_buckets = {(0, 0): set(), (0, 1): set(), (1, 0): set(), (1, 1): set()}
    y_lo_ext = max(y0 - 5 * delta, delta)
    y_hi_ext = 2 * y0 + 5 * delta
    for col in j_intervals:
        x0 = -s.half + (col + 0.5) * delta
        norm = math.sqrt(1.0 + x0 * x0)
        nx, ny = 1.0 / norm, -x0 / norm
        rows = set()
        pis = []
        for idx_line, (cx, cy) in per_line.items():
            dist = np.abs(cx * nx + cy * ny)
            t = int(dist.argmin())
            if dist[t] > 3 * delta:
                continue
            if idx_line in line_pos:
                # phi(omega) = (a, b) of psi(omega); Pi_x(a, b) = a*x + b
                vx, vy = f_pts[line_pos[idx_line]]
                pis.append(vx * x0 + vy)
            # foot of the witness center on the origin line {x = x0*y}
            off = cx[t] * nx + cy[t] * ny
            py = cy[t] - off * ny
            if not (y_lo_ext - delta <= py <= y_hi_ext + delta) or py <= 0:
                continue
            rows.add(math.floor((1.0 / py) / delta))
        if pis:
            pi_counts.append(len(np.unique(np.floor(np.array(pis) / delta).astype(np.int64))))
        if rows:
            fiber_counts.append(len(rows))
            certified_rows += len(rows)
            for row in rows:
                parity_buckets[(int(col) % 2, int(row) % 2)].add((int(col), int(row)))

    if not fiber_counts:
        trace.add("final_lower_bound", 0.0, inst.e_union.measure,
                  note="no certified fibers; trivial bound")
        return 0.0
    trace.add("fiber_lines_floor", float(min(fiber_counts)),
              delta ** (-2 * params.alpha + params.lambda4),
              note="min per-fiber certified rows vs delta^(-2a+l4)")
    if pi_counts:
        trace.add("pi_projection_floor", float(min(pi_counts)), None,
                  note="min N_delta(Pi_x F_x) over selected intervals")
        trace.add("q_aggregate", float(len(j_intervals) * min(pi_counts)), None,
                  note="|A'| * min fiber projection count (paper-shaped)")

    n_parity = max(len(v) for v in parity_buckets.values())
    m_exp = distortion_lower_constant(y_lo_ext, y_hi_ext, x_max=s.half + 4 * delta)
    rho0 = delta * m_exp
    # disjoint balls B(q, rho0) inside Q; Jacobian transfer; 4*delta dilation
    q_mass = n_parity * math.pi * rho0 * rho0
    s_mass = (y_lo_ext**3) * q_mass
    lower = s_mass / 81.0
    trace.add("final_lower_bound", lower, inst.e_union.measure,
              note="sound explicit |E| lower bound (must not exceed |E|)",
              certified_rows=certified_rows, parity_points=n_parity,
              rho0=rho0, expansion_m=m_exp)
    if lower > inst.e_union.measure * (1 + 1e-9):
        raise InvariantViolation("final lower bound exceeds the true measure")
    gain = math.log(lower) / math.log(delta) if lower > 0 else math.inf
    trace.add("achieved_exponent", gain, 2 - 2 * params.alpha - params.gamma,
              note="log_delta of the bound vs the size exponent")
    return lower


def run_pipeline(inst: FurstInstance, params: PipelineParams = None,
                 seed: int = 0) -> PipelineTrace:
    """Run all stages in order; records every displayed inequality, asserts
    only exact-arithmetic facts, aborts only on structural emptiness."""
    if inst.alpha > 0.5:
        raise InvalidParameter("the pipeline applies for alpha <= 1/2")
    pc = stats.relation_pairs(inst)
    gamma = params.gamma if params is not None else pc.gamma_measured
    if params is None:
        params = PipelineParams(alpha=inst.alpha, gamma=gamma)
    trace = PipelineTrace(params=params, gamma_used=gamma, seed=seed)
    trace.values["gamma_measured"] = pc.gamma_measured
    trace.values["product_deficiency"] = pc.product_deficiency
    rng = np.random.default_rng(seed)
    s = inst.scale
    delta = s.delta

    slopes_ok = all(
        abs(math.cos(l.theta)) <= abs(math.sin(l.theta)) + 1e-12 for l in inst.omega.lines
    )
    trace.values["angle_assumption_ok"] = slopes_ok

    e = inst.e_union
    trace.add("E", e.measure, delta ** (2 - 2 * params.alpha - gamma),
              note="|E| vs delta^(2-2a-g)")

    e1 = stats.heavy_points(inst, gamma, params.eps)
    if e1.is_empty():
        raise PipelineDegenerate("E1")
    trace.add("E1", e1.measure, 0.5 * delta ** (2 * gamma) * e.measure,
              note="|E1| vs half of delta^(2g) |E|")
    if not e1.issubset(e):
        raise InvariantViolation("E1 not inside E")

    y1_flat, y2_flat, e2 = select_pair(inst, e1, params, rng)
    if not e2.issubset(e1):
        raise InvariantViolation("E2 not inside E1")
    trace.add("E2", e2.measure,
              delta ** (2 - 2 * params.alpha + 5 * gamma + 2 * params.eps),
              note="|E2| vs the selection bound",
              y1=_cell_center(s, y1_flat), y2=_cell_center(s, y2_flat))

    omega1, chosen_flat, diag = split_omega(inst, e2, y1_flat, y2_flat, params)
    trace.add("Omega1", len(omega1), None, note="lines missing the chosen ball",
              **diag)
    trace.values["omega1"] = len(omega1)

    frame, e3, eprime, omega_prime, y0, b0 = remove_strip_and_localize(
        inst, omega1, e2, chosen_flat, params, trace
    )
    if not set(omega_prime.tolist()) <= set(omega1.tolist()):
        raise InvariantViolation("Omega' not inside Omega1")
    if not eprime.issubset(frame.translate_set(e2)):
        raise InvariantViolation("E' not inside the translated E2")
    trace.values.update({"y0": y0, "b0": b0, "omega_prime": len(omega_prime),
                         "clipped_cells": frame.clipped_cells})

    img, a_cols, a_star, j_intervals, per_lines, f_pts, f_lines = build_mu_and_f(
        frame, inst, eprime, omega_prime, y0, params, trace, rng
    )
    lower = final_accounting(frame, inst, eprime, omega_prime, j_intervals,
                             f_pts, f_lines, y0, params, trace)
    trace.sets.update({
        "E1": e1, "E2": e2, "E3": e3, "Eprime": eprime,
        "psi_image": img, "A_columns": a_cols, "A_star": a_star,
    })
    trace.values["final_lower_bound"] = lower
    trace.values["J"] = [int(j) for j in j_intervals]
    trace.values["F_points"] = f_pts
    return trace
