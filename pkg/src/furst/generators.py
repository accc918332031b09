"""Construction of discretized Furstenberg instances.

All randomness flows from numpy's PCG64 (`default_rng`) seeded with the
given 64-bit seed; per-role substreams come from SeedSequence.spawn in a
fixed order, so instances are bit-reproducible and truncations at different
levels k share their coarse structure (needed for dimension regressions).
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConstructionFailure, InvalidParameter, InvariantViolation, NotInSet
from .grid import CellSet, Scale
from .linespace import Line, LineFamily, family_nonconcentration, rasterize_line_set
from .regularity import polylog_budget, verify_set_class

#: Budget used by instance validation: C=2, i.e. (log2(1/delta))^2. The
#: C=1 default is kept for pure verdict reporting; construction noise from
#: rotation and dyadic rounding needs the square at small k.
VALIDATION_BUDGET_POWER = 2.0


def balanced_cantor(depth: int, alpha: float, rng) -> np.ndarray:
    """Sorted dyadic indices (at `depth`) of a balanced Cantor-type subset
    of [0,1) with ~2^(alpha*m) surviving intervals at every level m.

    Level by level each surviving interval splits in two; enough intervals
    (chosen by the rng) keep both children to hit the rounded global count,
    the rest keep one random child. Truncation at a smaller depth with the
    same rng seed yields the coarsening of the deeper set.
    """
    if depth < 1:
        raise InvalidParameter("depth must be >= 1")
    if not (0 < alpha <= 1):
        raise InvalidParameter("alpha must be in (0, 1]")
    idx = np.zeros(1, dtype=np.int64)
    for m in range(1, depth + 1):
        target = int(round(2.0 ** (alpha * m)))
        target = max(len(idx), min(target, 2 * len(idx), 1 << m))
        upgrades = target - len(idx)
        both = np.zeros(len(idx), dtype=bool)
        if upgrades > 0:
            both[rng.choice(len(idx), size=upgrades, replace=False)] = True
        side = rng.integers(0, 2, size=len(idx))
        children = [idx[both] * 2, idx[both] * 2 + 1, idx[~both] * 2 + side[~both]]
        idx = np.sort(np.concatenate(children))
    return idx


@dataclass(frozen=True)
class FurstInstance:
    """A delta-separated line family, one (delta, alpha)-set per line inside
    its 2*delta tube, and the cached union."""

    scale: Scale
    alpha: float
    beta: float
    omega: LineFamily
    r_sets: tuple
    e_union: CellSet
    reports: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, scale, alpha, beta, lines, r_sets, meta=None, validate=True):
        fam = LineFamily(scale, tuple(lines), beta)
        e = CellSet.union_all(scale, r_sets)
        inst = cls(
            scale=scale,
            alpha=alpha,
            beta=beta,
            omega=fam,
            r_sets=tuple(r_sets),
            e_union=e,
            meta=dict(meta or {}),
        )
        if validate:
            inst.reports.update(inst.verify(raise_on_failure=True))
        return inst

    def verify(self, raise_on_failure: bool = False) -> dict:
        """Machine-check the three instance invariants; returns a report."""
        s = self.scale
        budget = polylog_budget(s.delta, VALIDATION_BUDGET_POWER)
        out = {"budget": budget, "ok": True, "problems": []}

        sep = self.omega.pairwise_min_distance()
        out["min_line_separation"] = sep
        if sep < s.delta * (1 - 1e-12):
            out["ok"] = False
            out["problems"].append(f"family not delta-separated: {sep:.3g}")

        fam_report = family_nonconcentration(self.omega, self.beta)
        out["family_max_ratio"] = fam_report.max_ratio
        out["family_mass_ratio"] = len(self.omega) * s.delta**self.beta
        if fam_report.max_ratio > budget:
            out["ok"] = False
            out["problems"].append("family concentration exceeds budget")
        if len(self.omega) < s.delta**-self.beta / budget:
            out["ok"] = False
            out["problems"].append("family too small for beta")

        worst = 0.0
        worst_mass = math.inf
        for idx, (line, r) in enumerate(zip(self.omega.lines, self.r_sets)):
            # same predicate as rasterize_tube(line, 2*delta): center distance
            nx, ny, c = line.normal_form()
            cx, cy = r.centers_of_occupied()
            if (np.abs(cx * nx + cy * ny - c) > 2 * s.delta).any():
                out["ok"] = False
                out["problems"].append(f"R[{idx}] escapes its tube")
            rep = verify_set_class(r, self.alpha, 0.0)
            worst = max(worst, rep.max_ratio)
            worst_mass = min(worst_mass, rep.mass_ratio)
        out["tube_max_ratio"] = worst
        out["tube_min_mass_ratio"] = worst_mass
        if worst > budget:
            out["ok"] = False
            out["problems"].append("some R concentration exceeds budget")
        if worst_mass < 1.0 / budget:
            out["ok"] = False
            out["problems"].append("some R below the mass floor")

        if raise_on_failure and not out["ok"]:
            raise InvariantViolation("; ".join(out["problems"]))
        return out

    # -- incidence index -----------------------------------------------------

    @cached_property
    def incidence(self):
        """CSR index linking occupied cells of the union to the tubes through
        them: (cell_ids, cell_ptr, cell_tubes, tube_ptr, tube_cells)."""
        tube_cells = [r.flat_ids() for r in self.r_sets]
        tube_ptr = np.zeros(len(tube_cells) + 1, dtype=np.int64)
        np.cumsum([len(t) for t in tube_cells], out=tube_ptr[1:])
        flat = (
            np.concatenate(tube_cells)
            if tube_cells
            else np.zeros(0, dtype=np.int64)
        )
        owner = np.repeat(np.arange(len(tube_cells), dtype=np.int64), np.diff(tube_ptr))
        order = np.lexsort((owner, flat))
        flat_s, owner_s = flat[order], owner[order]
        cell_ids, starts = np.unique(flat_s, return_index=True)
        cell_ptr = np.concatenate([starts, [len(flat_s)]]).astype(np.int64)
        return cell_ids, cell_ptr, owner_s, tube_ptr, flat

    def stab_of_cell(self, i: int, j: int) -> np.ndarray:
        """Indices of the lines whose R contains cell (i, j)."""
        cell_ids, cell_ptr, cell_tubes, _, _ = self.incidence
        flat = i * self.scale.n + j
        pos = np.searchsorted(cell_ids, flat)
        if pos >= len(cell_ids) or cell_ids[pos] != flat:
            raise NotInSet(f"cell ({i}, {j}) is not in the union")
        return np.sort(cell_tubes[cell_ptr[pos] : cell_ptr[pos + 1]])

    # -- serialization ---------------------------------------------------------

    def save(self, folder) -> None:
        folder = Path(folder)
        folder.mkdir(parents=True, exist_ok=True)
        (folder / "family.json").write_text(self.omega.to_json())
        for idx, r in enumerate(self.r_sets):
            (folder / f"r_{idx:04d}.bin").write_bytes(r.to_bytes())
        (folder / "e_union.bin").write_bytes(self.e_union.to_bytes())
        manifest = {
            "k": self.scale.k,
            "alpha": self.alpha,
            "beta": self.beta,
            "lines": len(self.omega),
            "cells": self.e_union.cell_count,
            "measure": self.e_union.measure,
            "meta": self.meta,
            "reports": _jsonable(self.reports),
        }
        (folder / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, folder, validate: bool = False) -> "FurstInstance":
        folder = Path(folder)
        manifest = json.loads((folder / "manifest.json").read_text())
        fam = LineFamily.from_json((folder / "family.json").read_text())
        r_sets = tuple(
            CellSet.from_bytes((folder / f"r_{idx:04d}.bin").read_bytes())
            for idx in range(manifest["lines"])
        )
        inst = cls.build(
            scale=fam.scale,
            alpha=manifest["alpha"],
            beta=manifest["beta"],
            lines=fam.lines,
            r_sets=r_sets,
            meta=manifest.get("meta", {}),
            validate=validate,
        )
        stored = CellSet.from_bytes((folder / "e_union.bin").read_bytes())
        if stored != inst.e_union:
            raise InvariantViolation("stored union does not match the parts")
        return inst


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _leaf_samples(idx: np.ndarray, lo: float, width: float, depth: int, per_leaf: int = 3):
    """Sample points inside each surviving dyadic leaf of [lo, lo+width)."""
    h = width * 2.0**-depth
    offs = (np.arange(per_leaf) + 0.5) / per_leaf
    return (lo + (idx[:, None] + offs[None, :]) * h).reshape(-1)


def gen_cantor_target(alpha: float, beta: float, s: Scale, seed: int) -> FurstInstance:
    """Rotations of a radial Cantor set about the origin: a Cantor set of
    dimension ~alpha on [1/2, 1] copied along rays whose angles form a
    Cantor set of dimension ~beta inside a pi/4 arc (placed within pi/4 of
    the y-axis so the proof pipeline applies directly)."""
    if not (0 < alpha <= 1 and 0 < beta <= 1):
        raise InvalidParameter("gen_cantor_target needs alpha, beta in (0, 1]")
    depth = s.k - 1
    if round(2.0 ** (alpha * depth)) < 2 or round(2.0 ** (beta * depth)) < 2:
        raise ConstructionFailure(
            f"(alpha={alpha}, beta={beta}) yields fewer than 2 pieces at k={s.k}"
        )
    seq = np.random.SeedSequence(seed).spawn(2)
    rng_ang = np.random.default_rng(seq[0])
    rng_pos = np.random.default_rng(seq[1])

    ang_idx = balanced_cantor(depth, beta, rng_ang)
    pos_idx = balanced_cantor(depth, alpha, rng_pos)
    # achieved dimensions after dyadic rounding, recorded in meta
    ach_beta = math.log2(len(ang_idx)) / depth
    ach_alpha = math.log2(len(pos_idx)) / depth

    arc = math.pi / 4
    angles = (ang_idx + 0.5) * arc * 2.0**-depth + math.pi / 2
    radii = _leaf_samples(pos_idx, 0.5, 0.5, depth)

    lines = [Line(theta, 0.0) for theta in angles]
    r_sets = [rasterize_line_set(l, radii, s) for l in lines]
    return FurstInstance.build(
        s, alpha, beta, lines, r_sets,
        meta={
            "generator": "cantor_target", "seed": seed,
            "alpha_requested": alpha, "beta_requested": beta,
            "alpha_achieved": ach_alpha, "beta_achieved": ach_beta,
        },
    )


def gen_train_track(alpha: float, beta: float, s: Scale, seed: int) -> FurstInstance:
    """Parallel vertical lines over a Cantor set of abscissas in [1, 2], all
    carrying one shared Cantor set of heights in [1, 2]; |E| ~ delta^(2-a-b)
    by construction."""
    if not (0 < alpha <= 0.5):
        raise InvalidParameter("gen_train_track needs alpha in (0, 1/2]")
    if not (0 < beta <= 1):
        raise InvalidParameter("a parallel family cannot exceed dimension 1")
    seq = np.random.SeedSequence(seed).spawn(2)
    b_idx = balanced_cantor(s.k, beta, np.random.default_rng(seq[0]))
    c_idx = balanced_cantor(s.k, alpha, np.random.default_rng(seq[1]))

    delta = s.delta
    xs = 1.0 + b_idx * delta  # cell-aligned abscissas
    ys = 1.0 + (c_idx + 0.5) * delta  # shared heights, one cell each

    lines = [Line.vertical(x) for x in xs]
    r_sets = [
        CellSet.from_points(s, np.full(len(ys), x), np.asarray(ys)) for x in xs
    ]
    return FurstInstance.build(
        s, alpha, beta, lines, r_sets,
        meta={
            "generator": "train_track", "seed": seed,
            "alpha_achieved": math.log2(len(c_idx)) / s.k,
            "beta_achieved": math.log2(len(b_idx)) / s.k,
        },
    )


def _beta_prune(lines, scale: Scale, beta: float, rng) -> list:
    """Greedy non-concentration prune of a delta-separated family: keep a
    line iff no member's count inside any dyadic ball would exceed
    ceil((r/delta)^beta)."""
    from .linespace import features

    radii = np.array(scale.dyadic_radii(r_max=2.0))
    caps = np.ceil((radii / scale.delta) ** beta).astype(np.int64)
    feat = features(lines)
    order = rng.permutation(len(lines))
    kept_feat = np.empty((len(lines), 4))
    kept_counts = np.zeros((len(lines), len(radii)), dtype=np.int64)
    kept_idx = []
    m = 0
    for i in order:
        if m:
            d0 = kept_feat[:m, 0] - feat[i, 0]
            d1 = kept_feat[:m, 1] - feat[i, 1]
            d2 = kept_feat[:m, 2] - feat[i, 2]
            d3 = kept_feat[:m, 3] - feat[i, 3]
            d = np.sqrt(d0 * d0 + d1 * d1) + np.sqrt(d2 * d2 + d3 * d3)
            within = d[:, None] <= radii[None, :]
            mine = within.sum(axis=0) + 1
            if (mine > caps).any():
                continue
            if ((kept_counts[:m] + within) > caps[None, :])[within.any(axis=1)].any():
                continue
            kept_counts[:m] += within
            kept_counts[m] = mine
        else:
            kept_counts[0] = 1
        kept_feat[m] = feat[i]
        kept_idx.append(i)
        m += 1
    return [lines[i] for i in sorted(kept_idx)]


def gen_random(alpha: float, beta: float, s: Scale, seed: int) -> FurstInstance:
    """Generic sampler: uniform lines meeting B(0,1) pruned to a
    (delta, beta)-family, each carrying a balanced-Cantor subset of its
    tube chain. Deterministic in the seed."""
    if not (0 < alpha <= 1 and 0 < beta <= 2):
        raise InvalidParameter("gen_random needs alpha in (0,1], beta in (0,2]")
    seq = np.random.SeedSequence(seed).spawn(3)
    rng_lines = np.random.default_rng(seq[0])
    rng_prune = np.random.default_rng(seq[1])
    pos_seq = seq[2].spawn(1 << 16)

    delta = s.delta
    n_cand = int(4 * delta**-beta) + 64
    thetas = rng_lines.uniform(0, math.pi, n_cand)
    offs = rng_lines.uniform(-1.0, 1.0, n_cand)

    # keep the busiest pi/4 direction arc and rotate it to [pi/4, pi/2)
    arcs = np.floor(thetas / (math.pi / 4)).astype(int) % 4
    best = int(np.bincount(arcs, minlength=4).argmax())
    sel = arcs == best
    rot = (1 - best) * math.pi / 4
    cand = [Line(t + rot, v) for t, v in zip(thetas[sel], offs[sel])]

    from .linespace import separated_net

    net = separated_net(cand, delta)
    kept = _beta_prune(net, s, beta, rng_prune)
    budget = polylog_budget(delta, VALIDATION_BUDGET_POWER)
    if len(kept) < delta**-beta / budget:
        raise ConstructionFailure(
            f"pruned family too small: {len(kept)} < {delta**-beta / budget:.1f}"
        )

    depth = s.k + 1
    if round(2.0 ** (alpha * depth)) < 2:
        raise ConstructionFailure("alpha too small for the grid")
    r_sets = []
    for idx, line in enumerate(kept):
        rng_pos = np.random.default_rng(pos_seq[idx % len(pos_seq)])
        t_idx = balanced_cantor(depth, alpha, rng_pos)
        ts = _leaf_samples(t_idx, -1.0, 2.0, depth)
        r_sets.append(rasterize_line_set(line, ts, s))
    return FurstInstance.build(
        s, alpha, beta, kept, r_sets,
        meta={"generator": "random", "seed": seed},
    )


GENERATORS = {
    "cantor_target": gen_cantor_target,
    "train_track": gen_train_track,
    "random": gen_random,
}
