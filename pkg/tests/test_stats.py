import math

import numpy as np
import pytest

from furst import stats
from furst.errors import InsufficientData, InvalidParameter
from furst.generators import FurstInstance, gen_cantor_target, gen_train_track
from furst.grid import CellSet, Scale, rasterize_tube
from furst.linespace import Line


def single_tube_instance(s=None, alpha=0.5):
    s = s or Scale(6)
    line = Line.vertical(1.0)
    r = rasterize_tube(line, 2 * s.delta, s)
    return FurstInstance.build(s, alpha, 0.5, [line], [r], validate=False)


def sparse_column_instance(s=None, alpha=0.5):
    """One vertical line carrying ~delta^-alpha cells (honest alpha)."""
    s = s or Scale(6)
    line = Line.vertical(1.0)
    n_pts = round(2.0 ** (alpha * s.k))
    ys = 1.0 + np.arange(n_pts) * (1.0 / n_pts)
    r = CellSet.from_points(s, np.full(n_pts, 1.0), ys)
    return FurstInstance.build(s, alpha, 0.5, [line], [r], validate=False)


class TestRelationPairs:
    def test_single_tube(self):
        inst = single_tube_instance()
        pc = stats.relation_pairs(inst)
        assert pc.union_pairs == pc.sum_pairs == inst.e_union.cell_count**2
        assert pc.gamma_measured == 0.0
        assert pc.product_deficiency == 0.0

    def test_two_disjoint_tubes(self):
        s = Scale(6)
        l1, l2 = Line.vertical(1.0), Line.vertical(2.0)
        r1 = rasterize_tube(l1, 2 * s.delta, s)
        r2 = rasterize_tube(l2, 2 * s.delta, s)
        inst = FurstInstance.build(s, 0.5, 0.5, [l1, l2], [r1, r2], validate=False)
        pc = stats.relation_pairs(inst)
        assert pc.union_pairs == pc.sum_pairs

    def test_union_at_most_sum_with_overlap(self):
        s = Scale(6)
        l1, l2 = Line.vertical(0.0), Line.horizontal(0.0)
        r1 = rasterize_tube(l1, 2 * s.delta, s)
        r2 = rasterize_tube(l2, 2 * s.delta, s)
        inst = FurstInstance.build(s, 0.5, 0.5, [l1, l2], [r1, r2], validate=False)
        pc = stats.relation_pairs(inst)
        assert pc.union_pairs < pc.sum_pairs  # crossing tubes share cells
        assert pc.gamma_measured >= 0.0

    def test_train_track_nearly_disjoint(self):
        inst = gen_train_track(0.5, 1.0, Scale(8), seed=1)
        pc = stats.relation_pairs(inst)
        budget = math.log2(1 / inst.scale.delta) ** 3
        assert pc.union_pairs >= pc.sum_pairs / budget


class TestStabilizers:
    def test_singleton_and_identity(self, rng):
        inst = gen_cantor_target(0.5, 1.0, Scale(7), seed=2)
        cell_ids, cell_ptr, cell_tubes, tube_ptr, _ = inst.incidence
        # double counting: sum_x |Omega_x| = sum_omega |R_omega|, recomputed
        # independently from the per-tube sets
        total = sum(r.cell_count for r in inst.r_sets)
        assert int(cell_ptr[-1]) == total
        assert stats.double_counting_identity(inst)
        # brute per-cell check on a sample
        for pos in rng.integers(0, len(cell_ids), 50):
            flat = int(cell_ids[pos])
            want = {t for t, r in enumerate(inst.r_sets)
                    if flat in set(r.cells.tolist())}
            i, j = divmod(flat, inst.scale.n)
            assert set(stats.omega_stab(inst, (i, j)).tolist()) == want

    def test_origin_fan(self):
        # all rays of a cantor target pass through cells near the origin,
        # but R-sets live in the annulus, so stabilizers stay small there
        inst = gen_cantor_target(0.5, 0.5, Scale(7), seed=1)
        _, counts = stats.related_counts(inst)
        assert counts.min() >= 1


class TestHeavyPoints:
    def test_vacuous_threshold_gives_everything(self):
        inst = sparse_column_instance(alpha=0.5)
        e1 = stats.heavy_points(inst, gamma=1.0, eps=0.01)
        assert e1 == inst.e_union

    def test_single_tube_strict_threshold_empty(self):
        # gamma + eps < alpha makes the single-tube related mass fall short
        inst = sparse_column_instance(alpha=0.5)
        e1 = stats.heavy_points(inst, gamma=0.0, eps=0.01)
        assert e1.is_empty()

    def test_train_track_lemma_prediction(self):
        inst = gen_train_track(0.5, 1.0, Scale(8), seed=1)
        pc = stats.relation_pairs(inst)
        e1 = stats.heavy_points(inst, pc.gamma_measured, eps=0.05)
        s = inst.scale
        budget = math.log2(1 / s.delta) ** 3
        predicted = 0.5 * s.delta ** (2 * pc.gamma_measured) * inst.e_union.measure
        assert e1.measure >= predicted / budget


class TestStripMass:
    def test_window_strip(self):
        inst = gen_train_track(0.5, 1.0, Scale(7), seed=0)
        assert stats.strip_mass(inst.e_union, Line.vertical(1.0), 8.0) == inst.e_union.measure

    def test_single_column(self):
        inst = gen_train_track(0.5, 1.0, Scale(7), seed=0)
        s = inst.scale
        xs = np.unique(inst.r_sets[0].cells // s.n)
        x_line = -s.half + float(xs[0]) * s.delta  # the column's left edge
        mass = stats.strip_mass(inst.e_union, Line.vertical(x_line), s.delta)
        assert mass == inst.r_sets[0].measure

    def test_width_below_resolution(self):
        inst = gen_train_track(0.5, 1.0, Scale(6), seed=0)
        with pytest.raises(InvalidParameter):
            stats.strip_mass(inst.e_union, Line.vertical(1.0), inst.scale.delta / 4)


class TestCsBound:
    def test_disjoint_equality(self):
        s = Scale(6)
        sets = [
            CellSet.from_indices(s, np.arange(10 * t, 10 * t + 4), np.full(4, 5))
            for t in range(1, 5)
        ]
        b = stats.cs_lower_bound(sets)
        assert b.bound == pytest.approx(b.union)

    def test_identical_copies(self):
        s = Scale(6)
        one = CellSet.from_indices(s, [3, 4, 5], [7, 7, 7])
        b = stats.cs_lower_bound([one] * 6)
        assert b.bound == pytest.approx(one.measure)

    def test_all_empty(self):
        assert stats.cs_lower_bound([CellSet.empty(Scale(5))]).bound == 0.0

    def test_random_inequality(self, rng):
        s = Scale(5)
        for _ in range(50):
            sets = [
                CellSet.from_indices(s, rng.integers(0, s.n, 30), rng.integers(0, s.n, 30))
                for _ in range(int(rng.integers(1, 6)))
            ]
            b = stats.cs_lower_bound(sets)
            assert b.union >= b.bound - 1e-12
            assert b.slack >= 1.0 - 1e-12


class TestPairwiseIntersections:
    def test_disjoint_and_diagonal(self):
        s = Scale(6)
        lines = [Line.vertical(1.0), Line.vertical(2.0)]
        rs = [rasterize_tube(l, 2 * s.delta, s) for l in lines]
        inst = FurstInstance.build(s, 0.5, 0.5, lines, rs, validate=False)
        rep = stats.pairwise_intersections(inst)
        assert rep.counts[0, 1] == rep.counts[1, 0] == 0
        assert rep.counts[0, 0] == rs[0].cell_count
        assert rep.counts[1, 1] == rs[1].cell_count

    def test_cantor_cap_within_budget(self):
        inst = gen_cantor_target(0.6309, 0.6309, Scale(7), seed=1)
        rep = stats.pairwise_intersections(inst)
        assert rep.max_cap_ratio <= math.log2(1 / inst.scale.delta) ** 3

    def test_matrix_matches_brute_force(self, rng):
        inst = gen_cantor_target(0.5, 0.8, Scale(6), seed=4)
        rep = stats.pairwise_intersections(inst)
        n = len(inst.omega)
        for _ in range(20):
            i, j = rng.integers(0, n, 2)
            want = len(np.intersect1d(inst.r_sets[i].cells, inst.r_sets[j].cells))
            assert rep.counts[i, j] == want


class TestAppendixBound:
    def test_train_track_ratio(self):
        inst = gen_train_track(0.5, 0.5, Scale(8), seed=1)
        rep = stats.appendix_bound(inst)
        budget = math.log2(1 / inst.scale.delta) ** 3
        assert rep.ratio >= 1.0 / budget
        assert rep.identity_ok

    def test_shells_sum_exactly(self):
        inst = gen_cantor_target(0.5, 0.5, Scale(7), seed=2)
        rep = stats.appendix_bound(inst)
        assert sum(rep.shells.values()) == rep.offdiag_total

    def test_full_square_degenerate(self):
        # a window-spanning blob dwarfs the target measure
        s = Scale(6)
        line = Line.vertical(0.0)
        r = rasterize_tube(line, 4.0, s)
        inst = FurstInstance.build(s, 0.5, 0.25, [line], [r], validate=False)
        rep = stats.appendix_bound(inst)
        assert rep.ratio > 1.0

    def test_beta_above_alpha_reduces(self):
        inst = gen_cantor_target(0.5, 1.0, Scale(7), seed=3)
        rep = stats.appendix_bound(inst)
        assert rep.beta_eff == pytest.approx(0.5)


class TestExponentFit:
    def test_exact_power_law(self):
        d0 = 1.37
        runs = [(Scale(k), 2.0 ** (-k * (2 - d0))) for k in (6, 7, 8)]
        fit = stats.exponent_fit(runs)
        assert fit.dimension == pytest.approx(d0, abs=1e-9)
        assert fit.residual < 1e-12

    def test_constant_measure_is_dimension_two(self):
        runs = [(Scale(k), 0.5) for k in (6, 7, 8, 9)]
        assert stats.exponent_fit(runs).dimension == pytest.approx(2.0, abs=1e-12)

    def test_insufficient_scales(self):
        with pytest.raises(InsufficientData):
            stats.exponent_fit([(Scale(6), 0.5), (Scale(6), 0.4), (Scale(7), 0.3)])

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidParameter):
            stats.exponent_fit([(Scale(6), 0.0), (Scale(7), 0.1), (Scale(8), 0.1)])


class TestGamma0:
    def test_values(self):
        assert stats.gamma0_formula(0.5, 1.0) == pytest.approx(1 / 1488)
        assert stats.gamma0_formula(0.25, 1.0) == pytest.approx(1 / 2800)
        assert stats.gamma0_formula(0.5, 0.0) == 0.0

    def test_domain(self):
        with pytest.raises(InvalidParameter):
            stats.gamma0_formula(0.0, 1.0)
        with pytest.raises(InvalidParameter):
            stats.gamma0_formula(0.7, 1.0)
        with pytest.raises(InvalidParameter):
            stats.gamma0_formula(0.5, -1.0)
