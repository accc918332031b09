import math

import numpy as np
import pytest

from furst.errors import ConstructionFailure, InvalidParameter, NotInSet
from furst.generators import (
    FurstInstance,
    balanced_cantor,
    gen_cantor_target,
    gen_random,
    gen_train_track,
)
from furst.grid import Scale


class TestBalancedCantor:
    def test_counts_track_the_exponent(self, rng):
        for alpha in (0.3, 0.5, 0.6309, 1.0):
            idx = balanced_cantor(8, alpha, np.random.default_rng(7))
            assert len(idx) == round(2.0 ** (alpha * 8))
            assert len(np.unique(idx)) == len(idx)

    def test_truncation_is_nested(self):
        deep = balanced_cantor(8, 0.6, np.random.default_rng(3))
        shallow = balanced_cantor(5, 0.6, np.random.default_rng(3))
        assert set((deep >> 3).tolist()) == set(shallow.tolist())

    def test_full_family(self):
        idx = balanced_cantor(6, 1.0, np.random.default_rng(0))
        assert len(idx) == 64

    def test_rejects_bad_args(self):
        with pytest.raises(InvalidParameter):
            balanced_cantor(0, 0.5, np.random.default_rng(0))
        with pytest.raises(InvalidParameter):
            balanced_cantor(5, 1.5, np.random.default_rng(0))


class TestCantorTarget:
    def test_invariants_and_determinism(self):
        a = gen_cantor_target(math.log2(2) / math.log2(3), math.log2(2) / math.log2(3), Scale(8), seed=1)
        assert a.reports["ok"]
        b = gen_cantor_target(math.log2(2) / math.log2(3), math.log2(2) / math.log2(3), Scale(8), seed=1)
        assert a.e_union == b.e_union
        for ra, rb in zip(a.r_sets, b.r_sets):
            assert ra == rb

    def test_full_case_matches_sector_area(self):
        inst = gen_cantor_target(1.0, 1.0, Scale(9), seed=1)
        sector = (math.pi / 4) * (1.0 - 0.25) / 2  # annulus sector, radii [1/2, 1]
        assert sector / 4 <= inst.e_union.measure <= sector * 4

    def test_lines_point_near_vertical(self):
        inst = gen_cantor_target(0.5, 0.5, Scale(7), seed=0)
        for l in inst.omega.lines:
            assert abs(math.cos(l.theta)) <= abs(math.sin(l.theta)) + 1e-12
            assert l.s == 0.0  # rays through the origin

    def test_infeasible_parameters(self):
        with pytest.raises(ConstructionFailure):
            gen_cantor_target(0.05, 0.5, Scale(5), seed=0)
        with pytest.raises(InvalidParameter):
            gen_cantor_target(1.5, 0.5, Scale(6), seed=0)


class TestTrainTrack:
    def test_measure_formula(self):
        inst = gen_train_track(0.5, 1.0, Scale(8), seed=1)
        ratio = inst.e_union.measure / 2.0 ** (-8 * (2 - 1.5))
        assert 1 / 16 <= ratio <= 16
        assert inst.reports["ok"]

    def test_columns_share_heights(self):
        inst = gen_train_track(0.4, 0.8, Scale(7), seed=2)
        rows = {tuple(np.unique(r.cells % inst.scale.n)) for r in inst.r_sets}
        assert len(rows) == 1  # one shared height set

    def test_product_deficiency_near_zero(self):
        from furst import stats

        inst = gen_train_track(0.5, 1.0, Scale(8), seed=1)
        pc = stats.relation_pairs(inst)
        assert pc.union_pairs == pc.sum_pairs  # parallel disjoint columns
        assert 0.0 <= pc.product_deficiency <= 0.2
        assert pc.gamma_measured == pytest.approx(0.5, abs=0.05)

    def test_beta_above_one_rejected(self):
        with pytest.raises(InvalidParameter):
            gen_train_track(0.5, 1.2, Scale(7), seed=0)


class TestRandomInstance:
    def test_invariants(self):
        inst = gen_random(0.7, 1.0, Scale(7), seed=3)
        assert inst.reports["ok"]

    def test_seeds_differ_but_both_valid(self):
        a = gen_random(0.6, 0.8, Scale(6), seed=1)
        b = gen_random(0.6, 0.8, Scale(6), seed=2)
        assert a.e_union != b.e_union
        assert a.reports["ok"] and b.reports["ok"]

    @pytest.mark.slow
    def test_near_kakeya_full_case(self):
        inst = gen_random(1.0, 2.0, Scale(6), seed=0)
        covered = 4 * math.pi  # the 1-neighborhood of B(0,1)
        assert covered / 16 <= inst.e_union.measure <= covered * 16


class TestInstanceStructure:
    def test_stab_and_errors(self):
        inst = gen_train_track(0.5, 1.0, Scale(6), seed=0)
        i, j = divmod(int(inst.r_sets[0].cells[0]), inst.scale.n)
        assert 0 in inst.stab_of_cell(i, j)
        with pytest.raises(NotInSet):
            inst.stab_of_cell(0, 0)

    def test_save_load_round_trip(self, tmp_path):
        inst = gen_cantor_target(0.5, 0.5, Scale(6), seed=5)
        inst.save(tmp_path / "inst")
        back = FurstInstance.load(tmp_path / "inst")
        assert back.e_union == inst.e_union
        assert len(back.omega) == len(inst.omega)
        for a, b in zip(inst.r_sets, back.r_sets):
            assert a == b

    def test_save_is_deterministic(self, tmp_path):
        for d in ("a", "b"):
            gen_cantor_target(0.5, 0.5, Scale(6), seed=5).save(tmp_path / d)
        for name in ("family.json", "manifest.json", "e_union.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.slow
def test_dimension_regressions_quick():
    """Coarse version of the acceptance regressions (k = 6..8, one seed)."""
    from furst import stats

    for gen, alpha, beta, want, tol in [
        (gen_cantor_target, 0.6309, 0.6309, 1.26, 0.2),
        (gen_train_track, 0.5, 1.0, 1.5, 0.2),
    ]:
        runs = []
        for k in (6, 7, 8):
            inst = gen(alpha, beta, Scale(k), 0)
            runs.append((Scale(k), inst.e_union.measure))
        fit = stats.exponent_fit(runs)
        assert fit.dimension == pytest.approx(want, abs=tol)
