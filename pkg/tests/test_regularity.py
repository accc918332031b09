import math

import numpy as np
import pytest

from furst.grid import CellSet, IntervalSet, Scale
from furst.regularity import (
    frostman_extract,
    frostman_mass_ratio,
    polylog_budget,
    refine_split,
    refine_split_1d,
    square_cap_violations,
    verify_set_class,
)


def random_set(rng, s, count):
    return CellSet.from_indices(s, rng.integers(0, s.n, count), rng.integers(0, s.n, count))


class TestVerifySetClass:
    def test_single_cell(self):
        s = Scale(6)
        a = CellSet.from_indices(s, [100], [100])
        for alpha in (0.3, 1.0, 1.7):
            rep = verify_set_class(a, alpha, 0.0)
            assert rep.max_ratio <= 1.0
            assert rep.mass_ratio == pytest.approx(s.delta**alpha)
        rep = verify_set_class(a, 0.5, 0.1)
        assert rep.mass_ratio == pytest.approx(s.delta ** (0.5 - 0.1))

    def test_full_unit_square_alpha_two(self):
        s = Scale(6)
        ii, jj = np.meshgrid(np.arange(256, 320), np.arange(256, 320), indexing="ij")
        sq = CellSet.from_indices(s, ii.ravel(), jj.ravel())
        rep = verify_set_class(sq, 2.0, 0.0)
        for ratio in rep.per_scale_ratio.values():
            assert 0.25 <= ratio <= 4.0

    def test_empty_flagged(self):
        rep = verify_set_class(CellSet.empty(Scale(6)), 1.0, 0.0)
        assert rep.mass_ratio == 0.0 and rep.flagged

    def test_budget_verdict_is_pure(self, rng):
        rep = verify_set_class(random_set(rng, Scale(5), 64), 1.0, 0.0)
        assert rep.passes(budget=1e9)
        assert not rep.passes(budget=1e-9)

    def test_prefix_and_pairwise_paths_agree(self, rng):
        from furst.regularity import _ball_cell_counts, _prefix_counts

        s = Scale(5)
        a = random_set(rng, s, 120)
        ii, jj = a.indices()
        radii_sq = [1, 4, 64, 1024]
        pair = _ball_cell_counts(a, radii_sq)
        for t, r2 in enumerate(radii_sq):
            assert np.array_equal(pair[:, t], _prefix_counts(a, ii, jj, r2))


class TestFrostman:
    def test_no_pruning_when_compliant(self):
        s = Scale(6)
        # a sparse diagonal at spacing 16 cells satisfies all caps for a=1
        idx = np.arange(0, s.n, 16)
        a = CellSet.from_indices(s, idx, idx)
        assert frostman_extract(a, 1.0) == a

    def test_unit_square_alpha_one(self):
        s = Scale(6)
        ii, jj = np.meshgrid(np.arange(256, 320), np.arange(256, 320), indexing="ij")
        sq = CellSet.from_indices(s, ii.ravel(), jj.ravel())
        out = frostman_extract(sq, 1.0)
        assert 2**6 <= out.cell_count <= 4 * 2**6
        assert square_cap_violations(out, 1.0) == 0

    def test_cluster_alpha_half(self):
        s = Scale(6)
        ii, jj = np.meshgrid(np.arange(100, 104), np.arange(80, 84), indexing="ij")
        cluster = CellSet.from_indices(s, ii.ravel(), jj.ravel())
        out = frostman_extract(cluster, 0.5)
        assert out.issubset(cluster)
        assert square_cap_violations(out, 0.5) == 0

    def test_idempotent(self, rng):
        s = Scale(7)
        a = random_set(rng, s, 900)
        out = frostman_extract(a, 0.8)
        assert frostman_extract(out, 0.8) == out

    def test_random_caps_hold(self, rng):
        for _ in range(20):
            k = int(rng.integers(5, 9))
            s = Scale(k)
            alpha = float(rng.uniform(0.2, 2.0))
            a = random_set(rng, s, int(rng.integers(1, 2000)))
            if a.is_empty():
                continue
            out = frostman_extract(a, alpha)
            assert square_cap_violations(out, alpha) == 0
            assert out.issubset(a)

    def test_mass_ratio(self):
        s = Scale(6)
        a = CellSet.from_indices(s, np.arange(0, s.n, 8), np.zeros(s.n // 8, dtype=int))
        out = frostman_extract(a, 1.0)
        assert frostman_mass_ratio(out, 1.0) == pytest.approx(
            out.cell_count * s.delta
        )

    def test_square_to_ball_constant(self, rng):
        # per-square caps imply ball-count ratios within the factor-4 slack
        s = Scale(6)
        a = random_set(rng, s, 700)
        out = frostman_extract(a, 1.0)
        rep = verify_set_class(out, 1.0, 0.0)
        assert rep.max_ratio <= 4.0


class TestRefineSplit:
    def test_regular_set_has_empty_double_star(self, rng):
        s = Scale(7)
        raw = random_set(rng, s, 500)
        reg = frostman_extract(raw, 1.0)
        sp = refine_split(reg, 1.0, 1.0)
        assert sp.e_double_union.is_empty()
        assert reg.issubset(sp.e_star)

    def test_dense_square_is_captured(self):
        # a fully occupied 16-cell square inside one 0.25-dyadic square at k=7
        s = Scale(7)
        ii, jj = np.meshgrid(np.arange(520, 536), np.arange(520, 536), indexing="ij")
        sq = CellSet.from_indices(s, ii.ravel(), jj.ravel())
        sp = refine_split(sq, 1.0, 0.4)
        hit_scales = [dp for dp, part in sp.e_double_star.items() if not part.is_empty()]
        assert hit_scales, "concentration went undetected"
        assert len(sp.witnesses[0.25]) == 1  # one 0.25-square covers cluster + ring
        assert sp.certificate["witness_ok"]

    def test_empty_input(self):
        sp = refine_split(CellSet.empty(Scale(6)), 1.0, 0.5)
        assert sp.e_star.is_empty() and sp.e_double_union.is_empty()

    def test_certificate_inclusions(self, rng):
        s = Scale(6)
        for _ in range(10):
            e = random_set(rng, s, int(rng.integers(1, 400)))
            sp = refine_split(e, float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.3, 1.2)))
            assert sp.certificate["inclusion_lower"]
            assert sp.certificate["inclusion_upper"]
            # covering property: every E**-cell lies in a witness square
            for dp, part in sp.e_double_star.items():
                if part.is_empty():
                    continue
                m = round(math.log2(dp / s.delta))
                ii, jj = part.indices()
                sq_ids = (ii >> m) * (s.n >> m) + (jj >> m)
                assert set(sq_ids.tolist()) <= set(sp.witnesses[dp].tolist())

    def test_json_serialization(self, rng):
        import json

        s = Scale(5)
        sp = refine_split(random_set(rng, s, 100), 1.0, 0.8)
        blob = json.dumps(sp.to_json_obj())
        assert "witnesses" in json.loads(blob)


class TestRefineSplit1D:
    def test_inclusions_and_uniform_case(self, rng):
        a = IntervalSet.from_indices(8, rng.integers(0, 1 << 11, 300))
        sp = refine_split_1d(a, 0.8, 1.0)
        assert sp.certificate["inclusion_lower"]
        assert sp.certificate["inclusion_upper"]

    def test_dense_block_detected(self):
        a = IntervalSet.from_indices(8, np.arange(512, 768))
        sp = refine_split_1d(a, 0.5, 0.2)
        assert any(not p.is_empty() for p in sp.e_double_star.values())


def test_polylog_budget_values():
    assert polylog_budget(2.0**-8) == 8.0
    assert polylog_budget(2.0**-8, 2.0) == 2 * 64.0


def test_report_polylog_budget_inversion(rng):
    rep = verify_set_class(random_set(rng, Scale(6), 500), 0.5, 0.0)
    c = rep.polylog_budget
    assert c * math.log2(1 / rep.delta) ** c >= rep.max_ratio * (1 - 1e-6)
