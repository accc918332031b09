"""The compiled and pure-python kernels are twins: identical outputs,
bit for bit, on randomized inputs."""

import numpy as np
import pytest

from furst import kernels

pytestmark = pytest.mark.skipif(
    not kernels.COMPILED_AVAILABLE, reason="compiled kernels not built"
)


def _both(fn, *args):
    with kernels.use("python"):
        a = fn(*args)
    with kernels.use("compiled"):
        b = fn(*args)
    return a, b


def test_raster_tube_twins(rng):
    n = 256
    delta, half = 2.0**-5, 4.0
    for _ in range(25):
        theta = rng.uniform(0, np.pi)
        c = rng.uniform(-4, 4)
        w = rng.uniform(delta, 0.5)
        nx, ny = -np.sin(theta), np.cos(theta)
        occ_py = np.zeros((n, n), dtype=bool)
        occ_cy = np.zeros((n, n), dtype=bool)
        with kernels.use("python"):
            kernels.raster_tube(occ_py, delta, half, nx, ny, c, w)
        with kernels.use("compiled"):
            kernels.raster_tube(occ_cy.view(np.uint8), delta, half, nx, ny, c, w)
        assert np.array_equal(occ_py, occ_cy)


def test_union_counts_twins(rng):
    for _ in range(20):
        n_tubes = rng.integers(1, 12)
        tubes = [np.unique(rng.integers(0, 4000, rng.integers(1, 200)))
                 for _ in range(n_tubes)]
        tube_ptr = np.zeros(n_tubes + 1, dtype=np.int64)
        np.cumsum([len(t) for t in tubes], out=tube_ptr[1:])
        tube_cells = np.concatenate(tubes)
        flat = tube_cells
        owner = np.repeat(np.arange(n_tubes, dtype=np.int64), np.diff(tube_ptr))
        order = np.lexsort((owner, flat))
        cell_ids, starts = np.unique(flat[order], return_index=True)
        cell_ptr = np.concatenate([starts, [len(flat)]]).astype(np.int64)
        args = (tube_ptr, tube_cells.astype(np.int64), cell_ptr, owner[order])
        a, b = _both(kernels.union_counts, *args)
        assert np.array_equal(a, b)
        # independent oracle on a few cells
        for pos in rng.integers(0, len(cell_ids), size=5):
            mine = {t for t in range(n_tubes) if cell_ids[pos] in set(tubes[t])}
            union = set()
            for t in mine:
                union |= set(tubes[t])
            assert a[pos] == len(union)


def test_disc_counts_twins(rng):
    n = 128
    occ = rng.random((n, n)) < 0.05
    pref = np.zeros((n + 1, n), dtype=np.int64)
    np.cumsum(occ, axis=0, out=pref[1:])
    ii, jj = np.nonzero(occ)
    ii, jj = ii.astype(np.int64), jj.astype(np.int64)
    for r2 in (1, 9, 100, 3000):
        a, b = _both(kernels.disc_counts, pref, ii, jj, r2)
        assert np.array_equal(a, b)
        # brute oracle
        d2 = (ii[:, None] - ii[None, :]) ** 2 + (jj[:, None] - jj[None, :]) ** 2
        assert np.array_equal(a, (d2 <= r2).sum(axis=1))


def test_greedy_net_twins(rng):
    feat = rng.normal(size=(400, 4))
    for sep in (0.05, 0.3, 1.0):
        a, b = _both(kernels.greedy_net, feat, sep)
        assert np.array_equal(a, b)


def test_nonconc_counts_twins(rng):
    feat = rng.normal(size=(300, 4))
    radii = np.array([0.01, 0.1, 0.5, 2.0, 8.0])
    a, b = _both(kernels.nonconc_counts, feat, radii)
    assert np.array_equal(a, b)
