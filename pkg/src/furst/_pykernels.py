"""Pure numpy/Python implementations of the hot kernels.

These are the fallback twins of the compiled extension `furst._ckernels`.
Both backends implement the same exact contracts bit-for-bit (integer
arithmetic where counts are involved, identical float expressions
elsewhere), so results do not depend on which backend is active.
"""

from math import isqrt

import numpy as np

BACKEND = "python"


def raster_tube(occ, delta, half, nx, ny, c, w):
    """Mark every cell whose center p satisfies |p.(nx,ny) - c| < w.

    occ is the (n, n) bool occupancy grid, index [i, j] for the cell with
    center (-half + (i+0.5)*delta, -half + (j+0.5)*delta). In place.
    """
    n = occ.shape[0]
    centers = -half + (np.arange(n) + 0.5) * delta
    if abs(nx) >= abs(ny):
        for j in range(n):
            y = centers[j]
            t = c - y * ny
            a = (t - w) / nx
            b = (t + w) / nx
            if a > b:
                a, b = b, a
            i0 = int(np.floor((a + half) / delta - 0.5)) - 2
            i1 = int(np.ceil((b + half) / delta - 0.5)) + 2
            if i1 < 0 or i0 >= n:
                continue
            i0 = max(i0, 0)
            i1 = min(i1, n - 1)
            xs = centers[i0 : i1 + 1]
            occ[i0 : i1 + 1, j] |= np.abs(xs * nx + y * ny - c) < w
    else:
        for i in range(n):
            x = centers[i]
            t = c - x * nx
            a = (t - w) / ny
            b = (t + w) / ny
            if a > b:
                a, b = b, a
            j0 = int(np.floor((a + half) / delta - 0.5)) - 2
            j1 = int(np.ceil((b + half) / delta - 0.5)) + 2
            if j1 < 0 or j0 >= n:
                continue
            j0 = max(j0, 0)
            j1 = min(j1, n - 1)
            ys = centers[j0 : j1 + 1]
            occ[i, j0 : j1 + 1] |= np.abs(x * nx + ys * ny - c) < w


def union_counts(tube_ptr, tube_cells, cell_ptr, cell_tubes):
    """Per occupied cell, the number of distinct cells in the union of the
    tubes through it.

    tube_ptr/tube_cells: CSR of sorted flat cell ids per tube.
    cell_ptr/cell_tubes: CSR of tube indices per occupied cell.
    """
    m = len(cell_ptr) - 1
    out = np.empty(m, dtype=np.int64)
    tube_len = np.diff(tube_ptr)
    deg = np.diff(cell_ptr)
    starts = cell_ptr[:-1]

    single = deg == 1
    out[single] = tube_len[cell_tubes[starts[single]]]

    for idx in np.nonzero(~single)[0]:
        tubes = cell_tubes[cell_ptr[idx] : cell_ptr[idx + 1]]
        parts = [tube_cells[tube_ptr[t] : tube_ptr[t + 1]] for t in tubes]
        out[idx] = np.unique(np.concatenate(parts)).size
    return out


def disc_counts(rowpref, ii, jj, r2):
    """Occupied-cell counts in closed discs of squared radius r2 (cell units)
    around the centers (ii[t], jj[t]).

    rowpref is the (n+1, n) per-column prefix-sum table:
    rowpref[i, j] = number of occupied cells in occ[:i, j].
    """
    n = rowpref.shape[1]
    radius = isqrt(int(r2))
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    out = np.zeros(len(ii), dtype=np.int64)
    for dj in range(-radius, radius + 1):
        dx = isqrt(int(r2) - dj * dj)
        j2 = jj + dj
        valid = (j2 >= 0) & (j2 < n)
        if not valid.any():
            continue
        iv = ii[valid]
        jv = j2[valid]
        lo = np.maximum(iv - dx, 0)
        hi = np.minimum(iv + dx + 1, n)
        out[valid] += rowpref[hi, jv] - rowpref[lo, jv]
    return out


def _dist_rows(block, feat):
    d0 = block[:, None, 0] - feat[None, :, 0]
    d1 = block[:, None, 1] - feat[None, :, 1]
    d2 = block[:, None, 2] - feat[None, :, 2]
    d3 = block[:, None, 3] - feat[None, :, 3]
    return np.sqrt(d0 * d0 + d1 * d1) + np.sqrt(d2 * d2 + d3 * d3)


def greedy_net(feat, sep):
    """Greedy separated subfamily in input order.

    feat rows are (sx, sy, vx, vy); the metric is
    d = |(sx,sy)_1 - (sx,sy)_2| + |(vx,vy)_1 - (vx,vy)_2|.
    Keeps a row iff its distance to every kept row is >= sep.
    """
    m = len(feat)
    kept = np.empty(m, dtype=np.int64)
    buf = np.empty((m, 4))
    count = 0
    for i in range(m):
        if count:
            d0 = buf[:count, 0] - feat[i, 0]
            d1 = buf[:count, 1] - feat[i, 1]
            d2 = buf[:count, 2] - feat[i, 2]
            d3 = buf[:count, 3] - feat[i, 3]
            d = np.sqrt(d0 * d0 + d1 * d1) + np.sqrt(d2 * d2 + d3 * d3)
            if d.min() < sep:
                continue
        buf[count] = feat[i]
        kept[count] = i
        count += 1
    return kept[:count].copy()


def nonconc_counts(feat, radii):
    """For every family member, the number of members within each radius
    (closed balls, the member itself included)."""
    m = len(feat)
    radii = np.asarray(radii, dtype=np.float64)
    out = np.zeros((m, len(radii)), dtype=np.int64)
    if m == 0:
        return out
    block = max(1, int(4e6) // m)
    for s in range(0, m, block):
        d = _dist_rows(feat[s : s + block], feat)
        for t, r in enumerate(radii):
            out[s : s + block, t] = (d <= r).sum(axis=1)
    return out
