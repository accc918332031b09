# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of furst._pykernels.

Same contracts, same arithmetic (fp contraction is disabled at compile time
so float expressions round identically to the numpy versions).
"""

from libc.math cimport fabs, sqrt, floor, ceil
from libc.stdlib cimport malloc, free

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline long long _isqrt(long long v) nogil:
    cdef long long r
    if v < 0:
        return -1
    r = <long long>sqrt(<double>v)
    while r * r > v:
        r -= 1
    while (r + 1) * (r + 1) <= v:
        r += 1
    return r


def raster_tube(cnp.uint8_t[:, ::1] occ, double delta, double half,
                double nx, double ny, double c, double w):
    cdef Py_ssize_t n = occ.shape[0]
    cdef Py_ssize_t i, j, i0, i1, j0, j1
    cdef double x, y, t, a, b, ctr
    if fabs(nx) >= fabs(ny):
        for j in range(n):
            y = -half + (j + 0.5) * delta
            t = c - y * ny
            a = (t - w) / nx
            b = (t + w) / nx
            if a > b:
                a, b = b, a
            i0 = <Py_ssize_t>floor((a + half) / delta - 0.5) - 2
            i1 = <Py_ssize_t>ceil((b + half) / delta - 0.5) + 2
            if i1 < 0 or i0 >= n:
                continue
            if i0 < 0:
                i0 = 0
            if i1 > n - 1:
                i1 = n - 1
            for i in range(i0, i1 + 1):
                ctr = -half + (i + 0.5) * delta
                if fabs(ctr * nx + y * ny - c) < w:
                    occ[i, j] = 1
    else:
        for i in range(n):
            x = -half + (i + 0.5) * delta
            t = c - x * nx
            a = (t - w) / ny
            b = (t + w) / ny
            if a > b:
                a, b = b, a
            j0 = <Py_ssize_t>floor((a + half) / delta - 0.5) - 2
            j1 = <Py_ssize_t>ceil((b + half) / delta - 0.5) + 2
            if j1 < 0 or j0 >= n:
                continue
            if j0 < 0:
                j0 = 0
            if j1 > n - 1:
                j1 = n - 1
            for j in range(j0, j1 + 1):
                ctr = -half + (j + 0.5) * delta
                if fabs(x * nx + ctr * ny - c) < w:
                    occ[i, j] = 1


cdef int _cmp_i64(const void* a, const void* b) noexcept nogil:
    cdef long long va = (<const long long*>a)[0]
    cdef long long vb = (<const long long*>b)[0]
    if va < vb:
        return -1
    if va > vb:
        return 1
    return 0


from libc.stdlib cimport qsort


def union_counts(cnp.int64_t[::1] tube_ptr, cnp.int64_t[::1] tube_cells,
                 cnp.int64_t[::1] cell_ptr, cnp.int64_t[::1] cell_tubes):
    cdef Py_ssize_t m = cell_ptr.shape[0] - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_arr = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t idx, p, q, s
    cdef long long t, total, maxbuf = 0, distinct
    cdef long long* buf

    for idx in range(m):
        total = 0
        for p in range(cell_ptr[idx], cell_ptr[idx + 1]):
            t = cell_tubes[p]
            total += tube_ptr[t + 1] - tube_ptr[t]
        if total > maxbuf:
            maxbuf = total
    if maxbuf == 0:
        out_arr[:] = 0
        return out_arr

    buf = <long long*>malloc(maxbuf * sizeof(long long))
    if buf == NULL:
        raise MemoryError()
    try:
        for idx in range(m):
            p = cell_ptr[idx]
            q = cell_ptr[idx + 1]
            if q - p == 1:
                t = cell_tubes[p]
                out[idx] = tube_ptr[t + 1] - tube_ptr[t]
                continue
            total = 0
            while p < q:
                t = cell_tubes[p]
                for s in range(tube_ptr[t], tube_ptr[t + 1]):
                    buf[total] = tube_cells[s]
                    total += 1
                p += 1
            qsort(buf, total, sizeof(long long), _cmp_i64)
            distinct = 0
            for s in range(total):
                if s == 0 or buf[s] != buf[s - 1]:
                    distinct += 1
            out[idx] = distinct
    finally:
        free(buf)
    return out_arr


def disc_counts(cnp.int64_t[:, ::1] rowpref, cnp.int64_t[::1] ii,
                cnp.int64_t[::1] jj, long long r2):
    cdef Py_ssize_t n = rowpref.shape[1]
    cdef Py_ssize_t m = ii.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_arr = np.zeros(m, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t t
    cdef long long radius = _isqrt(r2), dj, dx, j2, lo, hi, acc
    for t in range(m):
        acc = 0
        for dj in range(-radius, radius + 1):
            j2 = jj[t] + dj
            if j2 < 0 or j2 >= n:
                continue
            dx = _isqrt(r2 - dj * dj)
            lo = ii[t] - dx
            if lo < 0:
                lo = 0
            hi = ii[t] + dx + 1
            if hi > n:
                hi = n
            if hi > lo:
                acc += rowpref[hi, j2] - rowpref[lo, j2]
        out[t] = acc
    return out_arr


def greedy_net(cnp.float64_t[:, ::1] feat, double sep):
    cdef Py_ssize_t m = feat.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] kept_arr = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] kept = kept_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf_arr = np.empty((m, 4))
    cdef cnp.float64_t[:, ::1] buf = buf_arr
    cdef Py_ssize_t i, t, count = 0
    cdef double d0, d1, d2, d3, d
    cdef bint ok
    for i in range(m):
        ok = True
        for t in range(count):
            d0 = buf[t, 0] - feat[i, 0]
            d1 = buf[t, 1] - feat[i, 1]
            d2 = buf[t, 2] - feat[i, 2]
            d3 = buf[t, 3] - feat[i, 3]
            d = sqrt(d0 * d0 + d1 * d1) + sqrt(d2 * d2 + d3 * d3)
            if d < sep:
                ok = False
                break
        if ok:
            buf[count, 0] = feat[i, 0]
            buf[count, 1] = feat[i, 1]
            buf[count, 2] = feat[i, 2]
            buf[count, 3] = feat[i, 3]
            kept[count] = i
            count += 1
    return kept_arr[:count].copy()


def nonconc_counts(cnp.float64_t[:, ::1] feat, cnp.float64_t[::1] radii):
    cdef Py_ssize_t m = feat.shape[0]
    cdef Py_ssize_t nr = radii.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_arr = np.zeros((m, nr), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, t
    cdef double d0, d1, d2, d3, d
    for i in range(m):
        for j in range(m):
            d0 = feat[i, 0] - feat[j, 0]
            d1 = feat[i, 1] - feat[j, 1]
            d2 = feat[i, 2] - feat[j, 2]
            d3 = feat[i, 3] - feat[j, 3]
            d = sqrt(d0 * d0 + d1 * d1) + sqrt(d2 * d2 + d3 * d3)
            for t in range(nr):
                if d <= radii[t]:
                    out[i, t] += 1
    return out_arr
