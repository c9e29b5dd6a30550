# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled image and matching kernels.

Operation order mirrors ``_fallback.py`` exactly; do not build with
fast-math flags or the two backends will drift apart.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


def demosaic_bilinear(mosaic):
    cdef const double[:, ::1] m = np.ascontiguousarray(mosaic, dtype=np.float64)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    out_arr = np.empty((h, w, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, x, yu, yd, xl, xr
    cdef double up, down, left, right, ul, ur, dl, dr, cross, diag, horiz, vert, own
    with nogil:
        for y in range(h):
            yu = _reflect(y - 1, h)
            yd = _reflect(y + 1, h)
            for x in range(w):
                xl = _reflect(x - 1, w)
                xr = _reflect(x + 1, w)
                own = m[y, x]
                up = m[yu, x]
                down = m[yd, x]
                left = m[y, xl]
                right = m[y, xr]
                if (y & 1) == 0 and (x & 1) == 0:
                    ul = m[yu, xl]
                    ur = m[yu, xr]
                    dl = m[yd, xl]
                    dr = m[yd, xr]
                    out[y, x, 0] = own
                    out[y, x, 1] = ((up + down) + (left + right)) * 0.25
                    out[y, x, 2] = ((ul + ur) + (dl + dr)) * 0.25
                elif (y & 1) == 0:
                    out[y, x, 0] = (left + right) * 0.5
                    out[y, x, 1] = own
                    out[y, x, 2] = (up + down) * 0.5
                elif (x & 1) == 0:
                    out[y, x, 0] = (up + down) * 0.5
                    out[y, x, 1] = own
                    out[y, x, 2] = (left + right) * 0.5
                else:
                    ul = m[yu, xl]
                    ur = m[yu, xr]
                    dl = m[yd, xl]
                    dr = m[yd, xr]
                    out[y, x, 0] = ((ul + ur) + (dl + dr)) * 0.25
                    out[y, x, 1] = ((up + down) + (left + right)) * 0.25
                    out[y, x, 2] = own
    return out_arr


cdef inline void _sort2(double* a, double* b) noexcept nogil:
    cdef double t
    if a[0] > b[0]:
        t = a[0]
        a[0] = b[0]
        b[0] = t


cdef inline double _median9(double* p) noexcept nogil:
    # 19-exchange selection network; p[4] ends up as the median
    _sort2(&p[1], &p[2]); _sort2(&p[4], &p[5]); _sort2(&p[7], &p[8])
    _sort2(&p[0], &p[1]); _sort2(&p[3], &p[4]); _sort2(&p[6], &p[7])
    _sort2(&p[1], &p[2]); _sort2(&p[4], &p[5]); _sort2(&p[7], &p[8])
    _sort2(&p[0], &p[3]); _sort2(&p[5], &p[8]); _sort2(&p[4], &p[7])
    _sort2(&p[3], &p[6]); _sort2(&p[1], &p[4]); _sort2(&p[2], &p[5])
    _sort2(&p[4], &p[7]); _sort2(&p[4], &p[2]); _sort2(&p[6], &p[4])
    _sort2(&p[4], &p[2])
    return p[4]


def median3x3(channel):
    cdef const double[:, ::1] c = np.ascontiguousarray(channel, dtype=np.float64)
    cdef Py_ssize_t h = c.shape[0], w = c.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double buf[9]
    cdef Py_ssize_t y, x, ys[3], xs[3]
    with nogil:
        for y in range(h):
            ys[0] = _clamp(y - 1, h)
            ys[1] = y
            ys[2] = _clamp(y + 1, h)
            for x in range(w):
                xs[0] = _clamp(x - 1, w)
                xs[1] = x
                xs[2] = _clamp(x + 1, w)
                buf[0] = c[ys[0], xs[0]]; buf[1] = c[ys[0], xs[1]]; buf[2] = c[ys[0], xs[2]]
                buf[3] = c[ys[1], xs[0]]; buf[4] = c[ys[1], xs[1]]; buf[5] = c[ys[1], xs[2]]
                buf[6] = c[ys[2], xs[0]]; buf[7] = c[ys[2], xs[1]]; buf[8] = c[ys[2], xs[2]]
                out[y, x] = _median9(buf)
    return out_arr


def nearest_sq(query, matrix):
    cdef const double[:, ::1] mat = np.ascontiguousarray(matrix, dtype=np.float64)
    cdef const double[::1] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef Py_ssize_t n = mat.shape[0], f = mat.shape[1]
    cdef Py_ssize_t i, j, best = -1
    cdef double acc, d, best_d = float("inf")
    if n == 0:
        return -1, float("inf")
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(f):
                d = mat[i, j] - q[j]
                acc = acc + d * d
            if best < 0 or acc < best_d:
                best = i
                best_d = acc
    return best, best_d
