# cython: language_level=3
"""Compiled kernels for polygon rasterization and self-intersection checks.

Mirrors crosspatch._kernels.pure exactly; both backends must produce
bit-identical output (same crossing formula, same fill convention, same
orientation tests). Keep the two files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil
from libc.stdlib cimport free, malloc

cnp.import_array()


cdef inline double _fmin(double a, double b) nogil:
    return a if a < b else b


cdef inline double _fmax(double a, double b) nogil:
    return a if a > b else b


def fill_polygon(xs, ys, int height, int width):
    """Rasterize a closed polygon into a {0,1} uint8 grid of shape (height, width)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.zeros((height, width), dtype=np.uint8)
    cdef Py_ssize_t m = x.shape[0]
    if m < 3:
        return out

    cdef double ymin = y[0]
    cdef double ymax = y[0]
    cdef Py_ssize_t i
    for i in range(1, m):
        if y[i] < ymin:
            ymin = y[i]
        if y[i] > ymax:
            ymax = y[i]

    # clamp in double space before casting: vertices may sit far out of frame
    cdef double row_lo_d = ceil(ymin - 0.5)
    cdef double row_hi_d = ceil(ymax - 0.5) - 1.0
    if row_lo_d < 0:
        row_lo_d = 0
    if row_hi_d > height - 1:
        row_hi_d = height - 1
    cdef long row_lo = <long>row_lo_d
    cdef long row_hi = <long>row_hi_d

    cdef double *cx = <double *>malloc(m * sizeof(double))
    if cx == NULL:
        raise MemoryError()

    cdef long row, col_lo, col_hi, col
    cdef double yc, y1, y2, x1, x2, key, c_lo, c_hi
    cdef Py_ssize_t nc, j, k
    try:
        for row in range(row_lo, row_hi + 1):
            yc = row + 0.5
            nc = 0
            for i in range(m):
                y1 = y[i]
                y2 = y[(i + 1) % m]
                if (y1 > yc) != (y2 > yc):
                    x1 = x[i]
                    x2 = x[(i + 1) % m]
                    cx[nc] = x1 + (yc - y1) / (y2 - y1) * (x2 - x1)
                    nc += 1
            if nc == 0:
                continue
            # insertion sort; crossing counts per row are small
            for j in range(1, nc):
                key = cx[j]
                k = j
                while k > 0 and cx[k - 1] > key:
                    cx[k] = cx[k - 1]
                    k -= 1
                cx[k] = key
            for j in range(0, nc - 1, 2):
                c_lo = ceil(cx[j] - 0.5)
                c_hi = ceil(cx[j + 1] - 0.5) - 1.0
                if c_lo < 0:
                    c_lo = 0
                if c_hi > width - 1:
                    c_hi = width - 1
                col_lo = <long>c_lo
                col_hi = <long>c_hi
                for col in range(col_lo, col_hi + 1):
                    out[row, col] = 1
    finally:
        free(cx)
    return out


cdef inline double _orient(double px, double py, double qx, double qy,
                           double rx, double ry) nogil:
    return (qx - px) * (ry - py) - (qy - py) * (rx - px)


cdef inline bint _on_segment(double px, double py, double qx, double qy,
                             double rx, double ry) nogil:
    return (_fmin(px, qx) <= rx and rx <= _fmax(px, qx)
            and _fmin(py, qy) <= ry and ry <= _fmax(py, qy))


def polyline_is_simple(xs, ys):
    """True iff no two non-adjacent edges of the closed polyline intersect."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0]
    if m < 4:
        return True

    cdef Py_ssize_t i, j, i2, j2
    cdef double aix, aiy, bix, biy, ajx, ajy, bjx, bjy
    cdef double d1, d2, d3, d4
    cdef bint proper, touch
    for i in range(m):
        i2 = (i + 1) % m
        aix = x[i]; aiy = y[i]
        bix = x[i2]; biy = y[i2]
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue  # wrap-around adjacency
            j2 = (j + 1) % m
            ajx = x[j]; ajy = y[j]
            bjx = x[j2]; bjy = y[j2]
            d1 = _orient(aix, aiy, bix, biy, ajx, ajy)
            d2 = _orient(aix, aiy, bix, biy, bjx, bjy)
            d3 = _orient(ajx, ajy, bjx, bjy, aix, aiy)
            d4 = _orient(ajx, ajy, bjx, bjy, bix, biy)
            proper = (((d1 > 0) and (d2 < 0)) or ((d1 < 0) and (d2 > 0))) and \
                     (((d3 > 0) and (d4 < 0)) or ((d3 < 0) and (d4 > 0)))
            if proper:
                return False
            touch = ((d1 == 0 and _on_segment(aix, aiy, bix, biy, ajx, ajy))
                     or (d2 == 0 and _on_segment(aix, aiy, bix, biy, bjx, bjy))
                     or (d3 == 0 and _on_segment(ajx, ajy, bjx, bjy, aix, aiy))
                     or (d4 == 0 and _on_segment(ajx, ajy, bjx, bjy, bix, biy)))
            if touch:
                return False
    return True
