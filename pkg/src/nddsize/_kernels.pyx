# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gaussian kernel sums over a sorted sample vector."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, M_PI

cnp.import_array()


def gauss_sum_sorted(const double[::1] xs, const double[::1] grid,
                     double h, double cutoff):
    """Density of ``xs`` (sorted ascending) at each ``grid`` point.

    Contributions farther than ``cutoff * h`` from a grid point are skipped;
    each window is summed with Neumaier compensation.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t g = grid.shape[0]
    cdef Py_ssize_t j, i, lo, hi, a, b, mid
    cdef double x, u, term, s, c, t, inv_h = 1.0 / h
    cdef double reach = cutoff * h
    cdef double norm = 1.0 / (n * h * sqrt(2.0 * M_PI))
    out = np.empty(g, dtype=np.float64)
    cdef double[::1] res = out

    with nogil:
        for j in range(g):
            x = grid[j]
            # lower_bound(x - reach)
            a = 0
            b = n
            while a < b:
                mid = (a + b) >> 1
                if xs[mid] < x - reach:
                    a = mid + 1
                else:
                    b = mid
            lo = a
            # upper_bound(x + reach)
            b = n
            while a < b:
                mid = (a + b) >> 1
                if xs[mid] <= x + reach:
                    a = mid + 1
                else:
                    b = mid
            hi = a
            s = 0.0
            c = 0.0
            for i in range(lo, hi):
                u = (x - xs[i]) * inv_h
                term = exp(-0.5 * u * u)
                t = s + term
                if s >= term:
                    c += (s - t) + term
                else:
                    c += (term - t) + s
                s = t
            res[j] = (s + c) * norm
    return out


def gauss_product_scatter(const double[:, ::1] xs, const double[::1] axes,
                          const Py_ssize_t[::1] sizes, const double[::1] h,
                          double cutoff):
    """Product-Gaussian density of the rows of ``xs`` on a Cartesian grid.

    ``axes`` holds the grid axes back to back (lengths in ``sizes``); the
    result is the flattened C-order grid. Each sample only touches grid
    points within ``cutoff * h[d]`` along every dimension.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t dim = xs.shape[1]
    cdef Py_ssize_t total = 1
    cdef Py_ssize_t d, i, j, a, b, mid, level, flat
    cdef double u, x, norm = 1.0
    if sizes.shape[0] != dim or h.shape[0] != dim:
        raise ValueError("sizes and h must have one entry per dimension")
    for d in range(dim):
        total *= sizes[d]
        norm *= 1.0 / (h[d] * sqrt(2.0 * M_PI))
    norm /= n

    starts_arr = np.zeros(dim, dtype=np.intp)
    stride_arr = np.ones(dim, dtype=np.intp)
    for d in range(1, dim):
        starts_arr[d] = starts_arr[d - 1] + sizes[d - 1]
    for d in range(dim - 2, -1, -1):
        stride_arr[d] = stride_arr[d + 1] * sizes[d + 1]
    cdef Py_ssize_t[::1] starts = starts_arr
    cdef Py_ssize_t[::1] stride = stride_arr
    # per-dimension window [lo, hi) and kernel values laid out like axes
    cdef Py_ssize_t[::1] lo = np.empty(dim, dtype=np.intp)
    cdef Py_ssize_t[::1] hi = np.empty(dim, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = np.empty(dim, dtype=np.intp)
    cdef double[::1] kv = np.empty(axes.shape[0], dtype=np.float64)
    cdef double[::1] partial = np.empty(dim + 1, dtype=np.float64)
    cdef Py_ssize_t[::1] offset = np.empty(dim + 1, dtype=np.intp)
    out = np.zeros(total, dtype=np.float64)
    cdef double[::1] res = out
    cdef bint empty

    with nogil:
        for i in range(n):
            empty = False
            for d in range(dim):
                x = xs[i, d]
                a = 0
                b = sizes[d]
                while a < b:
                    mid = (a + b) >> 1
                    if axes[starts[d] + mid] < x - cutoff * h[d]:
                        a = mid + 1
                    else:
                        b = mid
                lo[d] = a
                b = sizes[d]
                while a < b:
                    mid = (a + b) >> 1
                    if axes[starts[d] + mid] <= x + cutoff * h[d]:
                        a = mid + 1
                    else:
                        b = mid
                hi[d] = a
                if hi[d] == lo[d]:
                    empty = True
                    break
                for j in range(lo[d], hi[d]):
                    u = (axes[starts[d] + j] - x) / h[d]
                    kv[starts[d] + j] = exp(-0.5 * u * u)
            if empty:
                continue
            # odometer over the window product, carrying partial products
            partial[0] = 1.0
            offset[0] = 0
            level = 0
            idx[0] = lo[0]
            while level >= 0:
                if idx[level] == hi[level]:
                    level -= 1
                    if level >= 0:
                        idx[level] += 1
                    continue
                partial[level + 1] = partial[level] * kv[starts[level] + idx[level]]
                offset[level + 1] = offset[level] + idx[level] * stride[level]
                if level == dim - 1:
                    flat = offset[level + 1]
                    res[flat] += partial[level + 1]
                    idx[level] += 1
                else:
                    level += 1
                    idx[level] = lo[level]
        for j in range(total):
            res[j] *= norm
    return out
