# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sequential kernels. Semantics match ``_pure.py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef inline double _squash(double f) nogil:
    return f / (1.0 + fabs(f))


def squash(f):
    f = np.asarray(f, dtype=np.float64)
    return f / (1.0 + np.abs(f))


def ar1_filter(innov, double rho, f0):
    cdef double[:, ::1] e = np.ascontiguousarray(innov, dtype=np.float64)
    cdef Py_ssize_t b = e.shape[0], k = e.shape[1], i, j
    out_arr = np.empty((b, k + 1))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] start = np.array(np.broadcast_to(f0, (b,)), dtype=np.float64)
    with nogil:
        for i in range(b):
            out[i, 0] = start[i]
            for j in range(k):
                out[i, j + 1] = rho * out[i, j] + e[i, j]
    return out_arr


def modulated_sequence(z, eta, f0, double rho, double amp, bint adaptive):
    cdef double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t b = zz.shape[0], k = zz.shape[1], i, j
    cdef double[:, ::1] ee
    if adaptive:
        ee = np.zeros((1, 1))
    else:
        ee = np.ascontiguousarray(eta, dtype=np.float64)
    cdef double[::1] start = np.array(np.broadcast_to(f0, (b,)), dtype=np.float64)
    x_arr = np.empty((b, k))
    f_arr = np.empty((b, k))
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] f = f_arr
    cdef double c = sqrt(1.0 - rho * rho)
    cdef double state, v, drive, zj
    with nogil:
        for i in range(b):
            state = start[i]
            for j in range(k):
                f[i, j] = state
                v = 1.0 + amp * _squash(state)
                zj = zz[i, j]
                x[i, j] = sqrt(v) * zj
                if adaptive:
                    if zj > 0:
                        drive = 1.0
                    elif zj < 0:
                        drive = -1.0
                    else:
                        drive = 0.0
                else:
                    drive = ee[i, j]
                state = rho * state + c * drive
    return x_arr, f_arr


def weighted_subset_rows(u, Py_ssize_t n, double beta):
    cdef double[:, :, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t s = uu.shape[0], p = uu.shape[1], d = uu.shape[2]
    cdef Py_ssize_t i, j, l, r, pick
    rows_arr = np.empty((s, p, d), dtype=np.int64)
    cdef cnp.int64_t[:, :, ::1] rows = rows_arr
    cdef double[::1] occ = np.zeros(n)
    cdef double[::1] w = np.zeros(n)
    cdef double[::1] cum = np.zeros(n)
    cdef double target
    with nogil:
        for i in range(s):
            for r in range(n):
                occ[r] = 0.0
            for j in range(p):
                for r in range(n):
                    w[r] = 1.0 / (1.0 + beta * occ[r])
                for l in range(d):
                    cum[0] = w[0]
                    for r in range(1, n):
                        cum[r] = cum[r - 1] + w[r]
                    target = uu[i, j, l] * cum[n - 1]
                    pick = 0
                    for r in range(n):
                        if cum[r] <= target:
                            pick += 1
                    if pick > n - 1:
                        pick = n - 1
                    while w[pick] == 0.0:
                        pick -= 1
                    rows[i, j, l] = pick
                    w[pick] = 0.0
                for l in range(d):
                    occ[rows[i, j, l]] += 1.0
    return rows_arr


def countsketch_apply_batch(rows, signs, u, Py_ssize_t n, double scale):
    cdef cnp.int64_t[:, :, ::1] rr = np.ascontiguousarray(rows, dtype=np.int64)
    cdef double[:, :, ::1] sg = np.ascontiguousarray(signs, dtype=np.float64)
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t s = rr.shape[0], p = rr.shape[1], d = rr.shape[2], i, j, l
    out_arr = np.zeros((s, n))
    cdef double[:, ::1] out = out_arr
    cdef double uj
    with nogil:
        for i in range(s):
            for j in range(p):
                uj = uu[j] * scale
                for l in range(d):
                    out[i, rr[i, j, l]] += sg[i, j, l] * uj
    return out_arr
