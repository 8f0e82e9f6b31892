# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the encoder's inner loops. Same arithmetic as _pykernels."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def gather_windows(double[:, ::1] Q, cnp.int64_t[::1] starts, Py_ssize_t win):
    cdef Py_ssize_t T = starts.shape[0], dw = Q.shape[1]
    cdef Py_ssize_t t, w, c, s
    out = np.empty((T, win * dw))
    cdef double[:, ::1] o = out
    for t in range(T):
        s = starts[t]
        for w in range(win):
            for c in range(dw):
                o[t, w * dw + c] = Q[s + w, c]
    return out


def scatter_windows(double[:, ::1] grad_cols, cnp.int64_t[::1] starts, Py_ssize_t win, Py_ssize_t rows):
    cdef Py_ssize_t T = starts.shape[0], dw = grad_cols.shape[1] // win
    cdef Py_ssize_t t, w, c, s
    out = np.zeros((rows, dw))
    cdef double[:, ::1] o = out
    for w in range(win):
        for t in range(T):
            s = starts[t] + w
            for c in range(dw):
                o[s, c] += grad_cols[t, w * dw + c]
    return out


def pool_forward(double[:, ::1] m, cnp.int64_t[::1] offsets, cnp.int64_t[::1] lengths,
                 cnp.int64_t[::1] p1, cnp.int64_t[::1] p2):
    cdef Py_ssize_t n_sent = offsets.shape[0], ds = m.shape[1]
    cdef Py_ssize_t i, j, k, r, lo, hi, o, best_r
    cdef double best
    cdef Py_ssize_t bnd[4]
    z_arr = np.zeros((n_sent, ds, 3))
    arg_arr = np.full((n_sent, ds, 3), -1, dtype=np.int64)
    cdef double[:, :, ::1] z = z_arr
    cdef cnp.int64_t[:, :, ::1] arg = arg_arr
    for i in range(n_sent):
        o = offsets[i]
        bnd[0] = 0
        bnd[1] = p1[i] + 1
        bnd[2] = p2[i] + 1
        bnd[3] = lengths[i]
        for j in range(3):
            lo = bnd[j]
            hi = bnd[j + 1]
            if hi <= lo:
                continue
            for k in range(ds):
                best_r = o + lo
                best = m[best_r, k]
                for r in range(o + lo + 1, o + hi):
                    if m[r, k] > best:
                        best = m[r, k]
                        best_r = r
                z[i, k, j] = best
                arg[i, k, j] = best_r
    return z_arr, arg_arr


def pool_backward(double[:, :, ::1] grad_z, cnp.int64_t[:, :, ::1] arg, Py_ssize_t rows):
    cdef Py_ssize_t n_sent = grad_z.shape[0], ds = grad_z.shape[1]
    cdef Py_ssize_t i, k, j, r
    out = np.zeros((rows, ds))
    cdef double[:, ::1] g = out
    for i in range(n_sent):
        for k in range(ds):
            for j in range(3):
                r = arg[i, k, j]
                if r >= 0:
                    g[r, k] = grad_z[i, k, j]
    return out
