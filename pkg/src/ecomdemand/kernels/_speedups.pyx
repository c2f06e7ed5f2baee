# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Mirrors ``_pure.py`` operation for operation, in the same order, so both
backends give bit-identical float64 results (the extension is compiled with
-ffp-contract=off to rule out fused multiply-adds).
"""

from libc.math cimport exp, log, INFINITY

BACKEND = "compiled"


def logsumexp(double[::1] v):
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    cdef double m = v[0]
    for i in range(1, n):
        if v[i] > m:
            m = v[i]
    cdef double s = 0.0
    for i in range(n):
        s += exp(v[i] - m)
    return m + log(s)


def softmax(double[::1] v, double[::1] out):
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    cdef double m = v[0]
    for i in range(1, n):
        if v[i] > m:
            m = v[i]
    cdef double s = 0.0
    cdef double e
    for i in range(n):
        e = exp(v[i] - m)
        out[i] = e
        s += e
    for i in range(n):
        out[i] = out[i] / s
    return m + log(s)


def dot(double[::1] a, double[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def weighted_colsum(double[::1] w, double[:, ::1] mat, double[::1] out):
    cdef Py_ssize_t n = mat.shape[0]
    cdef Py_ssize_t k = mat.shape[1]
    cdef Py_ssize_t i, j
    cdef double wi
    for j in range(k):
        out[j] = 0.0
    for i in range(n):
        wi = w[i]
        for j in range(k):
            out[j] += wi * mat[i, j]


def choose(double[::1] cum, double u):
    # bisect_right semantics: first index whose cumulative value exceeds u.
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = cum.shape[0]
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cum[mid]:
            hi = mid
        else:
            lo = mid + 1
    if lo >= cum.shape[0]:
        lo = cum.shape[0] - 1
    return lo


def tv_utilities(double[::1] ov_logsum, double[::1] tv_grid,
                 double b_lsov, double b_hhs, double need, double[::1] out):
    cdef Py_ssize_t n = tv_grid.shape[0]
    cdef Py_ssize_t t
    cdef double d
    for t in range(n):
        d = need - tv_grid[t]
        out[t] = b_lsov * ov_logsum[t] + b_hhs * (d * d)


def order_value_tables(double[::1] l1, double[::1] ov, double[::1] tv,
                       long[::1] seg, Py_ssize_t nseg,
                       double b1, double b2, double b3,
                       double[::1] ov_logsum, double[:, ::1] cond,
                       double[::1] rate, double[::1] meanov,
                       double[:, ::1] segrate):
    cdef Py_ssize_t ntv = tv.shape[0]
    cdef Py_ssize_t nov = ov.shape[0]
    cdef Py_ssize_t t, j, k
    cdef double tvv, ovj, ratio, rev, u, m, s, e, r, mo, p, fr
    for t in range(ntv):
        tvv = tv[t]
        m = -INFINITY
        for j in range(nov):
            ovj = ov[j]
            ratio = tvv / ovj
            rev = ovj / tvv
            u = b1 * ratio * l1[j] + b2 * (rev * rev) + b3 * ovj
            cond[t, j] = u
            if u > m:
                m = u
        s = 0.0
        for j in range(nov):
            e = exp(cond[t, j] - m)
            cond[t, j] = e
            s += e
        ov_logsum[t] = m + log(s)
        r = 0.0
        mo = 0.0
        for k in range(nseg):
            segrate[t, k] = 0.0
        for j in range(nov):
            p = cond[t, j] / s
            cond[t, j] = p
            ovj = ov[j]
            fr = p * (tvv / ovj)
            r += fr
            mo += p * ovj
            segrate[t, seg[j]] += fr
        rate[t] = r
        meanov[t] = mo
