"""Pure-Python kernel backend.

Reference implementation of the hot numeric kernels, written with plain
``math`` loops so it runs anywhere.  The compiled backend in
``_speedups.pyx`` mirrors every operation in the same order, so both
backends produce bit-identical results; tests assert that parity.

All array arguments are C-contiguous float64 numpy arrays used as plain
buffers; no numpy reductions are used here because their summation order
differs from a left-to-right loop.
"""

import math
from bisect import bisect_right

BACKEND = "pure"


def logsumexp(v):
    """Max-shifted log-sum-exp of a utility vector, summed left to right."""
    n = len(v)
    m = v[0]
    for i in range(1, n):
        if v[i] > m:
            m = v[i]
    s = 0.0
    for i in range(n):
        s += math.exp(v[i] - m)
    return m + math.log(s)


def softmax(v, out):
    """Fill ``out`` with choice probabilities of ``v``; return the logsum."""
    n = len(v)
    m = v[0]
    for i in range(1, n):
        if v[i] > m:
            m = v[i]
    s = 0.0
    for i in range(n):
        e = math.exp(v[i] - m)
        out[i] = e
        s += e
    for i in range(n):
        out[i] = out[i] / s
    return m + math.log(s)


def dot(a, b):
    """Left-to-right inner product (fixed summation order)."""
    s = 0.0
    for i in range(len(a)):
        s += a[i] * b[i]
    return s


def weighted_colsum(w, mat, out):
    """out[k] = sum_i w[i] * mat[i, k], rows accumulated in ascending i."""
    n, k = mat.shape
    for j in range(k):
        out[j] = 0.0
    for i in range(n):
        wi = w[i]
        for j in range(k):
            out[j] += wi * mat[i, j]


def choose(cum, u):
    """Index of the first cumulative probability exceeding the draw ``u``.

    ``cum`` is a non-decreasing cumulative-probability array whose last
    entry is ~1.  Equivalent to scanning alternatives in order and stopping
    at the first i with u < cum[i]; clamped to the last index so that
    rounding in cum[-1] can never fall out of range.
    """
    i = bisect_right(cum, u)
    n = len(cum)
    return i if i < n else n - 1


def tv_utilities(ov_logsum, tv_grid, b_lsov, b_hhs, need, out):
    """Total-value utilities: logsum carrier plus quadratic need gap."""
    for t in range(len(tv_grid)):
        d = need - tv_grid[t]
        out[t] = b_lsov * ov_logsum[t] + b_hhs * (d * d)


def order_value_tables(
    l1, ov, tv, seg, nseg, b1, b2, b3, ov_logsum, cond, rate, meanov, segrate
):
    """Build the order-value choice tables for one (scenario, params) pair.

    For each total value tv[t], computes the systematic utilities of every
    order value ov[j]:

        u = b1 * (tv/ov) * l1[j] + b2 * (ov/tv)^2 + b3 * ov

    and fills, per t: the order-value logsum, the conditional distribution
    P(ov|tv) (into ``cond[t]``), the expected order rate sum_j p*(tv/ov)
    (into ``rate``), the conditional mean order value (into ``meanov``) and
    the rate split by fee segment (into ``segrate``, shape (ntv, nseg)).

    This is the hot kernel: everything downstream (household evaluation,
    calibration, Monte Carlo) reuses these tables.
    """
    ntv = len(tv)
    nov = len(ov)
    for t in range(ntv):
        tvv = tv[t]
        row = cond[t]
        m = -math.inf
        for j in range(nov):
            ovj = ov[j]
            ratio = tvv / ovj
            rev = ovj / tvv
            u = b1 * ratio * l1[j] + b2 * (rev * rev) + b3 * ovj
            row[j] = u
            if u > m:
                m = u
        s = 0.0
        for j in range(nov):
            e = math.exp(row[j] - m)
            row[j] = e
            s += e
        ov_logsum[t] = m + math.log(s)
        r = 0.0
        mo = 0.0
        for k in range(nseg):
            segrate[t, k] = 0.0
        for j in range(nov):
            p = row[j] / s
            row[j] = p
            ovj = ov[j]
            fr = p * (tvv / ovj)
            r += fr
            mo += p * ovj
            segrate[t, seg[j]] += fr
        rate[t] = r
        meanov[t] = mo
