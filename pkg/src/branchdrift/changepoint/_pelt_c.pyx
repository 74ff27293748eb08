# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled PELT kernel for one-hot categorical sequences.

Arithmetic mirrors the pure-Python backend operation for operation so both
produce bit-identical costs and identical tie-breaks; the backend parity
test asserts this. The exact-DP oracle intentionally has no compiled
counterpart.
"""

from libc.math cimport exp, INFINITY
from libc.stdlib cimport free, malloc

import numpy as np


cdef bint _chain_less(long long* prev, long long a, long long b,
                      long long length, long long* buf_a, long long* buf_b) noexcept:
    # breakpoint lists of the solutions "via a" / "via b"; equal length,
    # each ends with the candidate itself
    cdef long long i = length - 1
    cdef long long cur = a
    while cur > 0:
        buf_a[i] = cur
        cur = prev[cur]
        i -= 1
    i = length - 1
    cur = b
    while cur > 0:
        buf_b[i] = cur
        cur = prev[cur]
        i -= 1
    for i in range(length):
        if buf_a[i] != buf_b[i]:
            return buf_a[i] < buf_b[i]
    return False


def pelt_categorical(labels_in, long long k, double gamma, double penalty,
                     long long min_size):
    """PELT over labels 1..k with the RBF cost; returns (breakpoints, cost).

    Caller guarantees n >= min_size >= 1, penalty >= 0, labels in range.
    """
    labels = np.ascontiguousarray(labels_in, dtype=np.int64)
    cdef long long n = labels.shape[0]
    cdef long long[::1] lab = labels

    prefix_arr = np.zeros((n + 1) * k, dtype=np.int64)
    cdef long long[::1] prefix = prefix_arr
    cdef long long i, l
    for i in range(n):
        for l in range(k):
            prefix[(i + 1) * k + l] = prefix[i * k + l]
        prefix[(i + 1) * k + lab[i] - 1] += 1

    cdef double w = exp(-2.0 * gamma)
    cdef double* F = <double*> malloc((n + 1) * sizeof(double))
    cdef long long* prev = <long long*> malloc((n + 1) * sizeof(long long))
    cdef long long* nseg = <long long*> malloc((n + 1) * sizeof(long long))
    cdef long long* cand = <long long*> malloc((n + 2) * sizeof(long long))
    cdef double* vals = <double*> malloc((n + 2) * sizeof(double))
    cdef long long* buf_a = <long long*> malloc((n + 1) * sizeof(long long))
    cdef long long* buf_b = <long long*> malloc((n + 1) * sizeof(long long))
    if F == NULL or prev == NULL or nseg == NULL or cand == NULL \
            or vals == NULL or buf_a == NULL or buf_b == NULL:
        free(F); free(prev); free(nseg); free(cand); free(vals)
        free(buf_a); free(buf_b)
        raise MemoryError()

    cdef long long n_cand = 1
    cdef long long t, s, s_new, j, idx, diff
    cdef long long sumsq
    cdef double length, c, v, best_v
    cdef long long best_s

    try:
        F[0] = -penalty
        prev[0] = 0
        nseg[0] = 0
        cand[0] = 0

        for t in range(min_size, n + 1):
            s_new = t - min_size
            if s_new >= min_size:
                cand[n_cand] = s_new
                n_cand += 1
            best_v = INFINITY
            best_s = -1
            for j in range(n_cand):
                s = cand[j]
                sumsq = 0
                for l in range(k):
                    diff = prefix[t * k + l] - prefix[s * k + l]
                    sumsq += diff * diff
                length = <double> (t - s)
                c = (1.0 - w) * (length - (<double> sumsq) / length)
                v = (F[s] + c) + penalty
                vals[j] = v
                if v < best_v:
                    best_v = v
                    best_s = s
                elif v == best_v:
                    # fewest segments, then lexicographically smallest list;
                    # candidate s stands for the list bkps(s)+[s] of nseg[s] items
                    if nseg[s] < nseg[best_s]:
                        best_s = s
                    elif nseg[s] == nseg[best_s] and \
                            _chain_less(prev, s, best_s, nseg[s], buf_a, buf_b):
                        best_s = s
            F[t] = best_v
            prev[t] = best_s
            nseg[t] = nseg[best_s] + 1
            # PELT pruning, ties kept
            idx = 0
            for j in range(n_cand):
                if vals[j] - penalty <= F[t]:
                    cand[idx] = cand[j]
                    vals[idx] = vals[j]
                    idx += 1
            n_cand = idx

        bkps = []
        t = prev[n]
        while t > 0:
            bkps.append(t)
            t = prev[t]
        bkps.reverse()
        return bkps, F[n]
    finally:
        free(F); free(prev); free(nseg); free(cand); free(vals)
        free(buf_a); free(buf_b)
