# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors ``_py.py`` exactly; see that module for the algorithm notes.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef inline Py_ssize_t _bisect_left(const double* a, Py_ssize_t n, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _bisect_right(const double* a, Py_ssize_t n, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def jackknife_pseudo(times, status, double s, double w):
    """Leave-one-out pseudo-values of the conditional RMST over [s, s+w]."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] d = np.ascontiguousarray(status, dtype=np.int64)
    cdef Py_ssize_t n = t.shape[0]
    cdef double horizon = s + w

    event_mask = (np.asarray(d) == 1) & (np.asarray(t) < horizon)
    ut_arr, dk_arr = np.unique(np.asarray(t)[event_mask], return_counts=True)
    cdef Py_ssize_t n_ev = ut_arr.shape[0]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, k
    if n_ev == 0:
        for i in range(n):
            out[i] = w
        return out

    t_sorted = np.sort(np.asarray(t))
    yk_arr = (n - np.searchsorted(t_sorted, ut_arr, side="left")).astype(np.float64)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] ut = np.ascontiguousarray(ut_arr)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dk = np.ascontiguousarray(dk_arr, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yk = np.ascontiguousarray(yk_arr)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] sk = np.empty(n_ev)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ak = np.empty(n_ev)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g_event = np.empty(n_ev)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lk = np.empty(n_ev)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cum_a = np.empty(n_ev + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] suf_sl = np.empty(n_ev + 1)

    cdef double prod_f = 1.0, prod_a = 1.0
    for k in range(n_ev):
        prod_f *= 1.0 - dk[k] / yk[k]
        sk[k] = prod_f
        if yk[k] > 1.0:
            prod_a *= (yk[k] - 1.0 - dk[k]) / (yk[k] - 1.0)
            g_event[k] = (yk[k] - dk[k]) / (yk[k] - 1.0)
        else:
            g_event[k] = 1.0
        ak[k] = prod_a
        lk[k] = (ut[k + 1] if k < n_ev - 1 else horizon) - ut[k]

    cdef double l_pre = ut[0] - s
    cum_a[0] = l_pre
    for k in range(n_ev):
        cum_a[k + 1] = cum_a[k] + ak[k] * lk[k]
    suf_sl[n_ev] = 0.0
    for k in range(n_ev - 1, -1, -1):
        suf_sl[k] = suf_sl[k + 1] + sk[k] * lk[k]

    cdef double mu = l_pre + suf_sl[0]

    cdef Py_ssize_t pos
    cdef double ti, mu_loo, a_prev, tail
    for i in range(n):
        ti = t[i]
        if d[i] == 1 and ti < horizon:
            pos = _bisect_left(&ut[0], n_ev, ti)
            a_prev = ak[pos - 1] if pos > 0 else 1.0
            if sk[pos] > 0.0:
                tail = suf_sl[pos] / sk[pos]
            elif pos == n_ev - 1:
                tail = lk[n_ev - 1]
            else:
                tail = 0.0
            mu_loo = cum_a[pos] + a_prev * g_event[pos] * tail
        else:
            pos = _bisect_right(&ut[0], n_ev, ti)
            mu_loo = cum_a[pos]
            if pos == 0:
                # not at risk at any event time, curve unchanged
                mu_loo += suf_sl[0]
            elif pos <= n_ev - 1:
                mu_loo += ak[pos - 1] / sk[pos - 1] * suf_sl[pos]
        out[i] = n * mu - (n - 1) * mu_loo
    return out


def concordance_stats(times, status, preds):
    """Harrell pair counts: (usable pairs, concordant + 0.5 * tied)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] d = np.ascontiguousarray(status, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p = np.ascontiguousarray(preds, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t i, j
    cdef long n_usable = 0
    cdef double score = 0.0
    for i in range(n):
        if d[i] != 1:
            continue
        for j in range(n):
            if t[i] < t[j]:
                n_usable += 1
                if p[j] > p[i]:
                    score += 1.0
                elif p[j] == p[i]:
                    score += 0.5
    return n_usable, score
