# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.  Mirrors ``_kernels_py`` one function at a time."""

from libc.math cimport log1p, cos, sin, sqrt, fabs, INFINITY

cdef double LN2 = 0.6931471805599453
cdef double TWO_PI = 6.283185307179586
cdef double DBL_EPS = 2.220446049250313e-16
MAX_GRID_COMBINATIONS = 1 << 24


cdef inline double _spectral(double beta, double snr_full) noexcept nogil:
    if beta <= 0.0:
        return 0.0
    return beta * log1p(snr_full / beta) / LN2


cdef double _invert(double snr_full, double target) noexcept nogil:
    cdef double top, lo, hi, beta, x, f, deriv, nxt
    cdef int it
    if target <= 0.0:
        return 0.0
    top = _spectral(1.0, snr_full)
    # a few ulps of slack: targets derived from the full-band rate itself may round just above it
    if target > top * (1.0 + 8.0 * DBL_EPS):
        return INFINITY
    if target >= top:
        return 1.0
    lo = 0.0
    hi = 1.0
    beta = 1.0
    for it in range(200):
        x = snr_full / beta
        f = beta * log1p(x) / LN2 - target
        if f > 0.0:
            hi = beta
        else:
            lo = beta
        deriv = (log1p(x) - x / (1.0 + x)) / LN2
        if deriv > 0.0:
            nxt = beta - f / deriv
        else:
            nxt = 0.5 * (lo + hi)
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if fabs(nxt - beta) <= 1e-15 * beta or hi - lo <= 1e-16 * hi:
            beta = nxt
            break
        beta = nxt
    return beta


def spectral_efficiency(double beta, double snr_full):
    return _spectral(beta, snr_full)


def bandwidth_for_rate(double snr_full, double target):
    return _invert(snr_full, target)


def min_max_latency(double[::1] snr_full, double[::1] t_compute, double[::1] bits,
                    double bandwidth, double rtol, double[::1] beta_out):
    cdef Py_ssize_t n = snr_full.shape[0]
    cdef Py_ssize_t m
    cdef double t_lo, t_hi, t_mid, total, rate, share
    cdef int iterations = 0
    if n == 0:
        return 0.0, 0
    with nogil:
        t_lo = t_compute[0]
        for m in range(1, n):
            if t_compute[m] > t_lo:
                t_lo = t_compute[m]
        t_hi = 0.0
        share = 1.0 / n
        for m in range(n):
            rate = bandwidth * _spectral(share, snr_full[m])
            if t_compute[m] + bits[m] / rate > t_hi:
                t_hi = t_compute[m] + bits[m] / rate
        while t_hi - t_lo > rtol * t_hi and iterations < 2000:
            iterations += 1
            t_mid = 0.5 * (t_lo + t_hi)
            if t_mid <= t_lo or t_mid >= t_hi:
                break
            total = 0.0
            for m in range(n):
                if t_mid <= t_compute[m]:
                    total = INFINITY
                    break
                total += _invert(snr_full[m], bits[m] / (bandwidth * (t_mid - t_compute[m])))
                if total > 1.0:
                    break
            if total <= 1.0:
                t_hi = t_mid
            else:
                t_lo = t_mid
        for m in range(n):
            beta_out[m] = _invert(snr_full[m], bits[m] / (bandwidth * (t_hi - t_compute[m])))
            # only reachable at the untouched equal-split bound, where rounding can overshoot
            if not beta_out[m] <= 1.0:
                beta_out[m] = share
    return t_hi, iterations


def phase_grid_search(double complex direct, double complex[::1] cascade, int levels,
                      long[::1] best_idx):
    cdef Py_ssize_t n = cascade.shape[0]
    cdef Py_ssize_t i, d
    cdef long long total_count, step
    cdef double best = -1.0
    cdef double val
    if levels < 2:
        raise ValueError("levels must be at least 2")
    total_count = 1
    for i in range(n):
        total_count *= levels
        if total_count > MAX_GRID_COMBINATIONS:
            raise ValueError(f"{levels}**{n} grid points exceed the {MAX_GRID_COMBINATIONS} guard")
    if n == 0:
        return abs(direct)

    import numpy as np
    cre_np = np.empty((n, levels))
    cim_np = np.empty((n, levels))
    idx_np = np.zeros(n, dtype=np.int64)
    pre_np = np.empty(n + 1)
    pim_np = np.empty(n + 1)
    cdef double[:, ::1] cre = cre_np
    cdef double[:, ::1] cim = cim_np
    cdef long long[::1] idx = idx_np
    cdef double[::1] pre = pre_np
    cdef double[::1] pim = pim_np
    cdef double ang, sre, sim
    for i in range(n):
        for d in range(levels):
            ang = TWO_PI * d / levels
            cre[i, d] = cascade[i].real * cos(ang) - cascade[i].imag * sin(ang)
            cim[i, d] = cascade[i].real * sin(ang) + cascade[i].imag * cos(ang)

    with nogil:
        # pre[i] holds the partial sum of direct plus elements < i
        pre[0] = direct.real
        pim[0] = direct.imag
        for i in range(n):
            pre[i + 1] = pre[i] + cre[i, 0]
            pim[i + 1] = pim[i] + cim[i, 0]
        for step in range(total_count):
            sre = pre[n]
            sim = pim[n]
            val = sre * sre + sim * sim
            if val > best:
                best = val
                for i in range(n):
                    best_idx[i] = idx[i]
            # odometer increment on the last digit, carrying leftwards
            d = n - 1
            while d >= 0:
                idx[d] += 1
                if idx[d] < levels:
                    break
                idx[d] = 0
                d -= 1
            if d < 0:
                break
            for i in range(d, n):
                pre[i + 1] = pre[i] + cre[i, idx[i]]
                pim[i + 1] = pim[i] + cim[i, idx[i]]
    return sqrt(best)
