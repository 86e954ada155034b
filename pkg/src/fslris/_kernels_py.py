"""Pure-Python kernels.  Same signatures and results as the compiled ``_kernels``."""
from __future__ import annotations

import math

import numpy as np

LN2 = math.log(2.0)
DBL_EPS = np.finfo(float).eps
MAX_GRID_COMBINATIONS = 1 << 24


def spectral_efficiency(beta: float, snr_full: float) -> float:
    """``beta * log2(1 + snr_full / beta)``: rate per hertz of total band."""
    if beta <= 0.0:
        return 0.0
    return beta * math.log1p(snr_full / beta) / LN2


def bandwidth_for_rate(snr_full: float, target: float) -> float:
    """Smallest bandwidth fraction reaching ``target`` bits/s/Hz-of-total-band.

    ``snr_full`` is the SNR the user would see over the whole band.  The
    SNR grows as the allocated fraction shrinks, so the rate is a concave
    increasing function of the fraction; it is inverted with a bracketed
    Newton iteration.  Returns ``inf`` when even the full band falls short.
    """
    if target <= 0.0:
        return 0.0
    top = spectral_efficiency(1.0, snr_full)
    # a few ulps of slack: targets derived from the full-band rate itself may round just above it
    if target > top * (1.0 + 8.0 * DBL_EPS):
        return math.inf
    if target >= top:
        return 1.0
    lo, hi = 0.0, 1.0
    beta = 1.0
    for _ in range(200):
        x = snr_full / beta
        f = beta * math.log1p(x) / LN2 - target
        if f > 0.0:
            hi = beta
        else:
            lo = beta
        deriv = (math.log1p(x) - x / (1.0 + x)) / LN2
        nxt = beta - f / deriv if deriv > 0.0 else 0.5 * (lo + hi)
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - beta) <= 1e-15 * beta or hi - lo <= 1e-16 * hi:
            beta = nxt
            break
        beta = nxt
    return beta


def min_max_latency(
    snr_full: np.ndarray,
    t_compute: np.ndarray,
    bits: np.ndarray,
    bandwidth: float,
    rtol: float,
    beta_out: np.ndarray,
) -> tuple[float, int]:
    """Bisect the common finish time; fill ``beta_out`` and return ``(T*, iterations)``."""
    n = len(snr_full)
    if n == 0:
        return 0.0, 0
    t_lo = max(t_compute)
    t_hi = 0.0
    share = 1.0 / n
    for m in range(n):
        rate = bandwidth * spectral_efficiency(share, snr_full[m])
        t_hi = max(t_hi, t_compute[m] + bits[m] / rate)
    iterations = 0
    while t_hi - t_lo > rtol * t_hi and iterations < 2000:
        iterations += 1
        t_mid = 0.5 * (t_lo + t_hi)
        if t_mid <= t_lo or t_mid >= t_hi:
            break
        total = 0.0
        for m in range(n):
            if t_mid <= t_compute[m]:
                total = math.inf
                break
            total += bandwidth_for_rate(snr_full[m], bits[m] / (bandwidth * (t_mid - t_compute[m])))
            if total > 1.0:
                break
        if total <= 1.0:
            t_hi = t_mid
        else:
            t_lo = t_mid
    for m in range(n):
        beta_out[m] = bandwidth_for_rate(snr_full[m], bits[m] / (bandwidth * (t_hi - t_compute[m])))
        # only reachable at the untouched equal-split bound, where rounding can overshoot
        if not beta_out[m] <= 1.0:
            beta_out[m] = share
    return t_hi, iterations


def phase_grid_search(direct: complex, cascade: np.ndarray, levels: int, best_idx: np.ndarray) -> float:
    """Exhaustively maximise ``|direct + sum_n cascade_n * exp(j*2*pi*l_n/levels)|``.

    Writes the maximising level indices to ``best_idx``; ties keep the
    lexicographically first combination.
    """
    n = len(cascade)
    if levels < 2:
        raise ValueError("levels must be at least 2")
    if levels ** n > MAX_GRID_COMBINATIONS:
        raise ValueError(f"{levels}**{n} grid points exceed the {MAX_GRID_COMBINATIONS} guard")
    if n == 0:
        return abs(direct)
    rot = np.exp(2j * np.pi * np.arange(levels) / levels)
    contrib = cascade[:, None] * rot[None, :]
    # enumerate the leading digits in Python, the trailing block with numpy
    tail = 1
    while tail < n and levels ** (tail + 1) <= 1 << 18:
        tail += 1
    head = n - tail
    block = np.zeros(1, dtype=complex)
    for i in range(head, n):
        block = (block[:, None] + contrib[i][None, :]).ravel()
    best = -1.0
    best_flat = 0
    for head_flat in range(levels ** head):
        s = direct
        rem = head_flat
        for i in range(head - 1, -1, -1):
            s += contrib[i, rem % levels]
            rem //= levels
        vals = np.abs(s + block)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = float(vals[j])
            best_flat = head_flat * len(block) + j
    for i in range(n - 1, -1, -1):
        best_idx[i] = best_flat % levels
        best_flat //= levels
    return best
