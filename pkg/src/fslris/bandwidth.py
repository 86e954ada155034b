"""Min-max completion latency bandwidth allocation.

Each participant's latency is its local computation time plus its upload
time ``z / (beta B log2(1 + gamma(beta)))``.  Because the noise scales with
the allocated band, ``gamma(beta) = snr_full / beta`` where ``snr_full`` is
the SNR over the whole band.  For a candidate finish time ``T`` every user
needs the smallest fraction ``beta_m(T)`` that finishes by ``T``; the sum of
these fractions decreases strictly in ``T``, and the optimum is the ``T`` at
which they add up to one.  It is found by bisection; ``beta_m(T)`` is an
exact monotone inversion, not a fixed-point iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import combined_channel
from .scenario import Scenario


class InfeasibleAllocation(ValueError):
    """A participant can never finish: zero rate or unbounded computation."""

    def __init__(self, user: int, reason: str):
        super().__init__(f"user {user}: {reason}")
        self.user = user


@dataclass(frozen=True)
class ComputeProfile:
    """Per-user computation constants (arrays of equal length)."""

    cycles_per_bit: np.ndarray
    cpu_freq: np.ndarray
    sample_bits: np.ndarray
    model_bits: np.ndarray
    local_accuracy: float
    iteration_constant: float

    def __post_init__(self) -> None:
        if not 0.0 < self.local_accuracy < 1.0:
            raise ValueError("local_accuracy must lie in (0, 1)")
        if self.iteration_constant <= 0:
            raise ValueError("iteration_constant must be positive")
        for name in ("cycles_per_bit", "cpu_freq", "sample_bits", "model_bits"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_scenario(cls, scenario: Scenario, num_users: int | None = None) -> "ComputeProfile":
        n = scenario.num_users if num_users is None else num_users
        return cls(np.full(n, scenario.cycles_per_bit), np.full(n, scenario.cpu_freq),
                   np.full(n, scenario.sample_bits), np.full(n, scenario.upload_bits),
                   scenario.local_accuracy, scenario.iteration_constant)


def local_compute_latency(profile: ComputeProfile, m: int) -> float:
    """Upper bound on local training time: ``v ln(1/theta) c_m s_m / f_m``."""
    return (profile.iteration_constant * math.log(1.0 / profile.local_accuracy)
            * profile.cycles_per_bit[m] * profile.sample_bits[m] / profile.cpu_freq[m])


def upload_latency(beta_m: float, snr_m: float, bits: float, bandwidth: float) -> float:
    """Upload time ``z / (beta B log2(1 + snr))``; ``inf`` when nothing gets through."""
    if beta_m <= 0:
        raise ValueError("beta_m must be positive")
    rate = beta_m * bandwidth * math.log2(1.0 + snr_m)
    return math.inf if rate <= 0.0 else bits / rate


def completion_latency(t_gmp, t_com) -> float:
    """Straggler latency of one round: ``max_m (t_Gmp + t_Com)``."""
    total = np.asarray(t_gmp, dtype=float) + np.asarray(t_com, dtype=float)
    return float(np.max(total)) if total.size else 0.0


def fraction_needed(t: float, snr_full: float, t_gmp: float, bits: float, bandwidth: float) -> float:
    """Smallest bandwidth fraction that lets a user finish by time ``t``."""
    if t <= t_gmp:
        return math.inf
    return kernels.bandwidth_for_rate(snr_full, bits / (bandwidth * (t - t_gmp)))


def fraction_by_fixed_point(t: float, snr_full: float, t_gmp: float, bits: float,
                            bandwidth: float, max_iter: int = 50,
                            rtol: float = 1e-8) -> tuple[float, bool, int]:
    """Alternate ``beta -> gamma -> beta`` from the full band; returns ``(beta, converged, iterations)``.

    The map ``beta <- z / (B log2(1 + a / beta) (t - t_gmp))`` decreases
    monotonically to the same root that :func:`fraction_needed` finds
    directly.  Its contraction factor tends to one at low SNR, so it can
    stop short of ``rtol`` within ``max_iter``; it is kept as a cross-check.
    """
    if t <= t_gmp:
        return math.inf, False, 0
    need = bits / (bandwidth * (t - t_gmp))
    beta = 1.0
    for i in range(1, max_iter + 1):
        nxt = need / math.log2(1.0 + snr_full / beta)
        if abs(nxt - beta) <= rtol * beta:
            return nxt, True, i
        beta = nxt
    return beta, False, max_iter


def feasibility_sum(t: float, snr_full, t_gmp, bits, bandwidth: float) -> float:
    """``sum_m beta_m(t)``; the finish time ``t`` is achievable iff this is at most one."""
    return float(sum(fraction_needed(t, s, c, z, bandwidth)
                     for s, c, z in zip(snr_full, t_gmp, bits)))


@dataclass(frozen=True)
class Allocation:
    """Solved allocation for ``users`` (arrays are aligned with ``users``)."""

    users: tuple[int, ...]
    beta: np.ndarray
    T_star: float
    t_gmp: np.ndarray
    t_com: np.ndarray
    snr: np.ndarray
    iterations: int = 0

    def beta_vector(self, num_users: int) -> np.ndarray:
        full = np.zeros(num_users)
        full[list(self.users)] = self.beta
        return full

    @property
    def finish_times(self) -> np.ndarray:
        return self.t_gmp + self.t_com


def solve_bandwidth(snr_full, t_gmp, bits, bandwidth: float, tol: float = 1e-9,
                    users=None) -> Allocation:
    """Minimise the maximum finish time subject to ``sum beta <= 1``.

    ``snr_full[i]`` is user ``i``'s SNR over the whole band.  Returns the
    finish time at the feasibility boundary (to relative ``tol``) and the
    fractions rescaled to sum to exactly one, so every user finishes within
    ``tol * T*`` of ``T*``.
    """
    snr_full = np.ascontiguousarray(snr_full, dtype=float)
    t_gmp = np.ascontiguousarray(t_gmp, dtype=float)
    bits = np.ascontiguousarray(bits, dtype=float)
    n = len(snr_full)
    users = tuple(range(n)) if users is None else tuple(int(u) for u in users)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n == 0:
        return Allocation(users, np.zeros(0), 0.0, t_gmp, np.zeros(0), np.zeros(0))
    for i in range(n):
        if not (snr_full[i] > 0.0 and math.isfinite(snr_full[i])):
            raise InfeasibleAllocation(users[i], f"non-positive channel SNR {snr_full[i]!r}")
        if not math.isfinite(t_gmp[i]):
            raise InfeasibleAllocation(users[i], "unbounded computation latency")
    beta = np.empty(n)
    # bisect to adjacent floats: near-full-band users turn tiny T errors into
    # visible sum errors, which the rescaling below would spread across everyone
    t_star, iterations = kernels.min_max_latency(snr_full, t_gmp, bits, float(bandwidth),
                                                 min(tol, 1e-15), beta)
    beta = beta / beta.sum()
    gamma = snr_full / beta
    t_com = bits / (beta * bandwidth * np.log2(1.0 + gamma))
    return Allocation(users, beta, float(t_star), t_gmp, t_com, gamma, int(iterations))


def equal_allocation(snr_full, t_gmp, bits, bandwidth: float, users=None) -> Allocation:
    """Benchmark split: every participant gets ``1/n`` of the band."""
    snr_full = np.asarray(snr_full, dtype=float)
    t_gmp = np.asarray(t_gmp, dtype=float)
    n = len(snr_full)
    users = tuple(range(n)) if users is None else tuple(int(u) for u in users)
    if n == 0:
        return Allocation(users, np.zeros(0), 0.0, t_gmp, np.zeros(0), np.zeros(0))
    beta = np.full(n, 1.0 / n)
    gamma = snr_full / beta
    with np.errstate(divide="ignore"):
        t_com = np.asarray(bits, dtype=float) / (beta * bandwidth * np.log2(1.0 + gamma))
    return Allocation(users, beta, completion_latency(t_gmp, t_com), t_gmp, t_com, gamma)


def full_band_snr(channels, phases, matching, users, scenario: Scenario) -> np.ndarray:
    """Whole-band SNR ``p |c_m|^2 / (B N0)`` of each user's combined channel."""
    scale = scenario.tx_power / (scenario.bandwidth * scenario.noise_density)
    return np.array([scale * abs(combined_channel(channels, phases, matching, m)) ** 2
                     for m in users])


def allocate_bandwidth(participants, channels, phases, matching, scenario: Scenario,
                       profile: ComputeProfile | None = None, tol: float = 1e-9) -> Allocation:
    """Solve the allocation for ``participants`` under the given association and phases."""
    users = sorted(int(m) for m in participants)
    profile = profile or ComputeProfile.from_scenario(scenario, channels.num_users)
    snr_full = full_band_snr(channels, phases, matching, users, scenario)
    t_gmp = np.array([local_compute_latency(profile, m) for m in users])
    bits = profile.model_bits[users]
    return solve_bandwidth(snr_full, t_gmp, bits, scenario.bandwidth, tol, users)
