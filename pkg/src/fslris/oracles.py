"""Independent reference computations and the verification suites built on them.

Every oracle here reaches its answer by a different route from the
production code: exhaustive enumeration, sampling, or a closed form.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import learner
from .association import (INFEASIBLE, Matching, PreferenceData, algorithm1_one_to_one,
                          algorithm2_one_to_many, preference_data, requesting_users)
from .bandwidth import solve_bandwidth
from .channel import ChannelSet, complex_normal, substream
from .flsim import kappa_from_parts, reception_probability_direct
from .ris import align_phases, closed_form_gain, grid_oracle, reflected_sum
from .scenario import Scenario

TWO_PI = 2.0 * np.pi


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} ({self.seconds:.1f}s) {self.detail}".rstrip()


# ------------------------------------------------------------------- phases

def sweep_grid_optimum(direct: complex, cascade: np.ndarray, levels: int) -> float:
    """Exact best ``|direct + sum c_n e^{j 2 pi l_n / L}|`` in O(N^2 L).

    For a probe direction psi the best level of each element is the one
    whose rotated term points closest to psi, and the optimum lies in the
    arc that contains its own argument.  The per-element choices only change
    at N*L breakpoints, so evaluating one psi per arc covers every
    candidate.
    """
    cascade = np.asarray(cascade, dtype=complex)
    if len(cascade) == 0:
        return abs(direct)
    step = TWO_PI / levels
    args = np.angle(cascade)
    breaks = np.sort(np.mod((args[:, None] + step * (np.arange(levels) + 0.5)).ravel(), TWO_PI))
    mids = 0.5 * (breaks + np.roll(breaks, -1))
    mids[-1] = 0.5 * (breaks[-1] + breaks[0] + TWO_PI)
    lvl = np.mod(np.rint((mids[:, None] - args[None, :]) / step), levels)
    sums = direct + np.sum(cascade[None, :] * np.exp(1j * step * lvl), axis=1)
    return float(np.max(np.abs(sums)))


def verify_phase(instances: int = 1000, max_elements: int = 6, levels: int = 64,
                 seed: int = 0) -> list[Check]:
    """Closed-form gain equals the triangle bound and beats the 64-level grid optimum."""
    t0 = time.perf_counter()
    rng = substream(seed, 101)
    worst_eq, worst_grid, grid_used = 0.0, math.inf, 0
    for i in range(instances):
        n = int(rng.integers(1, max_elements + 1))
        scale = 10.0 ** rng.uniform(-3, 1)
        d = complex(complex_normal(rng, 1)[0]) * (scale if rng.random() < 0.8 else 0.0)
        c = complex_normal(rng, n) * 10.0 ** rng.uniform(-3, 1, n)
        theta, _ = align_phases(d, c)
        gain = abs(d + reflected_sum(c, theta))
        bound = abs(d) + float(np.sum(np.abs(c)))
        worst_eq = max(worst_eq, abs(gain - closed_form_gain(d, c)), abs(gain - bound) / max(bound, 1e-300))
        if levels ** n <= 1 << 24 and n <= 4:
            best, _ = grid_oracle(d, c, levels)
            grid_used += 1
        else:
            best = sweep_grid_optimum(d, c, levels)
        worst_grid = min(worst_grid, gain - best * (1.0 - 1e-12))
    dt = time.perf_counter() - t0
    return [
        Check("phase.closed_form_equals_triangle_bound", worst_eq <= 1e-9,
              f"max deviation {worst_eq:.2e} over {instances} instances", dt),
        Check("phase.closed_form_beats_grid", worst_grid >= 0.0,
              f"min margin {worst_grid:.3e}; exhaustive grid on {grid_used}, arc sweep on "
              f"{instances - grid_used}", dt),
        Check("phase.runtime", dt < 30.0, f"{dt:.1f}s budget 30s", dt),
    ]


# ----------------------------------------------------------------- matching

def random_instance(rng: np.random.Generator, users: int, ris: int, elements: int,
                    threshold_db: float | None = None) -> tuple[ChannelSet, Scenario, np.ndarray]:
    """Unit-scale random channels with ``p / (B N0) = 1`` and equal bandwidth shares."""
    direct = complex_normal(rng, users) * 0.5
    user_ris = tuple(complex_normal(rng, (users, elements)) * rng.uniform(0.05, 0.5)
                     for _ in range(ris))
    ris_bs = tuple(complex_normal(rng, elements) for _ in range(ris))
    ch = ChannelSet(direct, user_ris, ris_bs, np.ones(users), np.zeros((users, 3)))
    if threshold_db is None:
        threshold_db = float(rng.uniform(3.0, 15.0))
    # noise_density 30 dBm/Hz is 1 W/Hz, so p / (beta B N0) = 1 / beta
    sc = Scenario(num_users=users, num_ris=ris, elements_per_ris=elements, tx_power=1.0,
                  bandwidth=1.0, noise_density_dbm_hz=30.0, snr_threshold_db=threshold_db)
    return ch, sc, np.full(users, 1.0 / users)


def _blocks(pairs: dict[int, int], prefs: PreferenceData) -> bool:
    """Blocking-pair test from raw scores (no shared helper with the production check)."""
    holder = {k: m for m, k in pairs.items()}
    for m in prefs.users:
        for k in range(prefs.num_ris):
            if pairs.get(m) == k or prefs.ris_score[k].get(m, 0.0) <= 0.0:
                continue
            cur = pairs.get(m)
            user_better = cur is None or (prefs.user_score[m][k], -k) > (prefs.user_score[m][cur], -cur)
            other = holder.get(k)
            ris_better = other is None or (prefs.ris_score[k][m], -m) > (prefs.ris_score[k].get(other, 0.0), -other)
            if user_better and ris_better:
                return True
    return False


def stable_matchings(prefs: PreferenceData) -> list[dict[int, int]]:
    """Every stable one-to-one matching, by enumerating all partial injective matchings."""
    users = prefs.users
    options = [[None] + [k for k in range(prefs.num_ris) if prefs.ris_score[k].get(m, 0.0) > 0.0]
               for m in users]
    found = []
    for choice in itertools.product(*options):
        taken = [k for k in choice if k is not None]
        if len(taken) != len(set(taken)):
            continue
        pairs = {m: k for m, k in zip(users, choice) if k is not None}
        if not _blocks(pairs, prefs):
            found.append(pairs)
    return found


def max_served_one_to_many(channels: ChannelSet, scenario: Scenario, beta: np.ndarray,
                           users) -> int:
    """Largest number of users that contiguous element groups can lift to the threshold.

    Enumerates every user-to-RIS assignment and, per RIS, every packing
    order; in a fixed order greedy minimal prefixes are optimal.
    """
    users = sorted(users)
    K = channels.num_ris
    scale = scenario.tx_power / (scenario.bandwidth * scenario.noise_density)
    need = {m: math.sqrt(scenario.snr_threshold * beta[m] / scale) - abs(channels.direct[m])
            for m in users}

    def packs(k: int, group) -> bool:
        n_k = len(channels.ris_bs[k])
        for order in itertools.permutations(group):
            pos, ok = 0, True
            for m in order:
                acc, amp = 0.0, channels.cascade_amplitudes(m, k)
                while acc < need[m] * (1.0 + 1e-12) and pos < n_k:
                    acc += amp[pos]
                    pos += 1
                if acc < need[m] * (1.0 + 1e-12):
                    ok = False
                    break
            if ok:
                return True
        return False

    best = 0
    for choice in itertools.product(range(-1, K), repeat=len(users)):
        count = sum(c >= 0 for c in choice)
        if count <= best:
            continue
        if all(packs(k, [m for m, c in zip(users, choice) if c == k]) for k in range(K)):
            best = count
    return best


def _matched_snr_ok(ch: ChannelSet, sc: Scenario, beta: np.ndarray, matching: Matching) -> bool:
    scale = sc.tx_power / (sc.bandwidth * sc.noise_density)
    for m, (k, a, b) in matching.assignment.items():
        amp = abs(ch.direct[m]) + float(np.sum(ch.cascade_amplitudes(m, k)[a:b]))
        if scale / beta[m] * amp * amp < sc.snr_threshold * (1.0 - 1e-9):
            return False
    return True


def verify_matching(instances: int = 1000, many_instances: int = 100, seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    rng = substream(seed, 202)
    unstable = outside = user_pessimal = 0
    for _ in range(instances):
        users, ris = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        ch, sc, beta = random_instance(rng, users, ris, int(rng.integers(2, 9)))
        req = requesting_users(ch, sc, beta)
        out = algorithm1_one_to_one(ch, sc, beta, req)
        prefs = preference_data(ch, sc, req, beta)
        pairs = out.pairs()
        unstable += _blocks(pairs, prefs)
        stable = stable_matchings(prefs)
        outside += pairs not in stable
        # users propose, so every user is at least as well off as in any stable matching
        for other in stable:
            for m in prefs.users:
                if prefs.user_key(m, other.get(m)) > prefs.user_key(m, pairs.get(m)):
                    user_pessimal += 1
                    break
    dt1 = time.perf_counter() - t0

    t1 = time.perf_counter()
    invalid = gap_total = worst_gap = 0
    for _ in range(many_instances):
        ch, sc, beta = random_instance(rng, 4, 2, int(rng.integers(4, 9)))
        req = requesting_users(ch, sc, beta)
        out = algorithm2_one_to_many(ch, sc, beta, req)
        ok = _matched_snr_ok(ch, sc, beta, out)
        for k in range(ch.num_ris):
            spans = sorted((a, b) for kk, a, b in out.assignment.values() if kk == k)
            ok &= all(s[1] <= t[0] for s, t in zip(spans, spans[1:]))
            ok &= all(0 <= a < b <= len(ch.ris_bs[k]) for a, b in spans)
        best = max_served_one_to_many(ch, sc, beta, req)
        gap = best - len(out.assignment)
        ok &= gap >= 0
        invalid += not ok
        gap_total += gap
        worst_gap = max(worst_gap, gap)
    dt2 = time.perf_counter() - t1
    return [
        Check("matching.no_blocking_pairs", unstable == 0, f"{unstable}/{instances} unstable", dt1),
        Check("matching.in_enumerated_stable_set", outside == 0, f"{outside}/{instances} outside", dt1),
        Check("matching.user_optimal", user_pessimal == 0,
              f"{user_pessimal}/{instances} with a user better off elsewhere", dt1),
        Check("matching.runtime", dt1 < 60.0, f"{dt1:.1f}s budget 60s", dt1),
        Check("matching.one_to_many_valid", invalid == 0,
              f"{invalid}/{many_instances} invalid; served-count gap to exhaustive optimum: "
              f"mean {gap_total / max(many_instances, 1):.3f}, worst {worst_gap}", dt2),
    ]


# ---------------------------------------------------------------- bandwidth

def latency_for(beta: np.ndarray, snr_full, t_gmp, bits, bandwidth: float) -> np.ndarray:
    """Round latency for each row of ``beta`` (rows are candidate allocations)."""
    beta = np.atleast_2d(beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = beta * bandwidth * np.log2(1.0 + np.asarray(snr_full) / beta)
        t = np.asarray(t_gmp) + np.asarray(bits) / rate
    t[~(beta > 0)] = np.inf
    return t.max(axis=1)


def random_allocation_instance(rng: np.random.Generator, users: int):
    snr_full = 10.0 ** rng.uniform(-3, 3, users)
    t_gmp = rng.uniform(0.0, 0.5, users)
    bits = rng.uniform(1e4, 1e5, users)
    return snr_full, t_gmp, bits, 1e6


def verify_bandwidth(instances: int = 200, samples: int = 10_000, max_users: int = 12,
                     seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    rng = substream(seed, 303)
    beaten = sum_bad = residual_bad = 0
    worst = -math.inf
    for _ in range(instances):
        n = int(rng.integers(1, max_users + 1))
        snr_full, t_gmp, bits, B = random_allocation_instance(rng, n)
        alloc = solve_bandwidth(snr_full, t_gmp, bits, B)
        # half the samples spread over the simplex, half concentrated near the optimum
        wide = rng.dirichlet(np.ones(n), samples // 2)
        near = rng.dirichlet(alloc.beta * 2000.0 + 1e-3, samples - samples // 2)
        best_sampled = float(np.min(latency_for(np.vstack([wide, near]), snr_full, t_gmp, bits, B)))
        rel = (alloc.T_star - best_sampled) / best_sampled
        worst = max(worst, rel)
        beaten += rel > 1e-6
        s = float(np.sum(alloc.beta))
        sum_bad += not (1.0 - 1e-6 <= s <= 1.0 + 1e-12)
        finish = alloc.finish_times
        residual_bad += float(np.max(finish) - np.min(finish)) >= 1e-6 * alloc.T_star
    dt = time.perf_counter() - t0
    return [
        Check("bandwidth.bisection_not_beaten_by_sampling", beaten == 0,
              f"{beaten}/{instances} beaten; worst relative excess {worst:.2e}", dt),
        Check("bandwidth.fractions_sum_to_one", sum_bad == 0, f"{sum_bad}/{instances} off", dt),
        Check("bandwidth.equal_finish_residual", residual_bad == 0,
              f"{residual_bad}/{instances} above 1e-6 T*", dt),
        Check("bandwidth.runtime", dt < 60.0, f"{dt:.1f}s budget 60s", dt),
    ]


# ------------------------------------------------------------------- bounds

def empirical_ratio_vs_bound(rng: np.random.Generator, draws: int) -> tuple[float, float]:
    """One parameter draw of the reception-probability gain and its ``e^kappa`` bound.

    The direct SNR is unit-mean exponential and the reflected amplitude adds
    coherently; kappa is evaluated at the threshold.  Both probabilities
    are estimated from the same stratified draws (one uniform per stratum),
    which keeps the estimator error well below the bound's slack.
    """
    gamma_t = rng.uniform(0.2, 4.0)
    amp = rng.uniform(0.0, 1.5)
    u = (np.arange(draws) + rng.random(draws)) / draws
    gd = -np.log1p(-u)
    p = np.mean((np.sqrt(gd) + amp) ** 2 >= gamma_t)
    p_c = np.mean(gd >= gamma_t)
    return float(p / p_c), math.exp(kappa_from_parts(amp, gamma_t, 1.0))


def verify_bounds(draws: int = 1_000_000, fused_draws: int = 100_000, param_draws: int = 1000,
                  seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    rng = substream(seed, 404)
    checks = []
    gd = rng.exponential(1.0, draws)
    for gt in (0.5, 1.0, 2.0):
        emp = float(np.mean(gd >= gt))
        exact = reception_probability_direct(gt)
        rel = abs(emp - exact) / exact
        checks.append(Check(f"bounds.direct_reception_gamma_T={gt}", rel <= 0.01,
                            f"empirical {emp:.5f} vs {exact:.5f} (rel {rel:.2e})"))
    for eps in (0.7, 0.9):
        for K in (1, 2, 4):
            eta = learner.fused_accuracy(eps, K)
            alpha = rng.integers(0, 2, fused_draws)
            state = learner.infer_requests(alpha, eps, K, rng)
            emp = float(np.mean(state.inferred == alpha))
            sigma = math.sqrt(max(eta * (1.0 - eta), 1e-300) / fused_draws)
            ok = abs(emp - eta) <= 3.0 * sigma or (eta == 1.0 and emp == 1.0)
            checks.append(Check(f"bounds.fused_accuracy_eps={eps}_K={K}", ok,
                                f"empirical {emp:.5f} vs {eta:.5f} (3 sigma {3 * sigma:.1e})"))
    held = sum(r <= b for r, b in (empirical_ratio_vs_bound(rng, 100_000) for _ in range(param_draws)))
    checks.append(Check("bounds.ratio_below_exp_kappa", held >= 0.99 * param_draws,
                        f"{held}/{param_draws} draws within the bound"))
    dt = time.perf_counter() - t0
    for c in checks:
        c.seconds = dt
    checks.append(Check("bounds.runtime", dt < 120.0, f"{dt:.1f}s budget 120s", dt))
    return checks


# ---------------------------------------------------------------- gradients

def finite_difference_errors(probes: int = 100, seed: int = 0, step: float = 1e-5) -> np.ndarray:
    """Relative error of the analytic gradient on random coordinates of random networks."""
    rng = substream(seed, 505)
    arch = learner.Architecture(16, 8)
    errors = np.empty(probes)
    for i in range(probes):
        w = arch.init(rng) + 0.1 * rng.standard_normal(arch.size)
        x = rng.standard_normal((12, arch.input_dim))
        y = rng.integers(0, learner.NUM_CLASSES, 12)
        _, grad = learner.loss_and_grad(arch, w, x, y)
        j = int(rng.integers(arch.size))
        e = np.zeros(arch.size)
        e[j] = step
        fp, _ = learner.loss_and_grad(arch, w + e, x, y)
        fm, _ = learner.loss_and_grad(arch, w - e, x, y)
        num = (fp - fm) / (2.0 * step)
        errors[i] = abs(num - grad[j]) / max(abs(num), abs(grad[j]), 1e-6)
    return errors


def verify_gradients(probes: int = 100, seed: int = 0) -> list[Check]:
    t0 = time.perf_counter()
    err = finite_difference_errors(probes, seed)
    dt = time.perf_counter() - t0
    return [Check("gradients.finite_differences", float(err.max()) < 1e-4,
                  f"max relative error {err.max():.2e} over {probes} probes", dt),
            Check("gradients.runtime", dt < 10.0, f"{dt:.1f}s budget 10s", dt)]


SUITES = {
    "phase": verify_phase,
    "matching": verify_matching,
    "bandwidth": verify_bandwidth,
    "bounds": verify_bounds,
    "gradients": verify_gradients,
}


def run_suite(name: str, seed: int = 0) -> list[Check]:
    if name == "all":
        return [c for suite in SUITES.values() for c in suite(seed=seed)]
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed=seed)
