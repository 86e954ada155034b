"""One federated round over the RIS-aided uplink, its analytics, and seeded experiments."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import learner
from .association import Matching, associate, random_association, requesting_users
from .bandwidth import Allocation, ComputeProfile, equal_allocation, full_band_snr, \
    local_compute_latency, solve_bandwidth
from .channel import ChannelSet, combined_channel, generate_channels, substream
from .ris import PhaseConfig, phases_for_matching
from .scenario import Scenario

SCHEMES = ("proposed", "benchmark", "direct")
# detector accuracy used when no model is trained and none is configured
SWEEP_EPSILON = 0.9

# stream tags under (seed, trial, round, tag, ...)
_REQUEST_STREAM = 4
_TRAIN_STREAM = 5
_BENCHMARK_STREAM = 6


def utility(q_total: int, t_star: float) -> float:
    """Received models per second; zero when nothing was received."""
    if q_total == 0:
        return 0.0
    if not t_star > 0.0:
        raise ValueError(f"round latency must be positive, got {t_star!r}")
    return q_total / t_star


def chi1(epsilon: float, num_ris: int) -> float:
    """Gain of fused over single-detector inference accuracy."""
    return learner.fused_accuracy(epsilon, num_ris) / epsilon


def reception_probability_direct(gamma_t: float) -> float:
    """Pr{gamma_d >= gamma_T} for a unit-mean exponential direct SNR."""
    if gamma_t < 0:
        raise ValueError("gamma_t must be non-negative")
    return math.exp(-gamma_t)


def kappa_from_parts(reflected_amp: float, direct_snr: float, scale: float) -> float:
    """SNR increment ``scale A^2 + 2 sqrt(gamma_d scale) A`` of a reflected amplitude ``A``.

    ``scale`` is ``p / (beta B N0)``.
    """
    return scale * reflected_amp ** 2 + 2.0 * math.sqrt(direct_snr * scale) * reflected_amp


def kappa_and_chi2(channels: ChannelSet, phases: PhaseConfig, matching: Matching | None,
                   beta_m: float, scenario: Scenario, m: int) -> tuple[float, float]:
    """``(kappa, e^kappa)`` for user ``m``; ``(0, 1)`` without an RIS."""
    if not 0.0 < beta_m <= 1.0:
        raise ValueError(f"bandwidth fraction must lie in (0, 1], got {beta_m!r}")
    reflected = combined_channel(channels, phases, matching, m) - channels.direct[m]
    scale = scenario.tx_power / (beta_m * scenario.bandwidth * scenario.noise_density)
    gamma_d = scale * abs(channels.direct[m]) ** 2
    kappa = kappa_from_parts(abs(reflected), gamma_d, scale)
    with np.errstate(over="ignore"):
        return kappa, float(np.exp(kappa))


@dataclass
class BoundValues:
    kappa: np.ndarray
    chi1: float
    chi2: np.ndarray
    direct_snr: np.ndarray
    p_c: np.ndarray


@dataclass
class FLState:
    """Learning state carried between rounds of one trial."""

    arch: learner.Architecture
    data: learner.FederatedData
    params: np.ndarray
    val_accuracy: float

    @classmethod
    def initial(cls, scenario: Scenario, trial: int = 0) -> "FLState":
        users = scenario.data_users or scenario.num_users
        data = learner.generate_dataset(scenario.rng_seed + trial, scenario.samples_per_class,
                                        scenario.window, users, features=scenario.features)
        arch = learner.Architecture(scenario.input_dim, scenario.hidden_units)
        params = arch.init(substream(scenario.rng_seed, trial, 0, 7))
        return cls(arch, data, params, learner.accuracy(arch, params, data.val))


@dataclass
class RoundReport:
    scheme: str
    trial: int
    round_index: int
    matching: Matching
    allocation: Allocation
    phases: PhaseConfig
    alpha: np.ndarray
    inferred: np.ndarray
    Q: np.ndarray
    epsilon: float
    eta: float
    bounds: BoundValues
    updated: bool
    state: FLState | None = None
    test_accuracy: float = float("nan")
    test_loss: float = float("nan")
    class_accuracy: np.ndarray = field(default_factory=lambda: np.full(learner.NUM_CLASSES, np.nan))

    @property
    def Q_total(self) -> int:
        return int(self.Q.sum())

    @property
    def T_star(self) -> float:
        return self.allocation.T_star

    @property
    def utility(self) -> float:
        return utility(self.Q_total, self.T_star)


def _gate(alloc: Allocation, alpha: np.ndarray, scenario: Scenario, num_users: int) -> np.ndarray:
    q = np.zeros(num_users, dtype=int)
    for i, m in enumerate(alloc.users):
        q[m] = int(alpha[m] == 1 and alloc.snr[i] >= scenario.snr_threshold)
    return q


def run_round(scenario: Scenario, state: FLState | None = None, trial: int = 0,
              round_index: int = 0, scheme: str = "proposed") -> RoundReport:
    """Run one round: sensing, association, phases, bandwidth, gated aggregation.

    Without ``state`` no model is trained and the detector accuracy comes
    from the scenario (or :data:`SWEEP_EPSILON`).  With a state, the
    accuracy is the configured value if any, else the global model's
    validation accuracy, and the returned report carries the next state.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    M, K = scenario.num_users, scenario.num_ris
    seed = scenario.rng_seed
    channels = generate_channels(scenario, trial, round_index)
    if scheme == "direct":
        channels = channels.without_ris()

    req_rng = substream(seed, trial, round_index, _REQUEST_STREAM)
    alpha = (req_rng.random(M) < scenario.request_prob).astype(int)
    if scenario.detector_accuracy is not None:
        epsilon = scenario.detector_accuracy
    elif state is not None:
        # an untrained model may score zero; keep the detector accuracy in (0, 1]
        epsilon = max(state.val_accuracy, 1e-6)
    else:
        epsilon = SWEEP_EPSILON
    requests = learner.infer_requests(alpha, epsilon, K, req_rng)
    participants = [int(m) for m in np.flatnonzero(requests.inferred)]

    beta0 = np.zeros(M)
    if participants:
        beta0[participants] = 1.0 / len(participants)
    if scheme == "proposed":
        matching = associate(channels, scenario, beta0)
    elif scheme == "benchmark":
        matching = random_association(channels, participants,
                                      substream(seed, trial, round_index, _BENCHMARK_STREAM))
    else:
        matching = Matching({}, scenario.elements, requesting_users(channels, scenario, beta0),
                            "none")
    phases = phases_for_matching(channels, matching)

    profile = ComputeProfile.from_scenario(scenario, M)
    snr_full = full_band_snr(channels, phases, matching, participants, scenario)
    t_gmp = np.array([local_compute_latency(profile, m) for m in participants])
    bits = profile.model_bits[participants]
    if scheme == "benchmark":
        alloc = equal_allocation(snr_full, t_gmp, bits, scenario.bandwidth, participants)
    else:
        alloc = solve_bandwidth(snr_full, t_gmp, bits, scenario.bandwidth, users=participants)
    Q = _gate(alloc, alpha, scenario, M)

    bounds = _bounds(channels, phases, matching, alloc, scenario, epsilon)
    report = RoundReport(scheme, trial, round_index, matching, alloc, phases, alpha,
                         requests.inferred, Q, epsilon, requests.eta, bounds, updated=False)
    if state is not None:
        _learn(report, state, scenario)
    return report


def _bounds(channels, phases, matching, alloc: Allocation, scenario: Scenario,
            epsilon: float) -> BoundValues:
    n = len(alloc.users)
    kappa, chi2, gd, pc = (np.zeros(n), np.ones(n), np.zeros(n), np.ones(n))
    for i, m in enumerate(alloc.users):
        b = float(alloc.beta[i])
        kappa[i], chi2[i] = kappa_and_chi2(channels, phases, matching, b, scenario, m)
        scale = scenario.tx_power / (b * scenario.bandwidth * scenario.noise_density)
        gd[i] = scale * abs(channels.direct[m]) ** 2
        # threshold normalised by the user's mean direct SNR
        pc[i] = reception_probability_direct(scenario.snr_threshold
                                             / (scale * channels.direct_gain[m]))
    return BoundValues(kappa, chi1(epsilon, scenario.num_ris), chi2, gd, pc)


def _learn(report: RoundReport, state: FLState, scenario: Scenario) -> None:
    """Local training for every scheduled requester, then gated aggregation."""
    arch, data = state.arch, state.data
    seed, t, r = scenario.rng_seed, report.trial, report.round_index
    trainers = [m for m in range(scenario.num_users)
                if report.alpha[m] == 1 and report.inferred[m] == 1]
    models, sizes = [], []
    for m in trainers:
        local = data.users[m % len(data.users)]
        models.append(learner.local_train(arch, state.params, local, scenario.learning_rate,
                                          scenario.local_epochs, scenario.batch_size,
                                          substream(seed, t, r, _TRAIN_STREAM, m)))
        sizes.append(len(local))
    try:
        params = learner.aggregate(models, sizes, report.inferred[trainers], report.Q[trainers])
        report.updated = True
    except learner.NoUpdateRound:
        params = state.params
    report.state = FLState(arch, data, params, learner.accuracy(arch, params, data.val))
    report.test_accuracy = learner.accuracy(arch, params, data.test)
    report.test_loss = learner.local_loss(arch, params, data.test)
    report.class_accuracy = learner.per_class_accuracy(arch, params, data.test)


# ------------------------------------------------------------------ experiments

RESULT_COLUMNS = (
    "point", "sweep_var", "sweep_value", "scheme", "trial", "rounds",
    "utility", "Q_total", "T_star", "participants", "requesting", "case",
    "matched_users", "proposals", "match_rounds", "epsilon", "eta", "chi1",
    "kappa_mean", "chi2_mean", "p_c_mean", "updates", "test_accuracy", "test_loss",
    "idle_accuracy",
)
MATCHING_COLUMNS = ("requesting", "case", "matched_users", "proposals", "match_rounds")


def run_trial(scenario: Scenario, scheme: str, trial: int, rounds: int,
              train: bool) -> dict:
    """Run ``rounds`` rounds of one trial; per-round metrics are averaged."""
    state = FLState.initial(scenario, trial) if train else None
    reports = []
    for r in range(rounds):
        rep = run_round(scenario, state, trial, r, scheme)
        state = rep.state if train else None
        reports.append(rep)
    last = reports[-1]
    mean = lambda xs: float(np.mean(xs)) if len(xs) else float("nan")
    row = {
        "scheme": scheme, "trial": trial, "rounds": rounds,
        "utility": mean([r.utility for r in reports]),
        "Q_total": mean([r.Q_total for r in reports]),
        "T_star": mean([r.T_star for r in reports]),
        "participants": mean([len(r.allocation.users) for r in reports]),
        "epsilon": mean([r.epsilon for r in reports]),
        "eta": mean([r.eta for r in reports]),
        "chi1": mean([r.bounds.chi1 for r in reports]),
        "kappa_mean": mean(np.concatenate([r.bounds.kappa for r in reports])),
        "chi2_mean": mean(np.concatenate([r.bounds.chi2 for r in reports])),
        "p_c_mean": mean(np.concatenate([r.bounds.p_c for r in reports])),
        "updates": sum(r.updated for r in reports),
        "test_accuracy": last.test_accuracy, "test_loss": last.test_loss,
        "idle_accuracy": float(last.class_accuracy[0]),
    }
    if scheme == "proposed":
        row.update({
            "requesting": mean([len(r.matching.requesting) for r in reports]),
            "case": last.matching.case,
            "matched_users": mean([len(r.matching.assignment) for r in reports]),
            "proposals": mean([r.matching.proposals for r in reports]),
            "match_rounds": mean([r.matching.rounds for r in reports]),
        })
    else:
        row.update({c: "" for c in MATCHING_COLUMNS})
    return row


def _job(args) -> dict:
    scenario, scheme, trial, rounds, train, extra = args
    row = run_trial(scenario, scheme, trial, rounds, train)
    row.update(extra)
    return row


def sweep_points(base: Scenario, sweep: tuple[str, list] | None) -> list[tuple[str, object, Scenario]]:
    if sweep is None:
        return [("", "", base)]
    name, values = sweep
    if not values:
        raise ValueError(f"sweep over {name} has no values")
    return [(name, v, base.replace(**{name: v})) for v in values]


def run_experiment(base: Scenario, sweep: tuple[str, list] | None = None,
                   schemes=("proposed", "benchmark"), trials: int = 200, rounds: int = 1,
                   train: bool = False, workers: int = 1) -> list[dict]:
    """One row per (sweep point, scheme, trial), ordered by that key.

    Every trial draws from its own seeded substreams, so rows do not
    depend on ``workers``.
    """
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}")
    jobs = []
    for p, (name, value, scen) in enumerate(sweep_points(base, sweep)):
        for scheme, trial in product(schemes, range(trials)):
            jobs.append((scen, scheme, trial, rounds, train,
                         {"point": p, "sweep_var": name, "sweep_value": value}))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        rows = [_job(j) for j in jobs]
    return [{c: row[c] for c in RESULT_COLUMNS} for row in rows]


def summarize(rows: list[dict], metrics=("utility", "Q_total", "T_star", "test_accuracy")) -> list[dict]:
    """Mean and standard error of each metric per (point, scheme)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["point"], row["scheme"]), []).append(row)
    out = []
    for (point, scheme), rs in sorted(groups.items()):
        entry = {"point": point, "sweep_var": rs[0]["sweep_var"],
                 "sweep_value": rs[0]["sweep_value"], "scheme": scheme, "trials": len(rs)}
        for m in metrics:
            vals = np.array([r[m] for r in rs], dtype=float)
            entry[f"{m}_mean"] = float(np.mean(vals))
            entry[f"{m}_stderr"] = (float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
                                    if len(vals) > 1 else 0.0)
        out.append(entry)
    return out
