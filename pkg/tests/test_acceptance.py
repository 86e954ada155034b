"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``PASS``/``FAIL`` line; the lines are repeated in the
pytest terminal summary.  Run just this file with
``pytest tests/test_acceptance.py -v``.
"""
import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fslris import cli, flsim, oracles
from fslris.flsim import FLState, run_round
from fslris.scenario import Scenario

ROOT = Path(__file__).resolve().parents[1]
M_VALUES = (8, 16, 24, 32, 40, 48, 56, 64)
TRIALS = 200
ROUNDS_TO_CONVERGE = 300


def report(number: int, title: str, passed: bool, detail: str, seconds: float) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {title} ({seconds:.1f}s) {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def suite(number: int, title: str, name: str) -> None:
    t0 = time.perf_counter()
    checks = oracles.run_suite(name)
    dt = time.perf_counter() - t0
    failed = [c for c in checks if not c.passed]
    detail = "; ".join(f"{c.name}: {c.detail}" for c in (failed or checks))
    report(number, title, not failed, detail, dt)
    assert not failed, [c.line() for c in failed]


def test_1_phase_optimality():
    suite(1, "phase optimality", "phase")


def test_2_matching_stability():
    suite(2, "matching stability", "matching")


def test_3_bandwidth_optimality():
    suite(3, "bandwidth optimality", "bandwidth")


def test_4_reception_and_fusion_probabilities():
    suite(4, "reception and fused-accuracy probabilities", "bounds")


def test_5_gradient_correctness():
    suite(5, "gradient correctness", "gradients")


# ------------------------------------------------------------ learning runs

def learning_scenario(num_ris: int) -> Scenario:
    return Scenario(num_users=2, num_ris=num_ris)


def training_curve(scenario: Scenario, trial: int, rounds: int):
    """Test accuracy after every round plus the final report."""
    state = FLState.initial(scenario, trial)
    accs = []
    for r in range(rounds):
        rep = run_round(scenario, state, trial, r)
        state = rep.state
        accs.append(rep.test_accuracy)
    return np.array(accs), rep


def test_6_fl_convergence():
    t0 = time.perf_counter()
    accs, last = training_curve(learning_scenario(2), 0, ROUNDS_TO_CONVERGE)
    dt = time.perf_counter() - t0
    idle = float(last.class_accuracy[0])
    ok = accs[-1] >= 0.90 and idle >= 0.99 and dt < 300
    first = int(np.argmax(accs >= 0.90)) + 1 if np.any(accs >= 0.90) else None
    report(6, "FL convergence with K=2", ok,
           f"test accuracy {accs[-1]:.4f} after {ROUNDS_TO_CONVERGE} rounds (first >= 0.90 at round "
           f"{first}), Idle accuracy {idle:.4f}", dt)
    assert ok


# ------------------------------------------------------------ trend checks

@pytest.fixture(scope="module")
def utility_sweep():
    """Mean and per-trial utility for K in {1, 4}, both schemes, every M."""
    t0 = time.perf_counter()
    out = {}
    for K in (1, 4):
        base = Scenario(num_ris=K, detector_accuracy=flsim.SWEEP_EPSILON)
        rows = flsim.run_experiment(base, ("num_users", list(M_VALUES)),
                                    ("proposed", "benchmark"), TRIALS)
        for row in rows:
            out.setdefault((K, row["scheme"], row["sweep_value"]), []).append(row["utility"])
    return {k: np.array(v) for k, v in out.items()}, time.perf_counter() - t0


@pytest.fixture(scope="module")
def accuracy_runs():
    t0 = time.perf_counter()
    finals = {}
    for K in (1, 4):
        finals[K] = np.array([training_curve(learning_scenario(K), t, ROUNDS_TO_CONVERGE)[0][-50:].mean()
                              for t in range(8)])
    return finals, time.perf_counter() - t0


def stderr(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def test_7a_utility_rises_then_decays(utility_sweep):
    data, dt = utility_sweep
    curve = [data[1, "proposed", M] for M in M_VALUES]
    means = np.array([c.mean() for c in curve])
    errs = np.array([stderr(c) for c in curve])
    peak = int(np.argmax(means))
    # both legs must clear two combined standard errors, or the shape is noise
    rise = means[peak] - means[0] > 2 * math.hypot(errs[peak], errs[0])
    decay = means[peak] - means[-1] > 2 * math.hypot(errs[peak], errs[-1])
    ok = 0 < peak < len(M_VALUES) - 1 and rise and decay
    shown = ", ".join(f"M={M}: {m * 1e6:.3f}+-{e * 1e6:.3f}" for M, m, e in zip(M_VALUES, means, errs))
    report(7, "(a) utility vs M rises then decays (K=1, proposed)", ok,
           f"peak at M={M_VALUES[peak]}, rise significant={rise}, decay significant={decay}; "
           f"utility x1e6: {shown}", dt)
    assert ok


def test_7b_more_ris_helps_at_largest_m(utility_sweep):
    data, dt = utility_sweep
    M = M_VALUES[-1]
    k1, k4 = data[1, "proposed", M], data[4, "proposed", M]
    frac = float(np.mean(k4 > k1))
    gain = k4.mean() / k1.mean() - 1
    ok = frac >= 0.95
    report(7, f"(b) K=4 beats K=1 at M={M}", ok,
           f"in {frac:.1%} of {TRIALS} paired runs; mean gain {gain:+.1%}", dt)
    assert ok


def test_7c_proposed_beats_benchmark(utility_sweep):
    data, dt = utility_sweep
    worst = min((data[K, "proposed", M].mean() - data[K, "benchmark", M].mean(), K, M)
                for K in (1, 4) for M in M_VALUES)
    ok = worst[0] >= 0.0
    report(7, "(c) proposed >= benchmark mean utility at every point", ok,
           f"smallest margin {worst[0] * 1e6:.3f}e-6 at K={worst[1]}, M={worst[2]}", dt)
    assert ok


def test_7d_more_ris_no_worse_accuracy(accuracy_runs):
    finals, dt = accuracy_runs
    ok = finals[4].mean() >= finals[1].mean() and dt < 15 * 60
    report(7, "(d) converged accuracy with K=4 >= K=1", ok,
           f"mean test accuracy over the last 50 of {ROUNDS_TO_CONVERGE} rounds, 8 trials: "
           f"K=4 {finals[4].mean():.4f}+-{stderr(finals[4]):.4f}, "
           f"K=1 {finals[1].mean():.4f}+-{stderr(finals[1]):.4f}", dt)
    assert ok


# ------------------------------------------------------------ determinism

def test_8_determinism(tmp_path):
    t0 = time.perf_counter()
    config = str(ROOT / "configs" / "default.ini")
    outs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "3")):
        out = tmp_path / name
        assert cli.main(["simulate", "--config", config, "--seed", "7", "--workers", workers,
                         "--out", str(out)]) == 0
        outs.append(out / "results.csv")
    same_run = filecmp.cmp(outs[0], outs[1], shallow=False)
    same_workers = filecmp.cmp(outs[0], outs[2], shallow=False)
    ok = same_run and same_workers
    report(8, "determinism of results.csv", ok,
           f"rerun identical={same_run}, 1 vs 3 workers identical={same_workers}",
           time.perf_counter() - t0)
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
