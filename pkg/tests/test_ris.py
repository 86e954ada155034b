import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fslris.association import Matching
from fslris.channel import ChannelSet, substream
from fslris.oracles import sweep_grid_optimum
from fslris.ris import (align_phases, brute_force_phase_oracle, closed_form_gain, grid_oracle,
                        optimal_phases, phases_for_matching, reflected_sum)


def single(direct, h, g):
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    return ChannelSet(np.atleast_1d(np.asarray(direct, dtype=complex)), (h,),
                      (np.asarray(g, dtype=complex),), np.ones(1), np.zeros((1, 3)))


def rand_case(rng, n):
    d = complex(rng.normal(), rng.normal())
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    return d, c


def test_real_positive_channels_need_no_rotation():
    ch = single(2.0, [[1.0, 3.0, 0.5]], [1.0, 2.0, 4.0])
    assert np.allclose(optimal_phases(ch, 0, 0), 0.0)


def test_quarter_turn():
    ch = single(1j, [[1.0]], [1.0])
    assert optimal_phases(ch, 0, 0)[0] == pytest.approx(math.pi / 2)


def test_phases_lie_in_range_and_align():
    rng = substream(2, 0)
    for _ in range(50):
        d, c = rand_case(rng, 7)
        theta, zero = align_phases(d, c)
        assert not zero.any()
        assert np.all((theta >= 0) & (theta < 2 * math.pi))
        rotated = np.angle(c * np.exp(1j * theta))
        assert np.allclose(np.angle(np.exp(1j * (rotated - np.angle(d)))), 0.0, atol=1e-9)


def test_zero_magnitude_elements_are_flagged():
    ch = single(1 + 1j, [[0.0, 1.0]], [1.0, 1.0])
    cfg = phases_for_matching(ch, Matching({0: (0, 0, 2)}, (2,)))
    assert cfg.diagnostics == [(0, 0, 0)]
    assert cfg.theta[0][0] == pytest.approx(math.pi / 4)


def test_unassigned_elements_stay_at_zero():
    rng = substream(3, 0)
    h = rng.normal(size=(1, 6)) + 1j * rng.normal(size=(1, 6))
    ch = single(1j, h, np.ones(6))
    cfg = phases_for_matching(ch, Matching({0: (0, 2, 4)}, (6,)))
    assert np.all(cfg.theta[0][[0, 1, 4, 5]] == 0.0)
    assert np.allclose(cfg.theta[0][2:4], optimal_phases(ch, 0, 0, 2, 4))


def test_idempotent():
    rng = substream(4, 0)
    d, c = rand_case(rng, 5)
    theta, _ = align_phases(d, c)
    again, _ = align_phases(d, c * np.exp(1j * theta))
    # already aligned: no further rotation (modulo a full turn)
    assert np.allclose(np.exp(1j * again), 1.0, atol=1e-9)
    assert np.array_equal(align_phases(d, c)[0], theta)


def test_grid_oracle_small_cases():
    gain, _ = grid_oracle(0.0, np.array([1.0 + 0j]), 4)
    assert gain == pytest.approx(1.0)
    gain, phases = grid_oracle(1.0, np.array([2.0 + 0j, 0.5 + 0j]), 64)
    assert gain == pytest.approx(closed_form_gain(1.0, np.array([2.0, 0.5])), abs=1e-12)
    assert np.allclose(phases, 0.0)


def test_grid_oracle_refuses_huge_grids():
    with pytest.raises(ValueError):
        grid_oracle(1.0, np.ones(5, dtype=complex), 64)
    with pytest.raises(ValueError):
        grid_oracle(1.0, np.ones(2, dtype=complex), 1)


def test_closed_form_within_quantisation_of_grid():
    rng = substream(5, 0)
    for _ in range(30):
        d, c = rand_case(rng, 3)
        ch = single(d, [c], np.ones(3))
        best, _ = brute_force_phase_oracle(ch, 0, 0, 64)
        exact = closed_form_gain(d, c)
        assert best <= exact * (1 + 1e-12)
        assert best >= exact * math.cos(math.pi / 64)


def test_arc_sweep_matches_exhaustive_grid():
    rng = substream(6, 0)
    for n, levels in [(1, 8), (2, 16), (3, 16), (4, 8), (3, 64), (4, 32)]:
        for _ in range(10):
            d, c = rand_case(rng, n)
            d *= rng.choice([0.0, 1.0])
            exhaustive, _ = grid_oracle(d, c, levels)
            assert sweep_grid_optimum(d, c, levels) == pytest.approx(exhaustive, rel=1e-12)


def test_naive_enumeration_matches_grid_oracle():
    rng = substream(7, 0)
    d, c = rand_case(rng, 3)
    rot = np.exp(2j * np.pi * np.arange(6) / 6)
    naive = max(abs(d + sum(c[i] * rot[l] for i, l in enumerate(ls)))
                for ls in itertools.product(range(6), repeat=3))
    assert grid_oracle(d, c, 6)[0] == pytest.approx(naive, rel=1e-13)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_closed_form_dominates_random_phases(seed, n):
    rng = np.random.default_rng(seed)
    d, c = rand_case(rng, n)
    theta, _ = align_phases(d, c)
    best = abs(d + reflected_sum(c, theta))
    assert best == pytest.approx(closed_form_gain(d, c), rel=1e-12)
    rivals = np.abs(d + np.exp(1j * rng.uniform(0, 2 * np.pi, (1000, n))) @ c)
    assert np.all(best >= rivals * (1 - 1e-12))
