"""RIS phase configuration: closed-form alignment plus a grid oracle for checking it."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import ChannelSet

TWO_PI = 2.0 * np.pi


@dataclass
class PhaseConfig:
    """Per-RIS phase vectors in radians, each entry in ``[0, 2*pi)``.

    ``diagnostics`` lists elements whose channel had zero magnitude and
    therefore received the conventional ``arg(h_d)`` phase.
    """

    theta: list[np.ndarray]
    diagnostics: list[tuple[int, int, int]] = field(default_factory=list)

    @classmethod
    def zeros(cls, elements) -> "PhaseConfig":
        return cls([np.zeros(n) for n in elements])

    def coefficients(self, k: int) -> np.ndarray:
        """Unit-modulus reflection coefficients ``exp(j theta)`` of RIS ``k``."""
        return np.exp(1j * self.theta[k])


def align_phases(direct: complex, cascade: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Phases that rotate every reflected term onto ``arg(direct)``.

    Returns ``(theta, zero_mask)``.  Elements whose cascade is exactly zero
    contribute nothing; they take the phase ``arg(direct)``.
    """
    cascade = np.asarray(cascade, dtype=complex)
    ref = np.angle(direct)
    theta = np.mod(ref - np.angle(cascade), TWO_PI)
    zero = cascade == 0
    theta[zero] = np.mod(ref, TWO_PI)
    # mod can return exactly 2*pi for tiny negative inputs
    theta[theta >= TWO_PI] = 0.0
    return theta, zero


def optimal_phases(channels: ChannelSet, m: int, k: int, start: int = 0,
                   stop: int | None = None) -> np.ndarray:
    """Optimal phases of RIS ``k`` (elements ``start:stop``) for user ``m``.

    theta_n = arg(h_d) - arg(g_n) - arg(h_n), reduced to [0, 2*pi).  The
    per-element split of the argument matters only for the zero-magnitude
    convention, so the product ``g_n h_n`` is used directly.
    """
    theta, _ = align_phases(channels.direct[m], channels.cascade(m, k)[start:stop])
    return theta


def closed_form_gain(direct: complex, cascade: np.ndarray) -> float:
    """|h_d| + sum_n |g_n h_n|, the triangle-inequality optimum."""
    return float(abs(direct) + np.sum(np.abs(cascade)))


def reflected_sum(cascade: np.ndarray, theta: np.ndarray) -> complex:
    return complex(np.sum(np.asarray(cascade) * np.exp(1j * np.asarray(theta))))


def phases_for_matching(channels: ChannelSet, matching) -> PhaseConfig:
    """Configure every RIS for the users assigned to it.

    Each user's element range is aligned to that user; unassigned elements
    keep phase zero.
    """
    config = PhaseConfig.zeros([len(g) for g in channels.ris_bs])
    for m, (k, start, stop) in sorted(matching.assignment.items()):
        theta, zero = align_phases(channels.direct[m], channels.cascade(m, k)[start:stop])
        config.theta[k][start:stop] = theta
        for n in np.flatnonzero(zero):
            config.diagnostics.append((m, k, start + int(n)))
    return config


def grid_oracle(direct: complex, cascade: np.ndarray, levels: int) -> tuple[float, np.ndarray]:
    """Exhaustive search of ``|direct + sum cascade_n e^{j phi_n}|`` over an L-level grid.

    Refuses (``ValueError``) when ``levels ** N`` exceeds 2**24.
    """
    cascade = np.ascontiguousarray(cascade, dtype=complex)
    idx = np.zeros(len(cascade), dtype=np.int64)
    gain = kernels.phase_grid_search(complex(direct), cascade, int(levels), idx)
    return float(gain), TWO_PI * idx / levels


def brute_force_phase_oracle(channels: ChannelSet, m: int, k: int,
                             levels: int) -> tuple[float, np.ndarray]:
    """Best grid gain and phases for user ``m`` on the whole of RIS ``k``."""
    return grid_oracle(channels.direct[m], channels.cascade(m, k), levels)
