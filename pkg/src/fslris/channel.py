"""Random channel draws and the per-user SNR / rate they induce."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, db_to_linear, path_loss_db


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``key`` under the root ``seed``.

    Streams are addressed by a counter tuple, never by draw order, so any
    trial can be regenerated in isolation and on any worker.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) samples."""
    shape = (size,) if isinstance(size, int) else tuple(size)
    z = rng.standard_normal(size=shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelSet:
    """Quasi-static channels for one round.

    ``direct[m]`` is the user-BS coefficient, ``user_ris[k][m]`` the
    length-``N_k`` user-to-RIS vector and ``ris_bs[k]`` the length-``N_k``
    RIS-to-BS row.  ``direct_gain`` keeps the large-scale power gain of
    each direct link so fading statistics can be checked in isolation.
    """

    direct: np.ndarray
    user_ris: tuple[np.ndarray, ...]
    ris_bs: tuple[np.ndarray, ...]
    direct_gain: np.ndarray
    user_positions: np.ndarray

    @property
    def num_users(self) -> int:
        return len(self.direct)

    @property
    def num_ris(self) -> int:
        return len(self.ris_bs)

    def cascade(self, m: int, k: int) -> np.ndarray:
        """Element-wise product ``g_k[n] * h_{m,k}[n]`` (the diag(g) h vector)."""
        return self.ris_bs[k] * self.user_ris[k][m]

    def cascade_amplitudes(self, m: int, k: int) -> np.ndarray:
        return np.abs(self.ris_bs[k]) * np.abs(self.user_ris[k][m])

    def with_direct(self, direct: np.ndarray) -> "ChannelSet":
        return ChannelSet(np.asarray(direct, dtype=complex), self.user_ris, self.ris_bs,
                          self.direct_gain, self.user_positions)

    def without_ris(self) -> "ChannelSet":
        """Same draw with every reflected path forced to zero."""
        return ChannelSet(self.direct, tuple(np.zeros_like(h) for h in self.user_ris),
                          tuple(np.zeros_like(g) for g in self.ris_bs),
                          self.direct_gain, self.user_positions)


def ula_los_phases(ris_pos: np.ndarray, bs_pos: np.ndarray, n: int) -> np.ndarray:
    """Half-wavelength linear-array LoS phase progression towards the BS."""
    direction = bs_pos - ris_pos
    cos_angle = direction[0] / np.linalg.norm(direction)
    return math.pi * np.arange(n) * cos_angle


def generate_channels(scenario: Scenario, trial_index: int, round_index: int = 0) -> ChannelSet:
    """Draw one round of channels; bit-identical for a fixed (seed, trial, round).

    Direct and user-RIS links use NLOS urban-micro path loss with unit-mean
    Rayleigh fading; the direct link additionally carries the scenario's
    blockage loss.  RIS-BS links use LOS path loss with Rician fading.
    """
    if trial_index < 0 or round_index < 0:
        raise ValueError("trial_index and round_index must be non-negative")
    M, K = scenario.num_users, scenario.num_ris
    seed = scenario.rng_seed
    key = (trial_index, round_index)

    x0, x1, y0, y1 = scenario.user_area
    pos_rng = substream(seed, *key, 0)
    xy = pos_rng.uniform(size=(M, 2))
    users = np.column_stack([x0 + (x1 - x0) * xy[:, 0], y0 + (y1 - y0) * xy[:, 1],
                             np.full(M, scenario.user_height)])
    bs = np.asarray(scenario.bs_position, dtype=float)
    f = scenario.carrier_freq

    d_direct = np.linalg.norm(users - bs, axis=1)
    direct_gain = 10.0 ** (-(path_loss_db(d_direct, f, "nlos") + scenario.direct_blockage_db) / 10.0)
    direct = np.sqrt(direct_gain) * complex_normal(substream(seed, *key, 1), M)

    k_factor = db_to_linear(scenario.rician_k_db)
    user_ris, ris_bs = [], []
    for k, (ris_pos, n_k) in enumerate(zip(scenario.ris_locations, scenario.elements)):
        d_ur = np.linalg.norm(users - ris_pos, axis=1)
        gain_ur = 10.0 ** (-path_loss_db(d_ur, f, "nlos") / 10.0)
        fading = complex_normal(substream(seed, *key, 2, k), (M, n_k))
        user_ris.append(np.sqrt(gain_ur)[:, None] * fading)

        gain_rb = 10.0 ** (-path_loss_db(np.linalg.norm(bs - ris_pos), f, "los") / 10.0)
        los = np.exp(1j * ula_los_phases(ris_pos, bs, n_k))
        scatter = complex_normal(substream(seed, *key, 3, k), n_k)
        g = math.sqrt(k_factor / (k_factor + 1.0)) * los + math.sqrt(1.0 / (k_factor + 1.0)) * scatter
        ris_bs.append(math.sqrt(float(gain_rb)) * g)

    return ChannelSet(direct, tuple(user_ris), tuple(ris_bs), direct_gain, users)


def combined_channel(channels: ChannelSet, phases, matching, m: int) -> complex:
    """``h_d + sum_k r_{m,k} g_k Phi_k h_{m,k}`` restricted to the user's element group."""
    total = complex(channels.direct[m])
    if matching is None:
        return total
    slot = matching.assignment.get(m)
    if slot is None:
        return total
    k, start, stop = slot
    theta = phases.theta[k][start:stop]
    total += complex(np.sum(channels.ris_bs[k][start:stop] * np.exp(1j * theta)
                            * channels.user_ris[k][m][start:stop]))
    return total


def _check_fraction(beta_m: float) -> None:
    if not 0.0 < beta_m <= 1.0:
        raise ValueError(f"bandwidth fraction must lie in (0, 1], got {beta_m!r}")


def snr_from_gain(power_gain: float, beta_m: float, scenario: Scenario) -> float:
    """``p |c|^2 / (beta B N0)`` for a combined channel power ``|c|^2``."""
    _check_fraction(beta_m)
    return scenario.tx_power * power_gain / (beta_m * scenario.bandwidth * scenario.noise_density)


def snr(channels: ChannelSet, phases, matching, beta_m: float, m: int, scenario: Scenario) -> float:
    """Received SNR of user ``m`` with bandwidth fraction ``beta_m``."""
    _check_fraction(beta_m)
    c = combined_channel(channels, phases, matching, m)
    return snr_from_gain(abs(c) ** 2, beta_m, scenario)


def rate_from_snr(snr_value: float, beta_m: float, bandwidth: float) -> float:
    return beta_m * bandwidth * math.log2(1.0 + snr_value)


def rate(channels: ChannelSet, phases, matching, beta_m: float, m: int, scenario: Scenario) -> float:
    """Achievable uplink rate in bit/s."""
    return rate_from_snr(snr(channels, phases, matching, beta_m, m, scenario), beta_m,
                         scenario.bandwidth)
