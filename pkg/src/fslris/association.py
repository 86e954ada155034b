"""User-RIS association as two-sided matching.

Users whose direct link misses the SNR threshold form the requesting
set.  When there are at least as many RISs as requesting users, each RIS
serves one user (deferred acceptance, users proposing).  Otherwise RIS
elements are split into contiguous groups and several users share an
RIS; the element budget creates externalities between users, so
preference lists are rebuilt after every round.

Conventions used throughout:

* ties are broken towards the lower index;
* a user scores RISs higher-is-better, an RIS ranks users by a key where
  higher-is-better as well, and a user with RIS score zero is never
  acceptable to that RIS.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelSet
from .scenario import Scenario

INFEASIBLE = -1
# relative head-room on the threshold so that realised SNRs never fall a rounding error short
_THRESHOLD_MARGIN = 1e-12


@dataclass
class PreferenceList:
    """Ranked candidates of one player, best first, with the scores behind the ranking."""

    owner: tuple[str, int]
    ranked: list[int]
    scores: list[float]


@dataclass
class Matching:
    """Association state.

    ``assignment`` maps a user to ``(ris, start, stop)``: the user is
    reflected by elements ``start:stop`` of that RIS.  In the one-to-one
    case the range covers the whole RIS.
    """

    assignment: dict[int, tuple[int, int, int]]
    elements: tuple[int, ...]
    requesting: frozenset[int] = frozenset()
    case: str = "none"
    proposals: int = 0
    rounds: int = 0
    trace: list[dict] = field(default_factory=list)

    def ris_of(self, m: int) -> int | None:
        slot = self.assignment.get(m)
        return None if slot is None else slot[0]

    def users_of(self, k: int) -> list[int]:
        return sorted((m for m, s in self.assignment.items() if s[0] == k),
                      key=lambda m: self.assignment[m][1])

    def occupancy(self, k: int) -> int:
        return sum(s[2] - s[1] for s in self.assignment.values() if s[0] == k)

    def pairs(self) -> dict[int, int]:
        return {m: s[0] for m, s in self.assignment.items()}

    def association_matrix(self, num_users: int) -> np.ndarray:
        """Binary ``r_{m,k}`` matrix of shape (users, RISs)."""
        r = np.zeros((num_users, len(self.elements)), dtype=int)
        for m, (k, _, _) in self.assignment.items():
            r[m, k] = 1
        return r

    def dump_trace(self, path: str | Path) -> None:
        """Write the proposal trace as JSON lines."""
        with open(path, "w") as fh:
            for event in self.trace:
                fh.write(json.dumps(event, sort_keys=True) + "\n")


def _scale(scenario: Scenario, beta_m: float) -> float:
    """SNR per unit of received amplitude squared: p / (beta B N0)."""
    return scenario.tx_power / (beta_m * scenario.bandwidth * scenario.noise_density)


def direct_snr(channels: ChannelSet, scenario: Scenario, beta: np.ndarray) -> np.ndarray:
    """Direct-link SNR per user; ``nan`` where the user has no bandwidth."""
    beta = np.asarray(beta, dtype=float)
    out = np.full(channels.num_users, np.nan)
    has = beta > 0
    out[has] = (scenario.tx_power * np.abs(channels.direct[has]) ** 2
                / (beta[has] * scenario.bandwidth * scenario.noise_density))
    return out


def requesting_users(channels: ChannelSet, scenario: Scenario, beta: np.ndarray) -> frozenset[int]:
    """Participating users (``beta_m > 0``) whose direct SNR is below the threshold."""
    gd = direct_snr(channels, scenario, beta)
    return frozenset(int(m) for m in np.flatnonzero(~np.isnan(gd) & (gd < scenario.snr_threshold)))


def pair_snr(channels: ChannelSet, scenario: Scenario, beta_m: float, m: int, k: int,
             start: int = 0, stop: int | None = None) -> float:
    """SNR of user ``m`` through elements ``start:stop`` of RIS ``k`` with aligned phases."""
    amp = abs(channels.direct[m]) + float(np.sum(channels.cascade_amplitudes(m, k)[start:stop]))
    return _scale(scenario, beta_m) * amp * amp


def user_pref_one_to_one(channels: ChannelSet, m: int) -> PreferenceList:
    """Rank RISs by ``sum_n |h_{m,k}^n|``, descending."""
    scores = [float(np.sum(np.abs(channels.user_ris[k][m]))) for k in range(channels.num_ris)]
    ranked = sorted(range(len(scores)), key=lambda k: (-scores[k], k))
    return PreferenceList(("user", m), ranked, [scores[k] for k in ranked])


def ris_pref_one_to_one(channels: ChannelSet, scenario: Scenario, k: int,
                        requesting, beta: np.ndarray) -> PreferenceList:
    """Rank requesting users by ``max(gamma_m^k - gamma_T, 0)``, descending.

    Zero-score users sit at the bottom and are never accepted.
    """
    gt = scenario.snr_threshold
    scores = {m: max(pair_snr(channels, scenario, beta[m], m, k) - gt, 0.0) for m in requesting}
    ranked = sorted(scores, key=lambda m: (-scores[m], m))
    return PreferenceList(("ris", k), ranked, [scores[m] for m in ranked])


@dataclass
class PreferenceData:
    """Cardinal preferences of a one-to-one game.

    ``user_score[m][k]`` and ``ris_score[k][m]`` are higher-is-better;
    ``ris_score`` of zero marks an unacceptable pair.
    """

    users: list[int]
    num_ris: int
    user_score: dict[int, list[float]]
    ris_score: dict[int, dict[int, float]]

    def user_key(self, m: int, k: int | None):
        if k is None:
            return (-math.inf, -math.inf)
        return (self.user_score[m][k], -k)

    def ris_key(self, k: int, m: int | None):
        if m is None:
            return (0.0, -math.inf)
        return (self.ris_score[k].get(m, 0.0), -m)

    def acceptable(self, k: int, m: int) -> bool:
        return self.ris_score[k].get(m, 0.0) > 0.0

    def user_list(self, m: int) -> list[int]:
        return sorted(range(self.num_ris), key=lambda k: (-self.user_score[m][k], k))


def preference_data(channels: ChannelSet, scenario: Scenario, requesting,
                    beta: np.ndarray) -> PreferenceData:
    users = sorted(requesting)
    user_score = {m: [float(np.sum(np.abs(channels.user_ris[k][m])))
                      for k in range(channels.num_ris)] for m in users}
    ris_score = {}
    for k in range(channels.num_ris):
        pl = ris_pref_one_to_one(channels, scenario, k, users, beta)
        ris_score[k] = dict(zip(pl.ranked, pl.scores))
    return PreferenceData(users, channels.num_ris, user_score, ris_score)


def deferred_acceptance(prefs: PreferenceData, initial: dict[int, int] | None = None,
                        trace: list | None = None) -> tuple[dict[int, int], int, int]:
    """User-proposing deferred acceptance.

    Returns ``(user -> RIS, proposals, rounds)``.  Each user proposes to
    each RIS at most once, so at most ``users * RISs`` proposals are made.
    """
    held: dict[int, int] = {}  # ris -> user
    match: dict[int, int] = {}
    for m, k in (initial or {}).items():
        held[k] = m
        match[m] = k
    lists = {m: prefs.user_list(m) for m in prefs.users}
    nxt = {m: 0 for m in prefs.users}
    proposals = rounds = 0
    while True:
        free = [m for m in prefs.users if m not in match and nxt[m] < len(lists[m])]
        if not free:
            break
        rounds += 1
        for m in free:
            if m in match or nxt[m] >= len(lists[m]):
                continue
            k = lists[m][nxt[m]]
            nxt[m] += 1
            proposals += 1
            cur = held.get(k)
            accepted = bool(prefs.acceptable(k, m) and prefs.ris_key(k, m) > prefs.ris_key(k, cur))
            if trace is not None:
                trace.append({"round": rounds, "user": m, "ris": k, "accepted": accepted,
                              "displaced": cur if accepted else None})
            if accepted:
                if cur is not None:
                    del match[cur]
                held[k] = m
                match[m] = k
    return match, proposals, rounds


def is_stable(pairs: dict[int, int], prefs: PreferenceData) -> tuple[bool, list[tuple[int, int]]]:
    """Scan every (user, RIS) pair for a blocking pair.

    ``(m, k)`` blocks when ``m`` prefers ``k`` to its partner (any RIS beats
    none), ``m`` is acceptable to ``k`` and ``k`` prefers ``m`` to its
    partner.
    """
    partner = {k: m for m, k in pairs.items()}
    blocking = []
    for m in prefs.users:
        for k in range(prefs.num_ris):
            if pairs.get(m) == k:
                continue
            if (prefs.user_key(m, k) > prefs.user_key(m, pairs.get(m))
                    and prefs.acceptable(k, m)
                    and prefs.ris_key(k, m) > prefs.ris_key(k, partner.get(k))):
                blocking.append((m, k))
    return not blocking, blocking


def algorithm1_one_to_one(channels: ChannelSet, scenario: Scenario, beta: np.ndarray,
                          requesting=None, initial: Matching | None = None) -> Matching:
    """One-to-one association; each matched user gets the whole RIS."""
    beta = np.asarray(beta, dtype=float)
    if requesting is None:
        requesting = requesting_users(channels, scenario, beta)
    prefs = preference_data(channels, scenario, requesting, beta)
    trace: list[dict] = []
    pairs, proposals, rounds = deferred_acceptance(
        prefs, initial.pairs() if initial is not None else None, trace)
    elements = tuple(len(g) for g in channels.ris_bs)
    assignment = {m: (k, 0, elements[k]) for m, k in pairs.items()}
    return Matching(assignment, elements, frozenset(requesting), "one_to_one",
                    proposals, rounds, trace)


def elements_needed(channels: ChannelSet, m: int, k: int, beta_m: float, scenario: Scenario,
                    start: int = 0, stop: int | None = None, method: str = "binary") -> int:
    """Fewest elements, counted from ``start`` in index order, lifting user ``m`` to the threshold.

    Returns 0 if the direct link already suffices and ``INFEASIBLE`` if all
    elements up to ``stop`` fall short.  ``method`` picks a binary search
    over the prefix sums or a plain linear scan; both give the same count.
    """
    need = required_amplitude(channels, m, beta_m, scenario)
    if need <= 0.0:
        return 0
    amp = channels.cascade_amplitudes(m, k)[start:stop]
    if method == "linear":
        acc = 0.0
        for i, a in enumerate(amp):
            acc += a
            if acc >= need:
                return i + 1
        return INFEASIBLE
    if method != "binary":
        raise ValueError(f"unknown method {method!r}")
    return _fit_count(np.cumsum(amp), need)


def required_amplitude(channels: ChannelSet, m: int, beta_m: float, scenario: Scenario) -> float:
    """Reflected amplitude still needed on top of ``|h_d|`` to reach the threshold."""
    target = math.sqrt(scenario.snr_threshold / _scale(scenario, beta_m)) * (1.0 + _THRESHOLD_MARGIN)
    return target - abs(channels.direct[m])


def _fit_count(prefix: np.ndarray, need: float) -> int:
    if need <= 0.0:
        return 0
    if len(prefix) == 0 or prefix[-1] < need:
        return INFEASIBLE
    return int(np.searchsorted(prefix, need, side="left")) + 1


def _free_gaps(ranges: list[tuple[int, int]], n_total: int) -> list[tuple[int, int]]:
    gaps, pos = [], 0
    for a, b in sorted(ranges):
        if a > pos:
            gaps.append((pos, a))
        pos = max(pos, b)
    if pos < n_total:
        gaps.append((pos, n_total))
    return gaps


class _ManyState:
    """Book-keeping for the one-to-many game."""

    def __init__(self, channels: ChannelSet, scenario: Scenario, beta: np.ndarray, users):
        self.channels = channels
        self.elements = tuple(len(g) for g in channels.ris_bs)
        self.amp = {(m, k): channels.cascade_amplitudes(m, k)
                    for m in users for k in range(len(self.elements))}
        self.need = {m: required_amplitude(channels, m, beta[m], scenario) for m in users}
        self.n_full = {(m, k): _fit_count(np.cumsum(self.amp[m, k]), self.need[m])
                       for m in users for k in range(len(self.elements))}
        self.assignment: dict[int, tuple[int, int, int]] = {}

    def ranges(self, k: int, skip: int | None = None) -> list[tuple[int, int]]:
        return [(a, b) for m, (kk, a, b) in self.assignment.items() if kk == k and m != skip]

    def first_fit(self, m: int, k: int, skip: int | None = None) -> tuple[int, int] | None:
        for a, b in _free_gaps(self.ranges(k, skip), self.elements[k]):
            n = _fit_count(np.cumsum(self.amp[m, k][a:b]), self.need[m])
            if n != INFEASIBLE:
                return a, a + n
        return None

    def rank_key(self, k: int, m: int) -> tuple[int, int]:
        """RIS-side key, smaller is better: fewer elements needed, then lower index."""
        return self.n_full[m, k], m

    def user_score(self, m: int, k: int) -> float:
        """Sum of |h_{m,k}| over the RIS's currently unoccupied elements."""
        free = np.ones(self.elements[k], dtype=bool)
        for a, b in self.ranges(k):
            free[a:b] = False
        return float(np.sum(np.abs(self.channels.user_ris[k][m][free])))


def algorithm2_one_to_many(channels: ChannelSet, scenario: Scenario, beta: np.ndarray,
                           requesting=None, initial: Matching | None = None,
                           max_rounds: int | None = None) -> Matching:
    """One-to-many association with element budgets.

    A user proposes to its best RIS by free-element channel strength.  The
    RIS accepts when a free contiguous element range (first fit, index
    order) lifts the user to the threshold.  Otherwise it may displace one
    occupant ranked below the proposer, so the number of served users never
    drops; the RIS ranks users by the element count they need.  A rejected
    user re-proposes to an RIS only after that RIS's occupancy changed.  A
    displaced user may propose again straight away: the proposer can land in
    a different gap and leave room for it.
    """
    beta = np.asarray(beta, dtype=float)
    if requesting is None:
        requesting = requesting_users(channels, scenario, beta)
    users = sorted(requesting)
    K = channels.num_ris
    st = _ManyState(channels, scenario, beta, users)
    if initial is not None:
        st.assignment.update(initial.assignment)
    version = [0] * K
    rejected: dict[tuple[int, int], int] = {}
    trace: list[dict] = []
    proposals = rounds = 0
    limit = max_rounds if max_rounds is not None else 10 * (len(users) * K + 1) ** 2

    while True:
        unmatched = [m for m in users if m not in st.assignment]
        lists = {m: sorted(range(K), key=lambda k: (-st.user_score(m, k), k)) for m in unmatched}
        made = 0
        for m in unmatched:
            if m in st.assignment:
                continue
            target = next((k for k in lists[m]
                           if st.n_full[m, k] != INFEASIBLE and rejected.get((m, k)) != version[k]),
                          None)
            if target is None:
                continue
            k = target
            made += 1
            proposals += 1
            event = {"round": rounds + 1, "user": m, "ris": k, "accepted": False, "displaced": None}
            slot = st.first_fit(m, k)
            if slot is None:
                mine = st.rank_key(k, m)
                worse = sorted((o for o in st.assignment if st.assignment[o][0] == k
                                and st.rank_key(k, o) > mine),
                               key=lambda o: st.rank_key(k, o), reverse=True)
                for o in worse:
                    slot = st.first_fit(m, k, skip=o)
                    if slot is not None:
                        del st.assignment[o]
                        event["displaced"] = o
                        break
            if slot is None:
                rejected[m, k] = version[k]
            else:
                st.assignment[m] = (k, slot[0], slot[1])
                version[k] += 1
                event["accepted"] = True
            trace.append(event)
        if made == 0:
            break
        rounds += 1
        if rounds > limit:
            raise RuntimeError("one-to-many association did not settle")
    return Matching(dict(st.assignment), st.elements, frozenset(requesting), "one_to_many",
                    proposals, rounds, trace)


def associate(channels: ChannelSet, scenario: Scenario, beta: np.ndarray) -> Matching:
    """Pick the one-to-one game when RISs suffice for the requesting set, else one-to-many."""
    beta = np.asarray(beta, dtype=float)
    requesting = requesting_users(channels, scenario, beta)
    elements = tuple(len(g) for g in channels.ris_bs)
    if not requesting or channels.num_ris == 0:
        return Matching({}, elements, requesting, "none")
    if len(requesting) <= channels.num_ris:
        return algorithm1_one_to_one(channels, scenario, beta, requesting)
    return algorithm2_one_to_many(channels, scenario, beta, requesting)


def random_association(channels: ChannelSet, participants, rng: np.random.Generator) -> Matching:
    """Benchmark: random users get whole RISs, one user per RIS."""
    elements = tuple(len(g) for g in channels.ris_bs)
    users = np.array(sorted(participants), dtype=int)
    rng.shuffle(users)
    ris = rng.permutation(len(elements))
    count = min(len(users), len(elements))
    assignment = {int(users[i]): (int(ris[i]), 0, elements[ris[i]]) for i in range(count)}
    return Matching(assignment, elements, frozenset(), "random")
