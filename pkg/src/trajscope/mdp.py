"""Tabular MDP estimation from discrete trajectories.

Transition counts accumulate over all consecutive (state, action, next)
triples plus the terminal (pseudo-)transition where one is present. Rare
(state, action) pairs fall below ``min_count`` and are excluded from
``valid_actions`` for planning, but their counts stay available for
diagnostics. The behavior policy is the raw empirical action frequency per
state, unfiltered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretize import SURV, DiscreteTrajectory

DEFAULT_MIN_COUNT = 5


class MdpError(ValueError):
    """Invalid model inputs or lookups."""


@dataclass(frozen=True)
class RewardModel:
    """Terminal rewards only: +100 survival, -100 mortality, 0 otherwise."""

    survival_reward: float = 100.0
    mortality_reward: float = -100.0
    step_reward: float = 0.0


@dataclass
class TransitionModel:
    """Sparse counts and row-normalized probabilities over (s, a, s').

    Next states are regular ids in [0, n_states) or the absorbing codes
    ``surv_state`` (= n_states) and ``death_state`` (= n_states + 1).
    Immutable after construction.
    """

    n_states: int
    counts: dict[tuple[int, int], dict[int, int]]
    probs: dict[tuple[int, int], dict[int, float]]
    valid_actions: dict[int, tuple[int, ...]]
    min_count: int
    _sampling_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def surv_state(self) -> int:
        return self.n_states

    @property
    def death_state(self) -> int:
        return self.n_states + 1

    def has_row(self, state: int, action: int) -> bool:
        return (state, action) in self.counts

    def row_count(self, state: int, action: int) -> int:
        return sum(self.counts.get((state, action), {}).values())

    def total_transitions(self) -> int:
        return sum(sum(row.values()) for row in self.counts.values())

    def state_transition_count(self, state: int) -> int:
        return sum(
            sum(row.values()) for (s, _), row in self.counts.items() if s == state
        )

    def sampling_row(self, state: int, action: int) -> tuple[np.ndarray, np.ndarray]:
        """(next_states, cumulative probs) for inverse-CDF sampling."""
        key = (state, action)
        cached = self._sampling_cache.get(key)
        if cached is None:
            row = self.probs.get(key)
            if row is None:
                raise MdpError(f"no transition row for state {state}, action {action}")
            items = sorted(row.items())
            nexts = np.array([s for s, _ in items], dtype=np.int64)
            cum = np.cumsum([p for _, p in items])
            cached = self._sampling_cache[key] = (nexts, cum)
        return cached


@dataclass
class BehaviorPolicy:
    """Empirical per-state action frequencies with their raw counts."""

    probs: dict[int, dict[int, float]]
    support_counts: dict[int, dict[int, int]]
    _sampling_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def visited_states(self) -> list[int]:
        return sorted(self.support_counts)

    def state_visits(self, state: int) -> int:
        return sum(self.support_counts.get(state, {}).values())

    def action_count(self, state: int, action: int) -> int:
        return self.support_counts.get(state, {}).get(action, 0)

    def action_freq(self, state: int, action: int) -> float:
        return self.probs.get(state, {}).get(action, 0.0)

    def modal_action(self, state: int) -> int:
        """Most frequent observed action; ties take the lowest action id."""
        counts = self.support_counts.get(state)
        if not counts:
            raise MdpError(f"state {state} has no observed actions")
        return max(sorted(counts), key=lambda a: counts[a])

    def action_distribution(self, state: int) -> tuple[np.ndarray, np.ndarray] | None:
        """(actions, cumulative probs) for sampling; None for unvisited states."""
        cached = self._sampling_cache.get(state)
        if cached is None:
            row = self.probs.get(state)
            if not row:
                return None
            items = sorted(row.items())
            actions = np.array([a for a, _ in items], dtype=np.int64)
            cum = np.cumsum([p for _, p in items])
            cached = self._sampling_cache[state] = (actions, cum)
        return cached


def estimate(
    trajs: list[DiscreteTrajectory],
    min_count: int = DEFAULT_MIN_COUNT,
    n_states: int | None = None,
) -> tuple[TransitionModel, BehaviorPolicy, RewardModel]:
    """Count-based maximum-likelihood estimation, no smoothing.

    The terminal transition of a trajectory counts only when the trajectory
    carries one (``terminal`` not None), so censored-mode trajectories add
    no absorbing mass. ``n_states`` defaults to one past the highest state
    seen; pass the clustering's k so never-visited states keep their ids.
    """
    if not trajs:
        raise MdpError("no trajectories to estimate from")
    if min_count < 1:
        raise MdpError("min_count must be >= 1")
    seen_max = max(s for t in trajs for s, _ in t.steps)
    if n_states is None:
        n_states = 1 + seen_max
    elif n_states <= seen_max:
        raise MdpError(f"n_states={n_states} but state {seen_max} was observed")
    surv, death = n_states, n_states + 1

    counts: dict[tuple[int, int], dict[int, int]] = {}
    support: dict[int, dict[int, int]] = {}
    for traj in trajs:
        steps = traj.steps
        for i, (s, a) in enumerate(steps):
            support.setdefault(s, {})
            support[s][a] = support[s].get(a, 0) + 1
            if i + 1 < len(steps):
                nxt = steps[i + 1][0]
            elif traj.terminal is not None:
                nxt = surv if traj.terminal == SURV else death
            else:
                continue
            row = counts.setdefault((s, a), {})
            row[nxt] = row.get(nxt, 0) + 1

    probs = {
        key: {nxt: c / total for nxt, c in sorted(row.items())}
        for key, row in counts.items()
        for total in (sum(row.values()),)
    }
    valid_lists: dict[int, list[int]] = {}
    for (s, a), row in counts.items():
        if sum(row.values()) >= min_count:
            valid_lists.setdefault(s, []).append(a)
    valid = {s: tuple(sorted(actions)) for s, actions in valid_lists.items()}

    behavior_probs = {
        s: {a: c / total for a, c in sorted(acts.items())}
        for s, acts in support.items()
        for total in (sum(acts.values()),)
    }

    model = TransitionModel(
        n_states=n_states,
        counts=counts,
        probs=probs,
        valid_actions=valid,
        min_count=min_count,
    )
    return model, BehaviorPolicy(probs=behavior_probs, support_counts=support), RewardModel()


def termination_prob(m: TransitionModel, state: int, action: int) -> float:
    """Probability of immediate transition into either absorbing state."""
    row = m.probs.get((state, action))
    if row is None:
        raise MdpError(f"no observations for state {state}, action {action}")
    return row.get(m.surv_state, 0.0) + row.get(m.death_state, 0.0)
