"""Model-based roll-outs: simulated trajectories under a policy.

A roll-out alternates sampling an action from the policy and a next state
from the transition model until it absorbs, hits the step cap, or walks into
a (state, action) pair with no estimated row. The last case aborts with a
``DEAD_END`` marker rather than fabricating mass; dead ends are a
data-sparsity signal the diagnostics consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import MAX_STEPS
from .discretize import DEATH, SURV
from .mdp import BehaviorPolicy, TransitionModel
from .planner import TargetPolicy
from .seeding import substream_seed

TRUNCATED = "TRUNCATED"
DEAD_END = "DEAD_END"

DEFAULT_N_ROLLOUTS = 5

_REWARDS = {SURV: 100.0, DEATH: -100.0}


class RolloutError(ValueError):
    """Invalid roll-out request."""


def _draw(cum: np.ndarray, rng: np.random.Generator) -> int:
    # Inverse-CDF sample; the clamp covers cumulative sums that land a hair
    # below 1 in floating point.
    return min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)


@dataclass(frozen=True)
class SimTrajectory:
    """One simulated trajectory with its seed for exact replay."""

    start_state: int
    steps: tuple[tuple[int, int], ...]
    terminal: str
    reward: float | None
    seed: int
    policy_tag: str

    def __post_init__(self) -> None:
        if self.terminal in _REWARDS:
            if self.reward != _REWARDS[self.terminal]:
                raise RolloutError(f"reward {self.reward} inconsistent with {self.terminal}")
        elif self.terminal in (TRUNCATED, DEAD_END):
            if self.reward is not None:
                raise RolloutError(f"{self.terminal} roll-outs carry no reward")
        else:
            raise RolloutError(f"unknown terminal {self.terminal!r}")

    def __len__(self) -> int:
        return len(self.steps)


def simulate(
    m: TransitionModel,
    policy: TargetPolicy | BehaviorPolicy,
    start_state: int,
    max_steps: int = MAX_STEPS,
    seed: int = 0,
    policy_tag: str = "target",
) -> SimTrajectory:
    """One roll-out from ``start_state``; deterministic given ``seed``.

    Deterministic policies sample through the same inverse-CDF path as
    stochastic ones, so the code path (and stream consumption) is identical.
    """
    if not 0 <= start_state < m.n_states:
        raise RolloutError(f"start_state {start_state} outside [0, {m.n_states})")
    if max_steps < 1:
        raise RolloutError("max_steps must be >= 1")
    rng = np.random.default_rng(seed)
    steps: list[tuple[int, int]] = []
    state = start_state
    terminal = TRUNCATED
    reward: float | None = None
    for _ in range(max_steps):
        dist = policy.action_distribution(state)
        if dist is None:
            terminal = DEAD_END
            break
        actions, cum = dist
        action = int(actions[_draw(cum, rng)])
        if not m.has_row(state, action):
            terminal = DEAD_END
            break
        steps.append((state, action))
        nexts, cum = m.sampling_row(state, action)
        nxt = int(nexts[_draw(cum, rng)])
        if nxt == m.surv_state or nxt == m.death_state:
            terminal = SURV if nxt == m.surv_state else DEATH
            reward = _REWARDS[terminal]
            break
        state = nxt
    return SimTrajectory(
        start_state=start_state,
        steps=tuple(steps),
        terminal=terminal,
        reward=reward,
        seed=seed,
        policy_tag=policy_tag,
    )


def batch(
    m: TransitionModel,
    policy: TargetPolicy | BehaviorPolicy,
    starts: list[tuple[int, int]],
    max_steps: int = MAX_STEPS,
    seed: int = 0,
    policy_tag: str = "target",
) -> list[SimTrajectory]:
    """Roll-outs for each (start_state, n_rollouts) entry.

    Each roll-out runs on the substream keyed by (start index, roll-out
    index), so the batch equals the concatenation of the matching
    ``simulate`` calls and is independent of scheduling order.
    """
    out: list[SimTrajectory] = []
    for j, (state, n_rollouts) in enumerate(starts):
        if n_rollouts < 0:
            raise RolloutError("n_rollouts must be >= 0")
        for r in range(n_rollouts):
            out.append(
                simulate(
                    m,
                    policy,
                    state,
                    max_steps=max_steps,
                    seed=substream_seed(seed, j, r),
                    policy_tag=policy_tag,
                )
            )
    return out
