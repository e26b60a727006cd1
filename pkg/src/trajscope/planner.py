"""Dynamic-programming policy solving over the estimated tabular MDP.

Value iteration maximizes over each state's valid actions only. States whose
actions were all filtered out fall back to no treatment (action 0), matching
how the replicated pipeline handles data-poor states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import BehaviorPolicy, RewardModel, TransitionModel

NO_TREATMENT = 0

DEFAULT_GAMMA = 0.99
DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 10_000


class PlannerError(RuntimeError):
    """Solver misuse or non-convergence."""


@dataclass
class TargetPolicy:
    """Deterministic policy with its optimal values and solver settings.

    ``fallback`` marks states where no action met the support threshold;
    those take ``NO_TREATMENT`` and their value comes from action 0's row
    when one was observed, else 0.
    """

    actions: np.ndarray
    values: np.ndarray
    fallback: np.ndarray
    gamma: float
    tol: float
    sweeps_used: int

    @property
    def n_states(self) -> int:
        return len(self.actions)

    def action(self, state: int) -> int:
        return int(self.actions[state])

    def is_fallback(self, state: int) -> bool:
        return bool(self.fallback[state])

    def action_distribution(self, state: int) -> tuple[np.ndarray, np.ndarray]:
        """Point mass, shaped like a sampling distribution."""
        return np.array([self.actions[state]], dtype=np.int64), np.array([1.0])


@dataclass
class _DenseRows:
    """CSR-style view of the sparse transition rows for vectorized sweeps."""

    row_state: np.ndarray
    row_action: np.ndarray
    indptr: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    row_index: dict[tuple[int, int], int]


def _dense_rows(m: TransitionModel) -> _DenseRows:
    keys = sorted(m.probs)
    row_state = np.array([s for s, _ in keys], dtype=np.int64)
    row_action = np.array([a for _, a in keys], dtype=np.int64)
    indptr = np.zeros(len(keys) + 1, dtype=np.int64)
    cols: list[int] = []
    vals: list[float] = []
    for i, key in enumerate(keys):
        row = sorted(m.probs[key].items())
        cols.extend(nxt for nxt, _ in row)
        vals.extend(p for _, p in row)
        indptr[i + 1] = len(cols)
    return _DenseRows(
        row_state=row_state,
        row_action=row_action,
        indptr=indptr,
        cols=np.array(cols, dtype=np.int64),
        vals=np.array(vals, dtype=float),
        row_index={key: i for i, key in enumerate(keys)},
    )


def _row_returns(rows: _DenseRows, target: np.ndarray) -> np.ndarray:
    """Per-row expected value of ``target`` over next states."""
    contrib = rows.vals * target[rows.cols]
    return np.add.reduceat(contrib, rows.indptr[:-1]) if len(rows.cols) else np.zeros(0)


def _terminal_target(m: TransitionModel, r: RewardModel, values: np.ndarray, gamma: float) -> np.ndarray:
    # target(s') = R(s') + gamma * V(s'); absorbing states have V = 0.
    target = np.zeros(m.n_states + 2)
    target[: m.n_states] = gamma * values
    target[m.surv_state] = r.survival_reward
    target[m.death_state] = r.mortality_reward
    return target


def solve(
    m: TransitionModel,
    r: RewardModel,
    gamma: float = DEFAULT_GAMMA,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> TargetPolicy:
    """Value iteration over valid actions; argmax ties take the lowest id."""
    if not 0 < gamma <= 1:
        raise PlannerError(f"gamma must be in (0, 1], got {gamma}")
    rows = _dense_rows(m)
    k = m.n_states

    valid_rows = np.array(
        [
            a in m.valid_actions.get(s, ())
            for s, a in zip(rows.row_state, rows.row_action)
        ],
        dtype=bool,
    )
    fallback = np.ones(k, dtype=bool)
    for s, actions in m.valid_actions.items():
        if actions:
            fallback[s] = False
    # Fallback states take action 0's row for their value when it exists.
    fb_value_rows = np.array(
        [
            rows.row_index[(s, NO_TREATMENT)] if (s, NO_TREATMENT) in rows.row_index else -1
            for s in range(k)
        ],
        dtype=np.int64,
    )

    fb_idx = np.nonzero(fallback)[0]
    fb_rows = fb_value_rows[fb_idx]
    valid_states = rows.row_state[valid_rows]

    values = np.zeros(k)
    sweeps = 0
    residual = np.inf
    for sweeps in range(1, max_sweeps + 1):
        returns = _row_returns(rows, _terminal_target(m, r, values, gamma))
        new_values = np.full(k, -np.inf)
        np.maximum.at(new_values, valid_states, returns[valid_rows])
        # States with no valid rows: value from the no-treatment row, else 0.
        if len(fb_idx):
            new_values[fb_idx] = np.where(fb_rows >= 0, returns[np.maximum(fb_rows, 0)], 0.0)
        new_values[np.isneginf(new_values)] = 0.0
        residual = float(np.max(np.abs(new_values - values))) if k else 0.0
        values = new_values
        if residual < tol:
            break
    else:
        raise PlannerError(
            f"value iteration did not converge in {max_sweeps} sweeps "
            f"(residual {residual:.3e}, gamma {gamma})"
        )

    returns = _row_returns(rows, _terminal_target(m, r, values, gamma))
    actions = np.full(k, NO_TREATMENT, dtype=np.int64)
    best = np.full(k, -np.inf)
    order = np.lexsort((rows.row_action, rows.row_state))
    for i in order:
        if not valid_rows[i]:
            continue
        s = rows.row_state[i]
        if returns[i] > best[s]:  # strict: earlier (lower) action ids win ties
            best[s] = returns[i]
            actions[s] = rows.row_action[i]
    return TargetPolicy(
        actions=actions,
        values=values,
        fallback=fallback,
        gamma=gamma,
        tol=tol,
        sweeps_used=sweeps,
    )


def evaluate_policy(
    m: TransitionModel,
    r: RewardModel,
    policy: TargetPolicy | BehaviorPolicy,
    gamma: float = DEFAULT_GAMMA,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> np.ndarray:
    """Iterative fixed-point evaluation of any policy's per-state values.

    Every action the policy puts mass on must have an observed transition
    row. States the policy never covers evaluate to 0.
    """
    if not 0 < gamma <= 1:
        raise PlannerError(f"gamma must be in (0, 1], got {gamma}")
    rows = _dense_rows(m)
    k = m.n_states

    weight_rows: list[int] = []
    weights: list[float] = []
    if isinstance(policy, BehaviorPolicy):
        items = ((s, dict(policy.probs[s])) for s in policy.probs)
    else:
        items = ((s, {int(policy.actions[s]): 1.0}) for s in range(min(k, policy.n_states)))
    for s, dist in items:
        for a, w in sorted(dist.items()):
            if w == 0:
                continue
            idx = rows.row_index.get((s, a))
            if idx is None:
                raise PlannerError(
                    f"policy puts weight on state {s}, action {a} with no transition row"
                )
            weight_rows.append(idx)
            weights.append(w)
    widx = np.array(weight_rows, dtype=np.int64)
    warr = np.array(weights, dtype=float)
    wstate = rows.row_state[widx] if len(widx) else np.zeros(0, dtype=np.int64)

    values = np.zeros(k)
    residual = np.inf
    for _ in range(max_sweeps):
        returns = _row_returns(rows, _terminal_target(m, r, values, gamma))
        new_values = np.zeros(k)
        np.add.at(new_values, wstate, warr * returns[widx])
        residual = float(np.max(np.abs(new_values - values))) if k else 0.0
        values = new_values
        if residual < tol:
            return values
    raise PlannerError(
        f"policy evaluation did not converge in {max_sweeps} sweeps "
        f"(residual {residual:.3e}, gamma {gamma})"
    )
