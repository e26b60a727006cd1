"""Trajectory selection heuristics and reviewer-facing inspection cases.

Two rankings drive the review loop: states where the learned policy picks a
rarely-observed, more aggressive action than usual care, and initial states
where simulated outcomes beat the observed ones by the widest margin. Each
ranked item can be expanded into a case that pairs the actual trajectory
with roll-outs for side-by-side review and carries reviewer annotations.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from .discretize import ActionGrid, DiscreteTrajectory, action_bins
from .mdp import BehaviorPolicy, TransitionModel
from .planner import TargetPolicy
from .rollout import DEFAULT_N_ROLLOUTS, SimTrajectory, batch
from .seeding import substream_seed

DEFAULT_FREQ_THRESHOLD = 0.01

KIND_TREATMENT = "treatment"
KIND_OUTCOME = "outcome"

VERDICTS = ("plausible", "suspicious", "implausible")


class InspectionError(ValueError):
    """Invalid heuristic or case input."""


@dataclass(frozen=True)
class TreatmentSurprise:
    """A state where the learned policy's action is rare and more aggressive."""

    state: int
    rl_action: int
    rl_action_freq: float
    rl_action_count: int
    common_action: int
    common_action_freq: float
    common_action_count: int
    aggressiveness: int
    state_visits: int


@dataclass(frozen=True)
class OutcomeSurprise:
    """An initial state where roll-outs outscore the observed outcomes."""

    initial_state: int
    mean_rollout_reward: float
    observed_mean_reward: float
    gap: float
    n_trajectories: int


@dataclass(frozen=True)
class OutcomeRanking:
    entries: tuple[OutcomeSurprise, ...]
    skipped_trajectories: int


@dataclass(frozen=True)
class Annotation:
    timestamp: str
    author: str
    text: str
    verdict: str

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise InspectionError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")


@dataclass(frozen=True)
class InspectionCase:
    """A flagged anchor with its roll-outs and the review trail."""

    case_id: str
    kind: str
    trajectory_id: str
    step_index: int
    anchor_state: int
    rollouts: tuple[SimTrajectory, ...]
    annotations: tuple[Annotation, ...] = ()
    seed: int = 0


def aggressiveness_delta(rl_action: int, common_action: int) -> int:
    """Bin-sum difference: positive means more fluid+vaso than usual care."""
    rf, rv = action_bins(rl_action)
    cf, cv = action_bins(common_action)
    return (rf + rv) - (cf + cv)


def surprising_treatments(
    bp: BehaviorPolicy,
    tp: TargetPolicy,
    grid: ActionGrid,
    freq_threshold: float = DEFAULT_FREQ_THRESHOLD,
) -> list[TreatmentSurprise]:
    """States where the policy's action is observed at most ``freq_threshold``
    of the time and is more aggressive than the modal clinician action.

    Ranked ascending by the policy action's observed frequency, ties broken
    by higher visit count. Fallback (no-treatment) states are excluded.
    """
    out = []
    for state in bp.visited_states():
        if state >= tp.n_states or tp.is_fallback(state):
            continue
        rl_action = tp.action(state)
        rl_freq = bp.action_freq(state, rl_action)
        if rl_freq > freq_threshold:
            continue
        common = bp.modal_action(state)
        delta = aggressiveness_delta(rl_action, common)
        if delta <= 0:
            continue
        out.append(
            TreatmentSurprise(
                state=state,
                rl_action=rl_action,
                rl_action_freq=rl_freq,
                rl_action_count=bp.action_count(state, rl_action),
                common_action=common,
                common_action_freq=bp.action_freq(state, common),
                common_action_count=bp.action_count(state, common),
                aggressiveness=delta,
                state_visits=bp.state_visits(state),
            )
        )
    out.sort(key=lambda ts: (ts.rl_action_freq, -ts.state_visits, ts.state))
    return out


def surprising_outcomes(
    test_trajs: list[DiscreteTrajectory],
    m: TransitionModel,
    tp: TargetPolicy,
    n_rollouts: int = DEFAULT_N_ROLLOUTS,
    seed: int = 0,
) -> OutcomeRanking:
    """Initial states ranked by mean roll-out reward minus observed reward.

    Per test trajectory, ``n_rollouts`` roll-outs start from its initial
    state under the target policy; truncated or dead-end roll-outs
    contribute reward 0. Trajectories whose initial state has no usable
    policy row (and label-less censored-mode trajectories) are skipped and
    counted.
    """
    if n_rollouts < 1:
        raise InspectionError("n_rollouts must be >= 1")
    per_state: dict[int, list[tuple[float, float]]] = {}
    skipped = 0
    for idx, traj in enumerate(test_trajs):
        s0 = traj.initial_state
        if traj.reward is None or not m.has_row(s0, tp.action(s0)):
            skipped += 1
            continue
        rollouts = batch(
            m, tp, [(s0, n_rollouts)], seed=substream_seed(seed, idx), policy_tag="target"
        )
        mean_sim = sum(r.reward or 0.0 for r in rollouts) / n_rollouts
        per_state.setdefault(s0, []).append((mean_sim, traj.reward))

    entries = []
    for s0, pairs in per_state.items():
        mean_rollout = sum(sim for sim, _ in pairs) / len(pairs)
        mean_observed = sum(obs for _, obs in pairs) / len(pairs)
        entries.append(
            OutcomeSurprise(
                initial_state=s0,
                mean_rollout_reward=mean_rollout,
                observed_mean_reward=mean_observed,
                gap=mean_rollout - mean_observed,
                n_trajectories=len(pairs),
            )
        )
    entries.sort(key=lambda os: (-os.gap, -os.n_trajectories, os.initial_state))
    return OutcomeRanking(entries=tuple(entries), skipped_trajectories=skipped)


def case_id_for(kind: str, trajectory_id: str, step_index: int) -> str:
    """Deterministic, filesystem-safe case identifier."""
    stem = re.sub(r"[^A-Za-z0-9_-]+", "_", trajectory_id)[:40]
    digest = hashlib.sha256(f"{kind}\x1f{trajectory_id}\x1f{step_index}".encode()).hexdigest()[:8]
    return f"{kind}-{stem}-{step_index}-{digest}"


def build_case(
    kind: str,
    trajectory: DiscreteTrajectory,
    step_index: int,
    m: TransitionModel,
    tp: TargetPolicy,
    n_rollouts: int = DEFAULT_N_ROLLOUTS,
    seed: int = 0,
    flagged_state: int | None = None,
) -> InspectionCase:
    """Assemble a case: roll-outs from the anchored step under the policy.

    Treatment cases anchor at the step where the flagged state occurred;
    outcome cases anchor at the trajectory start (step 0).
    """
    if kind not in (KIND_TREATMENT, KIND_OUTCOME):
        raise InspectionError(f"unknown case kind {kind!r}")
    if kind == KIND_OUTCOME and step_index != 0:
        raise InspectionError("outcome cases anchor at step 0")
    if not 0 <= step_index < len(trajectory.steps):
        raise InspectionError(
            f"step index {step_index} outside trajectory of length {len(trajectory.steps)}"
        )
    anchor_state = trajectory.steps[step_index][0]
    if flagged_state is not None and flagged_state != anchor_state:
        raise InspectionError(
            f"anchored step has state {anchor_state}, expected flagged state {flagged_state}"
        )
    rollouts = batch(m, tp, [(anchor_state, n_rollouts)], seed=seed, policy_tag="target")
    return InspectionCase(
        case_id=case_id_for(kind, trajectory.id, step_index),
        kind=kind,
        trajectory_id=trajectory.id,
        step_index=step_index,
        anchor_state=anchor_state,
        rollouts=tuple(rollouts),
        seed=seed,
    )


def extend_case(
    case: InspectionCase,
    m: TransitionModel,
    tp: TargetPolicy,
    n_rollouts: int,
    seed: int,
) -> InspectionCase:
    """Append freshly seeded roll-outs to an existing case."""
    extra = batch(m, tp, [(case.anchor_state, n_rollouts)], seed=seed, policy_tag="target")
    return replace(case, rollouts=case.rollouts + tuple(extra))


def annotate(
    case: InspectionCase,
    author: str,
    text: str,
    verdict: str,
    timestamp: str | None = None,
) -> InspectionCase:
    """Append an annotation (append-only; insertion order is preserved)."""
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat()
    note = Annotation(timestamp=timestamp, author=author, text=text, verdict=verdict)
    return replace(case, annotations=case.annotations + (note,))


def earliest_anchor(traj: DiscreteTrajectory, state: int) -> int:
    """First step index at which ``state`` occurs in the trajectory."""
    for i, (s, _) in enumerate(traj.steps):
        if s == state:
            return i
    raise InspectionError(f"trajectory {traj.id!r} never visits state {state}")
