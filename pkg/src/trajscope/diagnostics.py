"""Aggregate bias diagnostics over a fitted study.

Four reports generalize what case-by-case inspection surfaces: trajectory
length mismatch between training data and behavior-policy roll-outs,
per-step termination-probability bias with bootstrap intervals, statistics
over the states whose recommended action is rarest, and how often survivors
are discharged while still on vasopressors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cohort import MAX_STEPS
from .discretize import SURV, ActionGrid, DiscreteTrajectory, action_bins
from .mdp import BehaviorPolicy, TransitionModel
from .planner import TargetPolicy
from .rollout import DEAD_END, SimTrajectory, batch
from .seeding import rng_for

DEFAULT_N_BOOT = 1000
DEFAULT_CONFIDENCE = 0.95
DEFAULT_TOP_N = 100


def report_dict(report) -> dict:
    """Report as plain JSON types (the bundle and API wire form)."""
    def convert(value):
        if isinstance(value, tuple):
            return [convert(v) for v in value]
        if isinstance(value, dict):
            return {k: convert(v) for k, v in value.items()}
        if hasattr(value, "__dataclass_fields__"):
            return {k: convert(getattr(value, k)) for k in value.__dataclass_fields__}
        return value

    return convert(report)


@dataclass(frozen=True)
class LengthReport:
    """Histogram comparison of training vs roll-out trajectory lengths."""

    train_histogram: tuple[int, ...]
    rollout_histogram: tuple[int, ...]
    total_variation_distance: float
    censored_fraction_train: float
    n_train: int
    n_rollouts: int
    dead_end_rollouts: int
    max_steps: int


@dataclass(frozen=True)
class StepBias:
    """Actual vs model-predicted termination at one time step."""

    step: int
    n_remaining: int
    actual: float | None
    actual_lo: float | None
    actual_hi: float | None
    predicted: float | None
    predicted_lo: float | None
    predicted_hi: float | None


@dataclass(frozen=True)
class TerminationBiasReport:
    steps: tuple[StepBias, ...]
    overall_prefinal: StepBias
    n_bootstrap: int
    confidence: float
    excluded_observations: int
    max_steps: int


@dataclass(frozen=True)
class RareActionReport:
    """Statistics over the states where the policy action is rarest."""

    top_n: int
    n_states_used: int
    avg_rl_action_freq: float
    avg_rl_action_count: float
    avg_common_action_freq: float
    avg_common_action_count: float
    transition_mass_fraction: float
    common_zero_vaso_count: int
    rl_vaso_count: int
    rl_large_vaso_count: int


@dataclass(frozen=True)
class PopulationDischarge:
    n: int
    frac_nonzero_vaso_at_end: float | None
    frac_large_vaso_at_end: float | None


@dataclass(frozen=True)
class DischargeTreatmentReport:
    train_uncensored_survivors: PopulationDischarge
    train_censored_survivors: PopulationDischarge
    rollout_survivors: PopulationDischarge


def length_report(
    train: list[DiscreteTrajectory],
    m: TransitionModel,
    bp: BehaviorPolicy,
    n_rollouts_per_start: int = 5,
    seed: int = 0,
    max_steps: int = MAX_STEPS,
) -> LengthReport:
    """Compare training lengths with behavior-policy roll-out lengths.

    Roll-outs start from the empirical initial-state distribution: one batch
    per training trajectory's initial state. Dead-end roll-outs are excluded
    from the histogram and counted. Outcome labels are never consulted.
    """
    starts = [(traj.initial_state, n_rollouts_per_start) for traj in train]
    rollouts = batch(m, bp, starts, max_steps=max_steps, seed=seed, policy_tag="behavior")

    train_hist = np.zeros(max_steps, dtype=np.int64)
    for traj in train:
        train_hist[min(len(traj.steps), max_steps) - 1] += 1
    roll_hist = np.zeros(max_steps, dtype=np.int64)
    dead_ends = 0
    for sim in rollouts:
        if sim.terminal == DEAD_END:
            dead_ends += 1
        else:
            roll_hist[len(sim.steps) - 1] += 1

    tv = _tv_distance(train_hist, roll_hist)
    censored = sum(1 for t in train if t.censored) / len(train) if train else 0.0
    return LengthReport(
        train_histogram=tuple(int(c) for c in train_hist),
        rollout_histogram=tuple(int(c) for c in roll_hist),
        total_variation_distance=tv,
        censored_fraction_train=censored,
        n_train=len(train),
        n_rollouts=len(rollouts),
        dead_end_rollouts=dead_ends,
        max_steps=max_steps,
    )


def _tv_distance(a: np.ndarray, b: np.ndarray) -> float:
    if a.sum() == 0 or b.sum() == 0:
        return 0.0
    p = a / a.sum()
    q = b / b.sum()
    return float(0.5 * np.abs(p - q).sum())


def termination_bias(
    m: TransitionModel,
    trajs: list[DiscreteTrajectory],
    n_bootstrap: int = DEFAULT_N_BOOT,
    seed: int = 0,
    confidence: float = DEFAULT_CONFIDENCE,
    max_steps: int = MAX_STEPS,
) -> TerminationBiasReport:
    """Actual vs predicted immediate-termination probability per step.

    At step t the risk set is every trajectory alive at t; a trajectory
    terminates there when it ends at t with an absorbing transition.
    Predicted is the model's termination probability at the observed
    (state, action). Bootstrap resamples whole trajectories.
    """
    n = len(trajs)
    if n == 0:
        raise ValueError("no trajectories")
    lengths = np.array([min(len(t.steps), max_steps) for t in trajs], dtype=np.int64)
    terminated = np.array([t.terminal is not None for t in trajs], dtype=float)

    pred = np.full((n, max_steps), np.nan)
    excluded = 0
    for i, traj in enumerate(trajs):
        for t, (s, a) in enumerate(traj.steps[:max_steps]):
            row = m.probs.get((s, a))
            if row is None:
                excluded += 1
                continue
            pred[i, t] = row.get(m.surv_state, 0.0) + row.get(m.death_state, 0.0)
    pred_mask = np.isfinite(pred)
    pred_filled = np.where(pred_mask, pred, 0.0)

    def statistics(w: np.ndarray) -> np.ndarray:
        """Per-step actual/predicted plus the pooled pre-final pair."""
        len_w = np.bincount(lengths, weights=w, minlength=max_steps + 1)[1:]
        term_w = np.bincount(lengths, weights=w * terminated, minlength=max_steps + 1)[1:]
        remaining = len_w[::-1].cumsum()[::-1]  # alive at step t = length >= t
        with np.errstate(invalid="ignore", divide="ignore"):
            actual = np.where(remaining > 0, term_w / remaining, np.nan)
        pred_num = w @ pred_filled
        pred_den = w @ pred_mask
        with np.errstate(invalid="ignore", divide="ignore"):
            predicted = np.where(pred_den > 0, pred_num / pred_den, np.nan)
        pre = slice(0, max_steps - 1)
        actual_pre = term_w[pre].sum() / remaining[pre].sum() if remaining[pre].sum() else np.nan
        pred_pre = (
            pred_num[pre].sum() / pred_den[pre].sum() if pred_den[pre].sum() else np.nan
        )
        return np.concatenate([actual, predicted, [actual_pre, pred_pre]])

    ones = np.ones(n)
    point = statistics(ones)

    rng = rng_for(seed)
    boots = np.empty((n_bootstrap, len(point)))
    for b in range(n_bootstrap):
        w = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        boots[b] = statistics(w)
    alpha = (1.0 - confidence) / 2.0
    with warnings.catch_warnings():
        # Steps beyond every resample's lengths are all-NaN by design.
        warnings.filterwarnings("ignore", message="All-NaN slice")
        lo = np.nanpercentile(boots, 100 * alpha, axis=0)
        hi = np.nanpercentile(boots, 100 * (1 - alpha), axis=0)

    def val(x: float) -> float | None:
        return None if not np.isfinite(x) else float(x)

    remaining_counts = np.bincount(lengths, minlength=max_steps + 1)[1:][::-1].cumsum()[::-1]
    steps = tuple(
        StepBias(
            step=t + 1,
            n_remaining=int(remaining_counts[t]),
            actual=val(point[t]),
            actual_lo=val(lo[t]),
            actual_hi=val(hi[t]),
            predicted=val(point[max_steps + t]),
            predicted_lo=val(lo[max_steps + t]),
            predicted_hi=val(hi[max_steps + t]),
        )
        for t in range(max_steps)
    )
    overall = StepBias(
        step=0,
        n_remaining=int(remaining_counts[: max_steps - 1].sum()),
        actual=val(point[-2]),
        actual_lo=val(lo[-2]),
        actual_hi=val(hi[-2]),
        predicted=val(point[-1]),
        predicted_lo=val(lo[-1]),
        predicted_hi=val(hi[-1]),
    )
    return TerminationBiasReport(
        steps=steps,
        overall_prefinal=overall,
        n_bootstrap=n_bootstrap,
        confidence=confidence,
        excluded_observations=excluded,
        max_steps=max_steps,
    )


def rare_action_report(
    bp: BehaviorPolicy,
    tp: TargetPolicy,
    grid: ActionGrid,
    top_n: int = DEFAULT_TOP_N,
) -> RareActionReport:
    """Averages over the ``top_n`` states where the policy action is rarest.

    The transition mass fraction is the share of observed decisions that
    originate in those states. Fallback states are excluded; when fewer than
    ``top_n`` states qualify, all of them are used and the actual count is
    reported.
    """
    eligible = []
    for state in bp.visited_states():
        if state >= tp.n_states or tp.is_fallback(state):
            continue
        rl_action = tp.action(state)
        eligible.append(
            (bp.action_freq(state, rl_action), -bp.state_visits(state), state, rl_action)
        )
    eligible.sort()
    chosen = eligible[:top_n]
    n_used = len(chosen)
    if n_used == 0:
        return RareActionReport(
            top_n=top_n, n_states_used=0,
            avg_rl_action_freq=0.0, avg_rl_action_count=0.0,
            avg_common_action_freq=0.0, avg_common_action_count=0.0,
            transition_mass_fraction=0.0,
            common_zero_vaso_count=0, rl_vaso_count=0, rl_large_vaso_count=0,
        )

    total_mass = sum(bp.state_visits(s) for s in bp.visited_states())
    chosen_mass = 0
    rl_freqs, rl_counts, common_freqs, common_counts = [], [], [], []
    common_zero_vaso = rl_vaso = rl_large_vaso = 0
    for rl_freq, neg_visits, state, rl_action in chosen:
        common = bp.modal_action(state)
        rl_freqs.append(rl_freq)
        rl_counts.append(bp.action_count(state, rl_action))
        common_freqs.append(bp.action_freq(state, common))
        common_counts.append(bp.action_count(state, common))
        chosen_mass += -neg_visits
        if action_bins(common)[1] == 0:
            common_zero_vaso += 1
        rl_vaso_bin = action_bins(rl_action)[1]
        if rl_vaso_bin >= 1:
            rl_vaso += 1
        if rl_vaso_bin >= 3:
            rl_large_vaso += 1

    return RareActionReport(
        top_n=top_n,
        n_states_used=n_used,
        avg_rl_action_freq=float(np.mean(rl_freqs)),
        avg_rl_action_count=float(np.mean(rl_counts)),
        avg_common_action_freq=float(np.mean(common_freqs)),
        avg_common_action_count=float(np.mean(common_counts)),
        transition_mass_fraction=chosen_mass / total_mass if total_mass else 0.0,
        common_zero_vaso_count=common_zero_vaso,
        rl_vaso_count=rl_vaso,
        rl_large_vaso_count=rl_large_vaso,
    )


def _discharge_stats(final_vaso_bins: list[int]) -> PopulationDischarge:
    n = len(final_vaso_bins)
    if n == 0:
        return PopulationDischarge(n=0, frac_nonzero_vaso_at_end=None, frac_large_vaso_at_end=None)
    nonzero = sum(1 for b in final_vaso_bins if b >= 1)
    large = sum(1 for b in final_vaso_bins if b >= 3)
    return PopulationDischarge(
        n=n,
        frac_nonzero_vaso_at_end=nonzero / n,
        frac_large_vaso_at_end=large / n,
    )


def discharge_treatment_report(
    train: list[DiscreteTrajectory],
    rollouts: list[SimTrajectory],
    grid: ActionGrid,
) -> DischargeTreatmentReport:
    """Vasopressor use at the final step among survivors, per population.

    Nonzero means the final vaso bin is at least 1; large means above the
    median of nonzero training doses (bins 3-4).
    """
    def final_vaso(steps: tuple[tuple[int, int], ...]) -> int:
        return action_bins(steps[-1][1])[1]

    uncensored = [
        final_vaso(t.steps) for t in train if t.terminal == SURV and not t.censored
    ]
    censored = [final_vaso(t.steps) for t in train if t.terminal == SURV and t.censored]
    sims = [final_vaso(r.steps) for r in rollouts if r.terminal == SURV and r.steps]
    return DischargeTreatmentReport(
        train_uncensored_survivors=_discharge_stats(uncensored),
        train_censored_survivors=_discharge_stats(censored),
        rollout_survivors=_discharge_stats(sims),
    )
