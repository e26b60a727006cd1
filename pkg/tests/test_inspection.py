from __future__ import annotations

import numpy as np
import pytest

from trajscope.discretize import SURV, ActionGrid
from trajscope.inspection import (
    InspectionError,
    annotate,
    build_case,
    case_id_for,
    earliest_anchor,
    extend_case,
    surprising_outcomes,
    surprising_treatments,
)
from trajscope.mdp import estimate
from trajscope.planner import TargetPolicy, solve

from conftest import model_from_counts, traj


GRID = ActionGrid(
    fluid_edges=(10.0, 20.0, 30.0),
    vaso_edges=(0.1, 0.2, 0.3),
    fluid_large_threshold=20.0,
    vaso_large_threshold=0.2,
)


def hand_policy(actions: list[int], fallback: list[bool] | None = None) -> TargetPolicy:
    n = len(actions)
    return TargetPolicy(
        actions=np.array(actions, dtype=np.int64),
        values=np.zeros(n),
        fallback=np.array(fallback or [False] * n, dtype=bool),
        gamma=0.99,
        tol=1e-6,
        sweeps_used=1,
    )


def behavior_from_counts(per_state: dict[int, dict[int, int]]):
    """Single-step survivor trajectories realizing exact support counts."""
    trajs = []
    i = 0
    for state, actions in per_state.items():
        for action, count in actions.items():
            for _ in range(count):
                trajs.append(traj(f"b{i}", [(state, action)], SURV))
                i += 1
    _, bp, _ = estimate(trajs, min_count=1)
    return bp


class TestSurprisingTreatments:
    def make_paper_like_state(self):
        # One state observed 632 times; the policy's pick (a rare, aggressive
        # cell) was chosen 6 times, the modal conservative cell 161 times.
        counts = {0: {6: 161, 18: 6, 1: 116, 2: 116, 5: 116, 7: 117}}
        assert sum(counts[0].values()) == 632
        bp = behavior_from_counts(counts)
        tp = hand_policy([18])
        return bp, tp

    def test_paper_like_state_flagged_with_exact_frequencies(self):
        bp, tp = self.make_paper_like_state()
        (hit,) = surprising_treatments(bp, tp, GRID)
        assert hit.state == 0
        assert hit.rl_action == 18 and hit.common_action == 6
        assert hit.rl_action_count == 6 and hit.common_action_count == 161
        assert hit.state_visits == 632
        assert abs(hit.rl_action_freq - 6 / 632) < 1e-15
        assert abs(hit.common_action_freq - 161 / 632) < 1e-15
        # Bin sums: action 18 = (3, 3), action 6 = (1, 1).
        assert hit.aggressiveness == 4

    def test_common_equals_rl_excluded(self):
        bp = behavior_from_counts({0: {6: 100, 7: 2}})
        tp = hand_policy([6])
        assert surprising_treatments(bp, tp, GRID) == []

    def test_threshold_boundary_included(self):
        bp = behavior_from_counts({0: {0: 99, 18: 1}})  # exactly 1%
        tp = hand_policy([18])
        (hit,) = surprising_treatments(bp, tp, GRID, freq_threshold=0.01)
        assert hit.rl_action_freq == pytest.approx(0.01, abs=0)

    def test_rare_but_less_aggressive_excluded(self):
        bp = behavior_from_counts({0: {18: 99, 0: 1}})
        tp = hand_policy([0])  # rarely-seen but *less* aggressive than modal
        assert surprising_treatments(bp, tp, GRID) == []

    def test_fallback_states_excluded(self):
        bp = behavior_from_counts({0: {6: 99, 18: 1}})
        tp = hand_policy([18], fallback=[True])
        assert surprising_treatments(bp, tp, GRID) == []

    def test_unseen_rl_action_has_zero_freq_and_ranks_first(self):
        bp = behavior_from_counts(
            {0: {6: 50, 18: 1}, 1: {6: 200}, 2: {0: 400, 24: 4}, 3: {6: 50}}
        )
        tp = hand_policy([18, 18, 24, 24])
        hits = surprising_treatments(bp, tp, GRID)
        # State 0's policy action sits above 1%; zero-frequency states rank
        # first, larger visit counts breaking the tie.
        assert [h.state for h in hits] == [1, 3, 2]
        assert hits[0].rl_action_freq == 0.0
        assert hits[0].rl_action_count == 0

    def test_modal_at_least_as_frequent(self):
        bp = behavior_from_counts({0: {6: 30, 18: 2, 3: 29}, 1: {0: 70, 12: 1}})
        tp = hand_policy([18, 12])
        for hit in surprising_treatments(bp, tp, GRID, freq_threshold=0.2):
            assert hit.common_action_count >= hit.rl_action_count


class TestSurprisingOutcomes:
    def test_mortality_observed_but_rollouts_survive(self):
        # All policy-action mass goes straight to survival, while the actual
        # outcome was mortality: gap is exactly +200 and ranks first.
        rows = {
            (0, 0): {2: 50},          # state 0, action 0 -> SURV (code 2)
            (1, 0): {2: 25, 3: 25},   # state 1 mixes
        }
        m, _, r = model_from_counts(rows, n_states=2, min_count=1)
        tp = solve(m, r)
        test_trajs = [
            traj("dead", [(0, 0)], "DEATH"),
            traj("alive", [(1, 0)], SURV),
        ]
        ranking = surprising_outcomes(test_trajs, m, tp, n_rollouts=5, seed=3)
        top = ranking.entries[0]
        assert top.initial_state == 0
        assert top.gap == 200.0
        assert top.mean_rollout_reward == 100.0
        assert top.observed_mean_reward == -100.0

    def test_agreeing_outcomes_gap_zero(self):
        m, _, r = model_from_counts({(0, 0): {1: 50}}, n_states=1, min_count=1)
        tp = solve(m, r)
        ranking = surprising_outcomes([traj("a", [(0, 0)], SURV)], m, tp, seed=1)
        assert ranking.entries[0].gap == 0.0

    def test_gap_matches_expected_absorption(self):
        # Row absorbs immediately: 70% survival / 30% death, so a roll-out's
        # expected reward is 40 and the expected gap vs mortality is 140.
        rows = {(0, 0): {1: 70, 2: 30}}
        m, _, r = model_from_counts(rows, n_states=1, min_count=1)
        tp = solve(m, r)
        test_trajs = [traj(f"t{i}", [(0, 0)], "DEATH") for i in range(500)]
        ranking = surprising_outcomes(test_trajs, m, tp, n_rollouts=5, seed=9)
        entry = ranking.entries[0]
        sigma = np.sqrt(10_000 - 40.0**2) / np.sqrt(5 * 500)
        assert abs(entry.gap - 140.0) < 3 * sigma
        assert entry.n_trajectories == 500

    def test_per_state_average_bookkeeping(self):
        rows = {(0, 0): {1: 10}}
        m, _, r = model_from_counts(rows, n_states=1, min_count=1)
        tp = solve(m, r)
        test_trajs = [
            traj("a", [(0, 0)], SURV),
            traj("b", [(0, 0)], "DEATH"),
            traj("c", [(0, 0)], "DEATH"),
        ]
        ranking = surprising_outcomes(test_trajs, m, tp, n_rollouts=2, seed=0)
        entry = ranking.entries[0]
        assert entry.n_trajectories == 3
        # Roll-outs all hit SURV; observed mean is (100 - 100 - 100) / 3.
        assert entry.observed_mean_reward == pytest.approx(-100 / 3)
        assert entry.gap == pytest.approx(100 + 100 / 3)

    def test_skips_states_without_policy_rows(self):
        rows = {(0, 0): {2: 10}}
        m, _, r = model_from_counts(rows, n_states=2, min_count=1)
        tp = solve(m, r)  # state 1 is fallback; (1, 0) has no row
        ranking = surprising_outcomes(
            [traj("a", [(0, 0)], SURV), traj("b", [(1, 0)], SURV)], m, tp, seed=2
        )
        assert ranking.skipped_trajectories == 1
        assert len(ranking.entries) == 1

    def test_deterministic(self):
        rows = {(0, 0): {0: 30, 1: 10, 2: 10}}
        m, _, r = model_from_counts(rows, n_states=1, min_count=1)
        tp = solve(m, r)
        trajs = [traj(f"t{i}", [(0, 0)], SURV) for i in range(10)]
        a = surprising_outcomes(trajs, m, tp, seed=5)
        b = surprising_outcomes(trajs, m, tp, seed=5)
        assert a == b


class TestCases:
    @pytest.fixture
    def setup(self):
        rows = {(0, 0): {1: 20, 2: 5}, (1, 0): {2: 25}}
        m, _, r = model_from_counts(rows, n_states=2, min_count=1)
        tp = solve(m, r)
        trajectory = traj("p1", [(0, 0), (1, 0), (0, 0)], SURV)
        return m, tp, trajectory

    def test_treatment_case_anchors_mid_trajectory(self, setup):
        m, tp, trajectory = setup
        case = build_case("treatment", trajectory, 1, m, tp, n_rollouts=5, seed=7)
        assert case.anchor_state == 1
        assert all(r.start_state == 1 for r in case.rollouts)
        assert len(case.rollouts) == 5

    def test_outcome_case_anchors_at_start(self, setup):
        m, tp, trajectory = setup
        case = build_case("outcome", trajectory, 0, m, tp, seed=7)
        assert case.anchor_state == trajectory.steps[0][0]

    def test_same_seed_same_rollouts(self, setup):
        m, tp, trajectory = setup
        a = build_case("treatment", trajectory, 1, m, tp, seed=13)
        b = build_case("treatment", trajectory, 1, m, tp, seed=13)
        assert a.rollouts == b.rollouts
        assert a.case_id == b.case_id

    def test_anchor_state_mismatch_rejected(self, setup):
        m, tp, trajectory = setup
        with pytest.raises(InspectionError, match="flagged state"):
            build_case("treatment", trajectory, 1, m, tp, flagged_state=0)

    def test_outcome_case_must_anchor_at_zero(self, setup):
        m, tp, trajectory = setup
        with pytest.raises(InspectionError):
            build_case("outcome", trajectory, 1, m, tp)

    def test_extend_appends(self, setup):
        m, tp, trajectory = setup
        case = build_case("treatment", trajectory, 1, m, tp, n_rollouts=5, seed=1)
        bigger = extend_case(case, m, tp, n_rollouts=5, seed=2)
        assert len(bigger.rollouts) == 10
        assert bigger.rollouts[:5] == case.rollouts

    def test_earliest_anchor(self, setup):
        _, _, trajectory = setup
        assert earliest_anchor(trajectory, 0) == 0
        assert earliest_anchor(trajectory, 1) == 1
        with pytest.raises(InspectionError):
            earliest_anchor(trajectory, 9)

    def test_case_id_is_filesystem_safe(self):
        cid = case_id_for("treatment", "weird/id with spaces", 3)
        assert "/" not in cid and " " not in cid


class TestAnnotate:
    @pytest.fixture
    def case(self):
        rows = {(0, 0): {1: 10}}
        m, _, r = model_from_counts(rows, n_states=1, min_count=1)
        tp = solve(m, r)
        return build_case("outcome", traj("p", [(0, 0)], SURV), 0, m, tp, seed=0)

    def test_first_annotation(self, case):
        updated = annotate(case, "reviewer", "looks off", "suspicious")
        assert len(updated.annotations) == 1
        assert updated.annotations[0].author == "reviewer"
        assert case.annotations == ()  # original untouched

    def test_insertion_order_preserved(self, case):
        c = annotate(case, "a", "first", "plausible", timestamp="2026-01-01T00:00:00")
        c = annotate(c, "b", "second", "implausible", timestamp="2026-01-02T00:00:00")
        assert [a.text for a in c.annotations] == ["first", "second"]

    def test_unknown_verdict_rejected(self, case):
        with pytest.raises(InspectionError):
            annotate(case, "a", "t", "fine")
