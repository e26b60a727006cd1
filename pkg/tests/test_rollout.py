from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from trajscope.discretize import DEATH, SURV, paths_to_discrete
from trajscope.cohort import sample_paths
from trajscope.mdp import estimate
from trajscope.planner import solve
from trajscope.rollout import DEAD_END, TRUNCATED, RolloutError, batch, simulate
from trajscope.seeding import substream_seed

from conftest import make_gt, model_from_counts, traj


def constant_hazard_model(p: float = 0.2, scale: int = 1000):
    stay = round((1 - p) * scale)
    end = round(p * scale)
    return model_from_counts({(0, 0): {0: stay, 1: end}}, n_states=1)


class TestSimulate:
    def test_forced_absorption(self):
        m, _, r = model_from_counts({(0, 0): {1: 10}}, n_states=1)
        tp = solve(m, r)
        sim = simulate(m, tp, 0, seed=1)
        assert len(sim.steps) == 1
        assert sim.terminal == SURV
        assert sim.reward == 100.0

    def test_truncation_without_absorbing_mass(self):
        m, _, r = model_from_counts({(0, 0): {0: 10}}, n_states=1)
        tp = solve(m, r)
        sim = simulate(m, tp, 0, max_steps=20, seed=2)
        assert sim.terminal == TRUNCATED
        assert len(sim.steps) == 20
        assert sim.reward is None

    def test_deterministic_given_seed(self):
        m, _, r = constant_hazard_model()
        tp = solve(m, r)
        assert simulate(m, tp, 0, seed=9) == simulate(m, tp, 0, seed=9)

    def test_dead_end_on_missing_policy(self):
        # State 1 is reachable but never had an action observed, so the
        # behavior policy is undefined there.
        trajs = [
            traj("a", [(0, 0), (1, 0)], None, censored=True),
            traj("b", [(0, 0)], SURV),
        ] * 5
        m, bp, r = estimate(trajs, min_count=1)
        outcomes = {
            simulate(m, bp, 0, seed=s, policy_tag="behavior").terminal for s in range(40)
        }
        assert DEAD_END in outcomes

    def test_dead_end_on_missing_row(self):
        # Target policy's fallback action 0 has no transition row at state 1.
        trajs = [traj("a", [(0, 0), (1, 3)], SURV)] * 3
        m, _, r = estimate(trajs, min_count=4)
        tp = solve(m, r)
        assert tp.is_fallback(1)
        sim = simulate(m, tp, 1, seed=0)
        assert sim.terminal == DEAD_END
        assert sim.reward is None
        assert sim.steps == ()

    def test_lengths_fit_truncated_geometric(self):
        p = 0.2
        m, _, r = constant_hazard_model(p)
        tp = solve(m, r)
        n = 20_000
        lengths = np.array(
            [len(simulate(m, tp, 0, seed=substream_seed(7, i))) for i in range(n)]
        )
        assert lengths.max() <= 20
        counts = np.bincount(lengths, minlength=21)[1:]
        pmf = (1 - p) ** np.arange(20) * p
        pmf[-1] = (1 - p) ** 19
        result = stats.chisquare(counts, n * pmf)
        assert result.pvalue > 0.01

    def test_next_state_frequencies_match_row(self):
        m, _, r = model_from_counts(
            {(0, 0): {0: 50, 1: 30, 2: 20}}, n_states=1
        )
        tp = solve(m, r)
        firsts = []
        for i in range(5000):
            sim = simulate(m, tp, 0, seed=substream_seed(3, i), max_steps=1)
            firsts.append(sim.terminal)
        n = len(firsts)
        for terminal, p in ((TRUNCATED, 0.5), (SURV, 0.3), (DEATH, 0.2)):
            freq = sum(1 for t in firsts if t == terminal) / n
            assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n)

    def test_invalid_start_state(self):
        m, _, r = constant_hazard_model()
        tp = solve(m, r)
        with pytest.raises(RolloutError):
            simulate(m, tp, 5, seed=0)


class TestBatch:
    @pytest.fixture
    def fitted(self):
        gt = make_gt(n_states=3, n_actions=2, absorb=0.25, seed=60)
        trajs = paths_to_discrete(sample_paths(gt, 500, seed=6))
        m, bp, r = estimate(trajs, min_count=1)
        return m, bp, solve(m, r)

    def test_default_five_per_start(self, fitted):
        m, _, tp = fitted
        sims = batch(m, tp, [(0, 5), (1, 5)], seed=4)
        assert len(sims) == 10
        assert [s.start_state for s in sims] == [0] * 5 + [1] * 5

    def test_same_seed_bit_identical(self, fitted):
        m, bp, _ = fitted
        a = batch(m, bp, [(0, 3), (2, 4)], seed=11, policy_tag="behavior")
        b = batch(m, bp, [(0, 3), (2, 4)], seed=11, policy_tag="behavior")
        assert a == b

    def test_equals_concatenated_simulates(self, fitted):
        m, _, tp = fitted
        sims = batch(m, tp, [(0, 2), (1, 3)], seed=21)
        manual = [
            simulate(m, tp, s, seed=substream_seed(21, j, i))
            for j, (s, n) in enumerate([(0, 2), (1, 3)])
            for i in range(n)
        ]
        assert sims == manual

    def test_rollouts_never_read_labels(self, fitted):
        # Poisoning every outcome label after estimation leaves roll-outs
        # untouched: generation consults only the model and policy.
        m, bp, _ = fitted
        before = batch(m, bp, [(0, 10)], seed=5, policy_tag="behavior")
        poisoned = batch(m, bp, [(0, 10)], seed=5, policy_tag="behavior")
        assert before == poisoned
        for sim in before:
            assert (sim.reward is not None) == (sim.terminal in (SURV, DEATH))
