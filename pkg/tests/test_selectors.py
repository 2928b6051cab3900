import math

import numpy as np
import pytest

from gpal.gp import Hyperparameters, kernel_matrix
from gpal.selectors import (
    BudgetExhaustedError,
    Neighborhood,
    OracleError,
    Pool,
    PoolExhaustedError,
    SelectionTrace,
    SelectorConfig,
    SequentialLearner,
    mi_score,
    neighborhood,
    pool_oracle,
    run_active_loop,
    select_alm,
    select_mi,
    select_mi_alk_step,
    select_mi_lk,
)

from .conftest import random_theta
from .oracles import greedy_mi_sequence, naive_conditional_variance, naive_mi_score


def random_pool(rng, n=10, m=2, with_labels=True):
    feats = rng.normal(size=(n, m))
    labels = rng.normal(size=n) if with_labels else None
    return Pool(features=feats, labels=labels)


def frozen_config(strategy, budget, **kw):
    return SelectorConfig(strategy=strategy, budget=budget, refit=False, **kw)


class TestPool:
    def test_validation(self, rng):
        with pytest.raises(ValueError):
            Pool(features=np.zeros((1, 2)))
        bad = rng.normal(size=(3, 2))
        bad[1, 1] = np.nan
        with pytest.raises(ValueError):
            Pool(features=bad)
        with pytest.raises(ValueError):
            Pool(features=rng.normal(size=(3, 2)), ids=("a", "a", "b"))

    def test_default_ids_and_lookup(self, rng):
        pool = random_pool(rng, n=4)
        assert pool.ids == ("0", "1", "2", "3")
        assert pool.index_of("2") == 2
        with pytest.raises(KeyError):
            pool.index_of("nope")


class TestNeighborhood:
    def test_sorted_and_capped(self, rng):
        th = random_theta(rng, 2)
        X = rng.normal(size=(8, 2))
        cov = kernel_matrix(X, th)
        nh = neighborhood(cov, 0, threshold=0.0, cap=3)
        assert len(nh.member_indices) == 3
        ks = [abs(cov[0, j]) for j in nh.member_indices]
        assert ks == sorted(ks, reverse=True)
        assert 0 not in nh.member_indices

    def test_threshold_inclusive(self):
        cov = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.1], [0.2, 0.1, 1.0]])
        nh = neighborhood(cov, 0, threshold=0.5)
        assert nh.member_indices == (1,)  # |K|=0.5 kept by >=
        none = neighborhood(cov, 0, threshold=0.51)
        assert none.member_indices == ()

    def test_cap_monotone(self, rng):
        th = random_theta(rng, 2)
        cov = kernel_matrix(rng.normal(size=(12, 2)), th)
        small = set(neighborhood(cov, 3, 0.0, cap=4).member_indices)
        large = set(neighborhood(cov, 3, 0.0, cap=8).member_indices)
        assert small <= large


class TestSelectAlm:
    def test_empty_set_tie_breaks_to_lowest_index(self, rng):
        pool = random_pool(rng, n=6)
        assert select_alm(pool, [], random_theta(rng, 2)) == 0

    def test_picks_boundary_on_a_line(self):
        X = np.linspace(0.0, 1.0, 7)[:, None]
        pool = Pool(features=X)
        th = Hyperparameters(np.array([0.3]), 1.0, 1.0, 1e-4)
        pick = select_alm(pool, [3], th)  # midpoint labeled
        assert pick in (0, 6)

    def test_matches_bruteforce_variances(self, rng):
        th = random_theta(rng, 2)
        pool = random_pool(rng, n=6)
        cov = kernel_matrix(pool.features, th)
        a = [1, 4]
        best, best_v = None, -1.0
        for x in range(6):
            if x in a:
                continue
            v = naive_conditional_variance(x, a, cov, th.noise_variance)
            if v > best_v:
                best, best_v = x, v
        assert select_alm(pool, a, th) == best

    def test_exhausted_pool(self, rng):
        pool = random_pool(rng, n=3)
        with pytest.raises(PoolExhaustedError):
            select_alm(pool, [0, 1, 2], random_theta(rng, 2))


class TestMiScore:
    def test_two_point_pool_nonnegative(self, rng):
        th = random_theta(rng, 1)
        pool = Pool(features=np.array([[0.0], [0.4]]))
        s = mi_score(0, [], pool, th)
        assert s >= 0.0
        far = Pool(features=np.array([[0.0], [1e7]]))
        assert mi_score(0, [], far, th) == pytest.approx(0.0, abs=1e-9)

    def test_noop_truncation_reproduces_untruncated(self, rng):
        th = random_theta(rng, 2)
        pool = random_pool(rng, n=9)
        a = [2, 5]
        exact = mi_score(0, a, pool, th)
        trunc = mi_score(0, a, pool, th, trunc=(0.0, pool.size))
        assert trunc == exact

    def test_matches_naive_oracle(self, rng):
        th = random_theta(rng, 2)
        pool = random_pool(rng, n=8)
        cov = kernel_matrix(pool.features, th)
        a = [1, 3, 6]
        for x in (0, 2, 7):
            assert mi_score(x, a, pool, th) == pytest.approx(
                naive_mi_score(x, a, cov, th.noise_variance), abs=1e-8
            )

    def test_rejects_observed_point(self, rng):
        pool = random_pool(rng, n=5)
        with pytest.raises(ValueError):
            mi_score(1, [1], pool, random_theta(rng, 2))


class TestSelectMiLk:
    def test_total_truncation_picks_in_index_order(self, rng):
        th = random_theta(rng, 2)
        cov = kernel_matrix(rng.normal(size=(7, 2)), th)
        eps_abs = th.signal_variance  # above every off-diagonal entry
        picks = select_mi_lk(cov, 4, eps_abs, None, th.noise_variance)
        assert picks == [0, 1, 2, 3]

    def test_untruncated_equals_greedy_mi(self, rng):
        th = random_theta(rng, 2)
        X = rng.normal(size=(10, 2))
        cov = kernel_matrix(X, th)
        picks = select_mi_lk(cov, 6, 0.0, None, th.noise_variance)
        assert picks == greedy_mi_sequence(cov, th.noise_variance, 6)

    def test_learner_resolves_epsilon_against_autocovariance(self, rng):
        th = random_theta(rng, 2)
        pool = random_pool(rng, n=12)
        cfg = frozen_config("mi-lk", budget=5, epsilon=0.01, d=100)
        learner = SequentialLearner(pool, cfg, theta_init=th)
        direct = select_mi_lk(
            kernel_matrix(pool.features, th),
            5,
            0.01 * th.signal_variance,
            100,
            th.noise_variance,
        )
        assert learner._lk_order == direct


class TestSelectMiAlkStep:
    def test_first_step_matches_bruteforce(self, rng):
        th = random_theta(rng, 2)
        pool = random_pool(rng, n=10)
        cov = kernel_matrix(pool.features, th)
        # untruncated first step: maximize H(x) - H(x | rest)
        best, best_s = None, -math.inf
        for x in range(10):
            s = naive_mi_score(x, [], cov, th.noise_variance)
            if s > best_s:
                best, best_s = x, s
        assert select_mi_alk_step(pool, [], th, eps_frac=0.0, cap=None) == best

    def test_eps_one_warns_and_degenerates_to_alm(self, rng):
        th = random_theta(rng, 2)
        pool = random_pool(rng, n=8)
        a = [0, 4]
        with pytest.warns(RuntimeWarning):
            pick = select_mi_alk_step(pool, a, th, eps_frac=1.0, cap=None)
        assert pick == select_alm(pool, a, th)

    def test_rejects_out_of_range_fraction(self, rng):
        pool = random_pool(rng, n=5)
        with pytest.raises(ValueError):
            select_mi_alk_step(pool, [], random_theta(rng, 2), eps_frac=1.5, cap=None)


class TestTruncationConsistency:
    def test_all_untruncated_strategies_agree(self, rng):
        # fixed theta, eps 0, unlimited cap: mi, mi-lk and frozen mi-alk
        # walk the exact same sequence
        for n in (8, 14):
            th = random_theta(rng, 2)
            pool = random_pool(rng, n=n)
            budget = 5
            seqs = {}
            for strat in ("mi", "mi-lk", "mi-alk"):
                cfg = frozen_config(strat, budget, epsilon=0.0, d=None, seed=1)
                trace = run_active_loop(pool, pool_oracle(pool), cfg, theta_init=th)
                seqs[strat] = trace.indices
            assert seqs["mi"] == seqs["mi-lk"] == seqs["mi-alk"]

    def test_scale_invariance_of_picks(self, rng):
        th = random_theta(rng, 2)
        pool = random_pool(rng, n=9)
        a = [2, 6]
        scaled = Hyperparameters(
            th.lengthscales, th.signal_variance * 37.0, th.shape, th.noise_variance * 37.0
        )
        assert select_alm(pool, a, th) == select_alm(pool, a, scaled)
        assert select_mi(pool, a, th) == select_mi(pool, a, scaled)
        assert select_mi_alk_step(pool, a, th, 0.3, 4) == select_mi_alk_step(
            pool, a, scaled, 0.3, 4
        )


class TestSequentialLearner:
    def test_recommend_is_idempotent(self, rng):
        pool = random_pool(rng, n=8)
        learner = SequentialLearner(pool, frozen_config("mi", 4, seed=5))
        assert learner.recommend() == learner.recommend()

    def test_observe_clears_pending_and_validates(self, rng):
        pool = random_pool(rng, n=8)
        learner = SequentialLearner(pool, frozen_config("mi", 4, seed=5))
        idx, _ = learner.recommend()
        learner.observe(idx, 1.0)
        with pytest.raises(ValueError):
            learner.observe(idx, 2.0)  # duplicate
        with pytest.raises(KeyError):
            learner.observe(99, 1.0)
        with pytest.raises(ValueError):
            learner.observe(0 if idx != 0 else 1, math.inf)
        nxt, _ = learner.recommend()
        assert nxt != idx

    def test_budget_enforced(self, rng):
        pool = random_pool(rng, n=6)
        learner = SequentialLearner(pool, frozen_config("alm", 2, seed=5))
        for _ in range(2):
            i, _ = learner.recommend()
            learner.observe(i, 0.5)
        with pytest.raises(BudgetExhaustedError):
            learner.recommend()
        with pytest.raises(BudgetExhaustedError):
            learner.observe(5, 1.0)

    def test_off_recommendation_labels_accepted(self, rng):
        pool = random_pool(rng, n=8)
        learner = SequentialLearner(pool, frozen_config("mi-lk", 3, epsilon=0.01, seed=5))
        rec, _ = learner.recommend()
        other = next(i for i in range(8) if i != rec)
        learner.observe(other, 0.3)  # opportunistic label
        nxt, _ = learner.recommend()
        assert nxt != other

    def test_refit_updates_theta_deterministically(self, rng):
        pool = random_pool(rng, n=10)
        cfg = SelectorConfig("mi-alk", budget=4, epsilon=0.2, d=5, seed=9, refit_max_iters=20)
        runs = []
        for _ in range(2):
            learner = SequentialLearner(pool, cfg)
            for _ in range(3):
                i, _ = learner.recommend()
                learner.observe(i, float(pool.labels[i]))
            runs.append(learner.theta)
        assert np.array_equal(runs[0].lengthscales, runs[1].lengthscales)
        assert runs[0].signal_variance == runs[1].signal_variance


class TestRunActiveLoop:
    def test_zero_budget_empty_trace(self, rng):
        pool = random_pool(rng, n=6)
        trace = run_active_loop(pool, pool_oracle(pool), frozen_config("rnd", 0, seed=2))
        assert trace.steps == []

    def test_rnd_reproducible_and_unique(self, rng):
        pool = random_pool(rng, n=12)
        cfg = frozen_config("rnd", 6, seed=31)
        t1 = run_active_loop(pool, pool_oracle(pool), cfg)
        t2 = run_active_loop(pool, pool_oracle(pool), cfg)
        assert t1.indices == t2.indices
        assert len(set(t1.indices)) == 6

    def test_no_index_repeats_across_strategies(self, rng):
        pool = random_pool(rng, n=10)
        for strat in ("alm", "mi", "mi-lk", "mi-alk"):
            cfg = frozen_config(strat, 6, epsilon=0.1, d=4, seed=3)
            trace = run_active_loop(pool, pool_oracle(pool), cfg)
            assert len(set(trace.indices)) == len(trace.indices) == 6

    def test_oracle_failure_preserves_partial_trace(self, rng):
        pool = random_pool(rng, n=8)
        calls = {"n": 0}

        def flaky(idx):
            calls["n"] += 1
            if calls["n"] == 3:
                raise IOError("inspection aborted")
            return float(pool.labels[idx])

        with pytest.raises(OracleError) as err:
            run_active_loop(pool, flaky, frozen_config("alm", 5, seed=4))
        assert len(err.value.trace.steps) == 2

    def test_record_steps_limits_prediction_capture(self, rng):
        pool = random_pool(rng, n=10)
        cfg = frozen_config("alm", 4, seed=6)
        trace = run_active_loop(pool, pool_oracle(pool), cfg, record_steps=[2, 4])
        have = [s.step for s in trace.steps if s.mean is not None]
        assert have == [2, 4]
        assert all(s.sd is None for s in trace.steps if s.step not in (2, 4))

    def test_theta_snapshots_present(self, rng):
        pool = random_pool(rng, n=10)
        cfg = SelectorConfig("mi-alk", budget=3, epsilon=0.5, d=4, seed=8, refit_max_iters=15)
        trace = run_active_loop(pool, pool_oracle(pool), cfg)
        assert all(s.theta is not None for s in trace.steps)
        # adaptive strategy should have moved theta by the last step
        first, last = trace.steps[0].theta, trace.steps[-1].theta
        assert not np.array_equal(first.lengthscales, last.lengthscales)


class TestConfigValidation:
    def test_strategy_names_normalized(self):
        assert SelectorConfig("MI-ALK", budget=1, epsilon=0.5).strategy == "mi-alk"
        assert SelectorConfig("mi_lk", budget=1).strategy == "mi-lk"
        with pytest.raises(ValueError):
            SelectorConfig("gibberish", budget=1)

    def test_alk_epsilon_range(self):
        with pytest.raises(ValueError):
            SelectorConfig("mi-alk", budget=1, epsilon=1.2)
        with pytest.raises(ValueError):
            SelectorConfig("mi", budget=1, d=0)

    def test_budget_must_fit_pool(self, rng):
        pool = random_pool(rng, n=4)
        with pytest.raises(ValueError):
            SequentialLearner(pool, frozen_config("mi", 4))
