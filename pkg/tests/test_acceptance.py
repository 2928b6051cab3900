"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line.  The SDOF benchmark (n=400, h=200, 16 paired realizations) runs once
and backs both the convergence-direction and representativeness criteria;
expect the module to take on the order of 15 minutes.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

import gpal.bench as bench_mod
from gpal.bench import ExperimentPlan, StrategyConfig, load_plan_pool, run_plan, summarize
from gpal.boucwen import BoucWenParams, build_dataset, simulate, write_csv
from gpal.data import SDOF_SCHEMA, load_csv, standardize
from gpal.gp import Hyperparameters, kernel_matrix, posterior
from gpal.metrics import cov_max, cov_max_testing, similarity_pdf
from gpal.mle import lml_gradient, log_marginal_likelihood
from gpal.selectors import (
    Pool,
    SelectorConfig,
    SequentialLearner,
    pool_oracle,
    run_active_loop,
)
from gpal.service import ServiceConfig, create_app

from .conftest import random_theta
from .oracles import (
    central_difference,
    greedy_mi_sequence,
    linear_sdof_max_response,
    naive_posterior,
)


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


# ---------------------------------------------------------------------------
# shared SDOF benchmark run (criteria: SDOF reproduction, representativeness)
# ---------------------------------------------------------------------------

SDOF_PLAN = ExperimentPlan(
    dataset={"kind": "sdof", "n": 400, "seed": 7},
    configs=(
        StrategyConfig("mi-alk", epsilon=0.01, d=50, theta_init="arbitrary", name="alk-arb"),
        StrategyConfig("mi-alk", epsilon=0.01, d=50, theta_init="mle", name="alk-opt"),
        StrategyConfig("mi-lk", epsilon=0.01, d=50, theta_init="arbitrary", name="lk-arb"),
        StrategyConfig("mi-lk", epsilon=0.01, d=50, theta_init="mle", name="lk-opt"),
    ),
    budget=200,
    realizations=16,
    base_seed=20240809,
    auc_start=75,
    workers=2,
    refit_restarts=1,
    refit_max_iters=40,
    restart_every=10,
    mle_theta_restarts=12,
)


@pytest.fixture(scope="module")
def sdof_pool():
    return load_plan_pool(SDOF_PLAN)


@pytest.fixture(scope="module")
def sdof_result(sdof_pool):
    return run_plan(SDOF_PLAN, sdof_pool)


class TestGradientCorrectness:
    def test_analytic_gradient_matches_finite_differences(self):
        with criterion("gradient-correctness (50 problems, 1e-4 rel)"):
            t0 = time.perf_counter()
            rng = np.random.default_rng(515)
            for _ in range(50):
                m = int(rng.integers(1, 5))
                th = random_theta(rng, m)
                X = rng.normal(size=(10, m))
                y = rng.normal(size=10)
                raw = np.concatenate(
                    [th.lengthscales, [th.signal_variance, th.noise_variance, th.shape]]
                )

                def f(phi):
                    p = np.exp(phi)
                    return log_marginal_likelihood(
                        X, y, Hyperparameters(p[:m], p[m], p[m + 2], p[m + 1])
                    )

                fd_log = central_difference(f, np.log(raw), 1e-5)
                analytic_log = lml_gradient(X, y, th) * raw
                for j in range(m + 3):
                    if abs(fd_log[j]) < 1e-6:
                        assert abs(analytic_log[j] - fd_log[j]) < 1e-4
                    else:
                        assert analytic_log[j] == pytest.approx(fd_log[j], rel=1e-4)
            assert time.perf_counter() - t0 < 60.0


class TestPosteriorOracle:
    def test_cholesky_matches_dense_inverse(self):
        with criterion("posterior-oracle-equivalence (pools <= 50, 1e-8 rel)"):
            rng = np.random.default_rng(626)
            for n in (5, 17, 33, 50):
                m = int(rng.integers(1, 5))
                th = random_theta(rng, m)
                X = rng.normal(size=(n, m))
                y = rng.normal(size=n)
                Xq = rng.normal(size=(7, m))
                post = posterior(X, y, Xq, th)
                mean_o, var_o = naive_posterior(X, y, Xq, th)
                np.testing.assert_allclose(post.mean, mean_o, rtol=1e-8)
                np.testing.assert_allclose(post.variance, var_o, rtol=1e-8, atol=1e-10)


class TestGreedyMiReduction:
    def test_lk_and_alk_collapse_to_greedy_mi(self):
        with criterion("greedy-MI-reduction (10 pools of 20, exact sequences)"):
            rng = np.random.default_rng(737)
            for trial in range(10):
                feats = rng.normal(size=(20, 2))
                labels = rng.normal(size=20)
                pool = Pool(features=feats, labels=labels)
                th = random_theta(rng, 2)
                budget = 6
                oracle_seq = greedy_mi_sequence(
                    kernel_matrix(feats, th), th.noise_variance, budget
                )
                seqs = {}
                for strat in ("mi", "mi-lk", "mi-alk"):
                    cfg = SelectorConfig(
                        strat, budget=budget, seed=1, epsilon=0.0, d=None, refit=False
                    )
                    trace = run_active_loop(pool, pool_oracle(pool), cfg, theta_init=th)
                    seqs[strat] = trace.indices
                assert seqs["mi-lk"] == seqs["mi"] == seqs["mi-alk"]
                assert seqs["mi"] == oracle_seq


class TestInformationNeverHurts:
    def test_conditional_variance_monotone_over_1000_checks(self):
        with criterion("information-never-hurts (1000 checks, 1e-8)"):
            from gpal.gp import conditional_variance

            rng = np.random.default_rng(848)
            checks = 0
            while checks < 1000:
                m = int(rng.integers(1, 5))
                th = random_theta(rng, m)
                n = int(rng.integers(6, 16))
                cov = kernel_matrix(rng.normal(size=(n, m)), th)
                perm = rng.permutation(n)
                x = int(perm[0])
                pool_rest = perm[1:]
                for k in range(1, pool_rest.size):
                    smaller = conditional_variance(x, pool_rest[:k], cov, th.noise_variance)
                    larger = conditional_variance(x, pool_rest[: k + 1], cov, th.noise_variance)
                    assert larger <= smaller + 1e-8
                    checks += 1


class TestBoucWenLinearLimit:
    def test_matches_closed_form_for_ten_draws(self):
        with criterion("bouc-wen-linear-limit (10 draws, 1e-3 rel)"):
            rng = np.random.default_rng(959)
            for s1 in rng.uniform(0.5, 2.5, size=10):
                got = simulate(BoucWenParams(s1=float(s1), s2=0.0, s3=0.0, s4=1.0))
                want = linear_sdof_max_response(float(s1))
                assert got == pytest.approx(want, rel=1e-3)


class TestSdofReproduction:
    def test_direction_checks(self, sdof_result):
        s = summarize(sdof_result)["summary"]
        med = {name: s[name]["median_auc_smse"] for name in s}
        print(f"[ACCEPTANCE] sdof medians: {med}")

        with criterion("sdof (a): mi-alk arbitrary beats mi-lk arbitrary on AUC-SMSE"):
            assert med["alk-arb"] < med["lk-arb"]

        with criterion("sdof (b): theta-sensitivity gap larger for mi-lk, both positive"):
            gap_lk = (med["lk-arb"] - med["lk-opt"]) / med["lk-arb"]
            gap_alk = (med["alk-arb"] - med["alk-opt"]) / med["alk-arb"]
            print(f"[ACCEPTANCE] sdof gaps: lk={gap_lk:.1%} alk={gap_alk:.1%}")
            assert gap_lk > 0 and gap_alk > 0
            assert gap_lk > gap_alk

        with criterion("sdof (c): pure-noise dimensions get larger lengthscales"):
            ls = sdof_result.theta_mle.lengthscales
            print(f"[ACCEPTANCE] reference lengthscales: {np.round(ls, 3).tolist()}")
            assert min(ls[6], ls[7]) > max(ls[0], ls[1], ls[2], ls[3])


class TestRepresentativeness:
    def test_direction_and_pdf_properties(self, sdof_result, sdof_pool):
        h = 50
        masses = {}
        for name in ("alk-arb", "lk-arb"):
            values = []
            for r in sdof_result.for_config(name):
                split, _ = bench_mod._realization_draws(SDOF_PLAN, sdof_pool, r.realization)
                subpool = split.apply(sdof_pool)
                values.append(cov_max_testing(subpool, r.indices[:h], r.theta_final))
            pdf = similarity_pdf(values, step=h)
            masses[name] = pdf.mass_below(0.5)
            with criterion(f"representativeness: {name} pdf integral within 1e-3 of 1"):
                assert pdf.integral() == pytest.approx(1.0, abs=1e-3)

        print(f"[ACCEPTANCE] below-0.5 mass: {masses}")
        with criterion("representativeness: mi-alk poorly-represented mass <= mi-lk"):
            assert masses["alk-arb"] <= masses["lk-arb"]

        with criterion("representativeness: per-point cov_max monotone in h"):
            r = sdof_result.for_config("alk-arb")[0]
            split, _ = bench_mod._realization_draws(SDOF_PLAN, sdof_pool, r.realization)
            subpool = split.apply(sdof_pool)
            outside = [i for i in range(subpool.size) if i not in set(r.indices[:h])]
            probes = outside[:: max(1, len(outside) // 20)]
            for x in probes:
                prev = 0.0
                for k in range(1, h + 1):
                    v = cov_max(x, r.indices[:k], subpool, r.theta_final)
                    assert v >= prev - 1e-12
                    prev = v


class TestComplexityTrend:
    def test_per_step_time_grows_with_neighbor_cap(self, sdof_pool):
        with criterion("complexity-trend: mi-alk step time d=200 > d=50 on n=400"):
            times = {}
            for cap in (50, 200):
                step_times = []
                for rep in range(3):
                    cfg = SelectorConfig(
                        "mi-alk",
                        budget=8,
                        seed=1000 + rep,
                        epsilon=0.0,
                        d=cap,
                        refit_restarts=0,
                        refit_max_iters=10,
                    )
                    trace = run_active_loop(sdof_pool, pool_oracle(sdof_pool), cfg)
                    step_times.extend(s.wall_time for s in trace.steps)
                times[cap] = float(np.median(step_times))
            print(f"[ACCEPTANCE] median step seconds: {times}")
            assert times[200] > times[50]


class TestServiceLibraryEquivalence:
    def test_scripted_labels_reproduce_library_loop(self, tmp_path):
        with criterion("service-library-equivalence + event-log replay"):
            ds = build_dataset(n=30, seed=21)
            csv_path = tmp_path / "pool.csv"
            write_csv(ds, csv_path)
            raw_pool = load_csv(csv_path, SDOF_SCHEMA).pool("label")
            std_pool, _ = standardize(raw_pool)
            config = dict(
                strategy="mi-alk", budget=6, seed=17, epsilon=0.3, d=8,
                refit_restarts=1, refit_max_iters=20, restart_every=1,
            )

            app = create_app(ServiceConfig(data_dir=str(tmp_path / "data")))
            with TestClient(app) as client:
                out = client.post(
                    "/campaigns", json={"csv_path": str(csv_path), "config": config}
                ).json()
                cid = out["campaign_id"]
                service_indices = []
                for _ in range(config["budget"]):
                    rec = client.get(f"/campaigns/{cid}/recommendation").json()
                    idx = raw_pool.index_of(rec["point_id"])
                    service_indices.append(idx)
                    client.post(
                        f"/campaigns/{cid}/labels",
                        json={"point_id": rec["point_id"], "value": float(raw_pool.labels[idx])},
                    )
                service_preds = client.get(f"/campaigns/{cid}/predictions").json()["points"]
                campaign = app.state.store.get(cid)
                live_theta = campaign.learner.theta
                replayed = app.state.store.replay(cid)

            lib_pool = Pool(features=std_pool.features, labels=raw_pool.labels, ids=std_pool.ids)
            lib_cfg = SelectorConfig(budget=config["budget"], seed=config["seed"],
                                     strategy=config["strategy"], epsilon=config["epsilon"],
                                     d=config["d"], refit_restarts=config["refit_restarts"],
                                     refit_max_iters=config["refit_max_iters"],
                                     restart_every=config["restart_every"])
            trace = run_active_loop(lib_pool, pool_oracle(lib_pool), lib_cfg)

            assert trace.indices == service_indices
            final = trace.steps[-1]
            for i, p in enumerate(service_preds):
                if p["observed"]:
                    assert p["mean"] == float(raw_pool.labels[i]) and p["sd"] == 0.0
                else:
                    assert p["mean"] == pytest.approx(float(final.mean[i]), abs=1e-12)
                    assert p["sd"] == pytest.approx(float(final.sd[i]), abs=1e-12)
            np.testing.assert_array_equal(
                final.theta.lengthscales, live_theta.lengthscales
            )

            # replaying the event log reconstructs identical state
            assert replayed.learner.observed == campaign.learner.observed
            np.testing.assert_array_equal(
                replayed.learner.theta.lengthscales, live_theta.lengthscales
            )
            assert replayed.learner.theta.noise_variance == live_theta.noise_variance
            assert replayed.status == campaign.status
