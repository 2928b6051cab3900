"""Batch benchmark runner: strategy grids over seeded realizations.

A plan pairs a dataset with a grid of (strategy, epsilon, d, initial-theta)
configurations and a realization count.  Every realization draws a random
working subset of the pool and a random initial theta from a stream keyed by
(base seed, realization), shared across configurations so strategy
comparisons are paired; strategy-internal randomness is keyed by the
configuration's content hash, so reordering the grid changes nothing.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass, field
from multiprocessing import Pool as ProcessPool
from pathlib import Path

import numpy as np

from gpal import metrics, mle
from gpal._threads import limit_blas_threads
from gpal.boucwen import build_dataset
from gpal.data import SDOF_SCHEMA, Schema, load_csv, make_split, standardize
from gpal.gp import Hyperparameters
from gpal.metrics import LearningCurve
from gpal.selectors import Pool, SelectorConfig, pool_oracle, run_active_loop

__all__ = [
    "StrategyConfig",
    "ExperimentPlan",
    "RealizationResult",
    "ExperimentResult",
    "run_plan",
    "summarize",
    "write_outputs",
]

_TAG_REALIZATION = 101
_TAG_MLE_THETA = 102


@dataclass(frozen=True)
class StrategyConfig:
    """One cell of the benchmark grid."""

    strategy: str
    epsilon: float = 0.0
    d: int | None = None
    theta_init: str = "random"  # random | arbitrary | mle
    name: str = ""

    def __post_init__(self):
        if self.theta_init not in ("random", "arbitrary", "mle"):
            raise ValueError(f"unknown theta_init policy {self.theta_init!r}")
        if not self.name:
            d = "n" if self.d is None else self.d
            object.__setattr__(
                self,
                "name",
                f"{self.strategy}(eps={self.epsilon:g},d={d},theta={self.theta_init})",
            )

    def content_hash(self) -> int:
        key = f"{self.strategy}|{self.epsilon!r}|{self.d!r}|{self.theta_init}"
        return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class ExperimentPlan:
    dataset: dict
    configs: tuple[StrategyConfig, ...]
    budget: int
    realizations: int
    base_seed: int
    auc_start: int = 75
    pool_fraction: float = 0.8
    workers: int = 0
    rnd_step: int = 10
    refit_restarts: int = 1
    refit_max_iters: int = 50
    restart_every: int = 1
    mle_theta_restarts: int = 8
    mle_theta_max_iters: int = 100

    def __post_init__(self):
        if not self.configs:
            raise ValueError("plan needs at least one configuration")
        if self.realizations < 1:
            raise ValueError("plan needs at least one realization")
        object.__setattr__(self, "configs", tuple(self.configs))

    @classmethod
    def from_toml(cls, path) -> "ExperimentPlan":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        refit = raw.get("refit", {})
        mle_theta = raw.get("mle_theta", {})
        configs = tuple(
            StrategyConfig(
                strategy=c["strategy"],
                epsilon=float(c.get("epsilon", 0.0)),
                d=c.get("d"),
                theta_init=c.get("theta_init", "random"),
                name=c.get("name", ""),
            )
            for c in raw.get("configs", [])
        )
        return cls(
            dataset=raw.get("dataset", {"kind": "sdof"}),
            configs=configs,
            budget=int(raw["budget"]),
            realizations=int(raw.get("realizations", 16)),
            base_seed=int(raw.get("base_seed", 0)),
            auc_start=int(raw.get("auc_start", 75)),
            pool_fraction=float(raw.get("pool_fraction", 0.8)),
            workers=int(raw.get("workers", 0)),
            rnd_step=int(raw.get("rnd_step", 10)),
            refit_restarts=int(refit.get("restarts", 1)),
            refit_max_iters=int(refit.get("max_iters", 50)),
            restart_every=int(refit.get("restart_every", 1)),
            mle_theta_restarts=int(mle_theta.get("restarts", 8)),
            mle_theta_max_iters=int(mle_theta.get("max_iters", 100)),
        )

    def at_paper_scale(self) -> "ExperimentPlan":
        """Bump realization and restart counts to reference-report scale."""
        return dataclasses.replace(
            self,
            realizations=max(self.realizations, 64),
            mle_theta_restarts=max(self.mle_theta_restarts, 100),
        )


@dataclass
class RealizationResult:
    config_name: str
    realization: int
    indices: list[int]
    curves: dict
    auc_smse: float | None
    auc_cc: float | None
    step_times: np.ndarray
    wall_time: float
    theta_final: Hyperparameters
    split_seed: int


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    realizations: list[RealizationResult] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    theta_mle: Hyperparameters | None = None
    theta_mle_lengthscales_ranked: list[int] | None = None

    def for_config(self, name: str) -> list[RealizationResult]:
        return [r for r in self.realizations if r.config_name == name]


def load_plan_pool(plan: ExperimentPlan) -> Pool:
    """Materialize and standardize the plan's dataset into a Pool."""
    spec = plan.dataset
    kind = spec.get("kind", "sdof")
    if kind == "sdof":
        ds = build_dataset(n=int(spec.get("n", 400)), seed=int(spec.get("seed", 0)))
        pool = Pool(features=ds.features, labels=ds.labels)
    elif kind == "csv":
        schema = (
            Schema.from_file(spec["schema"]) if isinstance(spec.get("schema"), str) else SDOF_SCHEMA
        )
        dataset = load_csv(spec["path"], schema)
        pool = dataset.pool(spec.get("label"))
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    standardized, _ = standardize(pool)
    return standardized


def fit_reference_theta(plan: ExperimentPlan, pool: Pool) -> mle.MleResult:
    """Multi-restart MLE on the full labeled pool (the optimized-theta scenario)."""
    return mle.fit(
        pool.features,
        pool.labels,
        theta_init=None,
        max_iters=plan.mle_theta_max_iters,
        restarts=plan.mle_theta_restarts,
        seed=np.random.SeedSequence([plan.base_seed, _TAG_MLE_THETA]),
    )


def _realization_draws(plan: ExperimentPlan, pool: Pool, k: int):
    """Shared per-realization randomness: the working subset and a random theta."""
    seq = np.random.SeedSequence([plan.base_seed, _TAG_REALIZATION, k])
    split_seed = int(seq.generate_state(1)[0])
    split = make_split(pool, plan.pool_fraction, seed=split_seed)
    rng = np.random.default_rng(seq.spawn(1)[0])
    theta_random = mle.random_init(rng, pool.features[split.pool_indices], np.empty(0))
    return split, theta_random


def _resolve_theta(cfg: StrategyConfig, pool: Pool, theta_random, theta_mle):
    if cfg.theta_init == "arbitrary":
        return Hyperparameters(np.ones(pool.ndim), 1.0, 1.0, 1.0)
    if cfg.theta_init == "mle":
        if theta_mle is None:
            raise ValueError("plan has no fitted reference theta for theta_init='mle'")
        return theta_mle
    return theta_random


def _safe_cc(predictions, truths) -> float:
    try:
        return metrics.cc(predictions, truths)
    except ValueError:
        return 0.0  # constant predictions carry no correlation signal


def run_realization(plan: ExperimentPlan, pool: Pool, cfg: StrategyConfig, k: int, theta_mle=None) -> RealizationResult:
    split, theta_random = _realization_draws(plan, pool, k)
    subpool = split.apply(pool)
    theta0 = _resolve_theta(cfg, subpool, theta_random, theta_mle)

    selector_cfg = SelectorConfig(
        strategy=cfg.strategy,
        budget=plan.budget,
        seed=int(np.random.SeedSequence([plan.base_seed, cfg.content_hash(), k]).generate_state(1)[0]),
        epsilon=cfg.epsilon,
        d=cfg.d,
        refit_restarts=plan.refit_restarts,
        refit_max_iters=plan.refit_max_iters,
        restart_every=plan.restart_every,
    )
    record_steps = (
        list(range(plan.rnd_step, plan.budget + 1, plan.rnd_step))
        if cfg.strategy == "rnd"
        else None
    )
    trace = run_active_loop(
        subpool, pool_oracle(subpool), selector_cfg, theta_init=theta0, record_steps=record_steps
    )

    truths = subpool.labels
    steps, smse_vals, cc_vals = [], [], []
    observed: list[int] = []
    for record in trace.steps:
        observed.append(record.index)
        if record.mean is None:
            continue
        scored = record.mean.copy()
        scored[observed] = truths[observed]  # transductive convention
        steps.append(record.step)
        smse_vals.append(metrics.smse(scored, truths))
        cc_vals.append(_safe_cc(scored, truths))

    curves = {
        "smse": LearningCurve(np.array(steps, dtype=float), np.array(smse_vals), k),
        "cc": LearningCurve(np.array(steps, dtype=float), np.array(cc_vals), k),
    }
    auc_smse = auc_cc = None
    if steps and steps[0] <= plan.auc_start < steps[-1]:
        auc_smse = metrics.auc(curves["smse"], plan.auc_start)
        auc_cc = metrics.auc(curves["cc"], plan.auc_start)
    else:
        warnings.warn(
            f"{cfg.name} realization {k}: curve does not cover the AUC start "
            f"step {plan.auc_start}; AUC omitted",
            RuntimeWarning,
        )
    step_times = np.array([r.wall_time for r in trace.steps])
    return RealizationResult(
        config_name=cfg.name,
        realization=k,
        indices=trace.indices,
        curves=curves,
        auc_smse=auc_smse,
        auc_cc=auc_cc,
        step_times=step_times,
        wall_time=float(step_times.sum()),
        theta_final=trace.steps[-1].theta if trace.steps else theta0,
        split_seed=split.seed,
    )


_WORKER: dict = {}


def _worker_init(plan, pool, theta_mle):
    limit_blas_threads(1)
    _WORKER["plan"] = plan
    _WORKER["pool"] = pool
    _WORKER["theta_mle"] = theta_mle


def _worker_run(job):
    ci, k = job
    plan, pool, theta_mle = _WORKER["plan"], _WORKER["pool"], _WORKER["theta_mle"]
    cfg = plan.configs[ci]
    try:
        return (ci, k, run_realization(plan, pool, cfg, k, theta_mle), None)
    except Exception as exc:  # noqa: BLE001 - failures are data here
        return (ci, k, None, f"{type(exc).__name__}: {exc}")


def run_plan(plan: ExperimentPlan, pool: Pool | None = None, progress=None) -> ExperimentResult:
    """Execute every (configuration, realization) cell of the plan.

    Individual realization failures are recorded and the run continues; a
    configuration only fails the plan if every one of its realizations
    failed.  Results are merged in (configuration, realization) order no
    matter how many workers ran them.
    """
    limit_blas_threads(1)
    if pool is None:
        pool = load_plan_pool(plan)
    if plan.budget >= round(plan.pool_fraction * pool.size):
        raise ValueError("budget must be below the working-subset size")

    theta_mle = None
    ranked = None
    if any(c.theta_init == "mle" for c in plan.configs):
        ref = fit_reference_theta(plan, pool)
        theta_mle = ref.theta
        ranked = list(np.argsort(ref.theta.lengthscales)[::-1])

    jobs = [(ci, k) for ci in range(len(plan.configs)) for k in range(plan.realizations)]
    outcomes = []
    if plan.workers and plan.workers > 1:
        with ProcessPool(
            plan.workers, initializer=_worker_init, initargs=(plan, pool, theta_mle)
        ) as procs:
            for out in procs.imap_unordered(_worker_run, jobs):
                outcomes.append(out)
                if progress:
                    progress(len(outcomes), len(jobs))
    else:
        _worker_init(plan, pool, theta_mle)
        for job in jobs:
            outcomes.append(_worker_run(job))
            if progress:
                progress(len(outcomes), len(jobs))

    outcomes.sort(key=lambda o: (o[0], o[1]))
    result = ExperimentResult(plan=plan, theta_mle=theta_mle, theta_mle_lengthscales_ranked=ranked)
    ok_by_config = {c.name: 0 for c in plan.configs}
    for ci, k, res, err in outcomes:
        if res is not None:
            result.realizations.append(res)
            ok_by_config[plan.configs[ci].name] += 1
        else:
            result.failures.append(
                {"config": plan.configs[ci].name, "realization": k, "error": err}
            )
    dead = [name for name, n in ok_by_config.items() if n == 0]
    if dead:
        raise RuntimeError(f"every realization failed for configuration(s): {dead}")
    return result


def summarize(result: ExperimentResult) -> dict:
    """Long-format metric rows plus per-config quantile bands and AUC table."""
    rows = []
    for r in result.realizations:
        for metric_name, curve in r.curves.items():
            for step, value in zip(curve.steps, curve.values):
                rows.append(
                    {
                        "config": r.config_name,
                        "realization": r.realization,
                        "step": int(step),
                        "metric": metric_name,
                        "value": float(value),
                    }
                )

    bands = []
    by_config: dict = {}
    for r in result.realizations:
        by_config.setdefault(r.config_name, []).append(r)
    for name, rs in by_config.items():
        for metric_name in ("smse", "cc"):
            all_steps = rs[0].curves[metric_name].steps
            stacked = np.vstack([x.curves[metric_name].values for x in rs])
            for j, step in enumerate(all_steps):
                col = stacked[:, j]
                bands.append(
                    {
                        "config": name,
                        "metric": metric_name,
                        "step": int(step),
                        "median": float(np.quantile(col, 0.5)),
                        "q25": float(np.quantile(col, 0.25)),
                        "q75": float(np.quantile(col, 0.75)),
                    }
                )

    aucs = [
        {
            "config": r.config_name,
            "realization": r.realization,
            "auc_smse": r.auc_smse,
            "auc_cc": r.auc_cc,
            "wall_time": r.wall_time,
        }
        for r in result.realizations
    ]
    summary = {}
    for name, rs in by_config.items():
        vals = [r.auc_smse for r in rs if r.auc_smse is not None]
        times = [r.wall_time for r in rs]
        summary[name] = {
            "realizations": len(rs),
            "median_auc_smse": float(np.median(vals)) if vals else None,
            "median_wall_time": float(np.median(times)),
        }
    return {"rows": rows, "bands": bands, "aucs": aucs, "summary": summary}


def write_outputs(result: ExperimentResult, outdir) -> None:
    """CSV tables (long metrics, bands, AUCs) plus a JSON summary."""
    import csv as _csv

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tables = summarize(result)

    def write_table(name, rows, fields):
        with open(outdir / name, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)

    write_table("metrics.csv", tables["rows"], ["config", "realization", "step", "metric", "value"])
    write_table(
        "bands.csv", tables["bands"], ["config", "metric", "step", "median", "q25", "q75"]
    )
    write_table(
        "aucs.csv", tables["aucs"], ["config", "realization", "auc_smse", "auc_cc", "wall_time"]
    )
    payload = {
        "summary": tables["summary"],
        "failures": result.failures,
        "theta_mle": result.theta_mle.as_dict() if result.theta_mle else None,
    }
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
