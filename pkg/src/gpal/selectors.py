"""Pool-based sample selection strategies.

Five strategies pick the next pool index to label: uniform random, maximum
predictive variance (ALM), greedy mutual information, greedy MI with fixed
local-kernel truncation (precomputable, label-free), and greedy MI with
adaptive local kernels where the hyperparameters are refit by maximum
likelihood after every observed label and the truncation threshold tracks
the current autocovariance.

All argmax operations break ties by lowest pool index so runs are
reproducible.  Neighborhood membership uses |K(x, x')| >= threshold, and the
neighbor cap keeps the `cap` highest-covariance members after intersecting
with the conditioning set.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from gpal import mle
from gpal.gp import (
    Hyperparameters,
    Posterior,
    conditional_variances,
    kernel_from_sq_diffs,
    kernel_matrix,
    pairwise_sq_diffs,
    pool_posterior,
    standardize_labels,
)

__all__ = [
    "Pool",
    "Neighborhood",
    "SelectorConfig",
    "StepRecord",
    "SelectionTrace",
    "PoolExhaustedError",
    "BudgetExhaustedError",
    "DegeneratePoolError",
    "OracleError",
    "STRATEGIES",
    "neighborhood",
    "select_alm",
    "mi_score",
    "select_mi",
    "select_mi_lk",
    "select_mi_alk_step",
    "SequentialLearner",
    "run_active_loop",
    "pool_oracle",
]

STRATEGIES = ("rnd", "alm", "mi", "mi-lk", "mi-alk")

# child-stream tags for per-learner randomness (init theta, random picks,
# per-step refit restarts)
_TAG_INIT, _TAG_RND, _TAG_REFIT = 0, 1, 2


class PoolExhaustedError(RuntimeError):
    """Every pool point has been observed."""


class BudgetExhaustedError(RuntimeError):
    """The query budget h has been spent."""


class DegeneratePoolError(RuntimeError):
    """A conditional variance collapsed to zero; the pool is degenerate."""


class OracleError(RuntimeError):
    """Label query failed; the partial trace is preserved on `.trace`."""

    def __init__(self, message: str, trace: "SelectionTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Pool:
    """Indexed table of candidate points.

    `labels` may be absent (interactive campaigns) or present but hidden
    from selectors; only the oracle reveals them.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        object.__setattr__(self, "features", feats)
        if feats.shape[0] < 2:
            raise ValueError("a pool needs at least two points")
        if not np.all(np.isfinite(feats)):
            raise ValueError("pool features must be finite")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=float).ravel()
            if labels.size != feats.shape[0]:
                raise ValueError("labels length does not match feature rows")
            object.__setattr__(self, "labels", labels)
        ids = tuple(self.ids) if self.ids else tuple(str(i) for i in range(feats.shape[0]))
        if len(ids) != feats.shape[0]:
            raise ValueError("ids length does not match feature rows")
        if len(set(ids)) != len(ids):
            raise ValueError("pool ids must be unique")
        object.__setattr__(self, "ids", ids)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def ndim(self) -> int:
        return self.features.shape[1]

    def index_of(self, point_id: str) -> int:
        try:
            return self.ids.index(point_id)
        except ValueError:
            raise KeyError(f"unknown point id {point_id!r}") from None


def pool_oracle(pool: Pool):
    """Oracle revealing the pool's hidden labels."""
    if pool.labels is None:
        raise ValueError("pool has no labels to reveal")

    def oracle(index: int) -> float:
        return float(pool.labels[index])

    return oracle


@dataclass(frozen=True)
class Neighborhood:
    """Members of a point's local kernel, strongest covariance first."""

    center: int
    member_indices: tuple[int, ...]
    threshold: float


def _top_members(cov_row_abs, candidates, threshold, cap):
    """Candidates with |K| >= threshold, sorted by (-|K|, index), capped."""
    k = cov_row_abs[candidates]
    keep = k >= threshold
    cand = candidates[keep]
    if cand.size == 0:
        return cand
    order = np.lexsort((cand, -k[keep]))
    if cap is not None:
        order = order[:cap]
    return cand[order]


def neighborhood(
    cov: np.ndarray,
    center: int,
    threshold: float,
    cap: int | None = None,
    candidates=None,
) -> Neighborhood:
    """Local kernel of `center` within `candidates` (default: rest of pool)."""
    n = cov.shape[0]
    if candidates is None:
        candidates = np.arange(n)
    candidates = np.asarray(candidates, dtype=int)
    candidates = candidates[candidates != center]
    members = _top_members(np.abs(cov[center]), candidates, threshold, cap)
    return Neighborhood(center, tuple(int(i) for i in members), threshold)


def _cond_var_members(cov, x, members, noise_variance) -> float:
    if len(members) == 0:
        return float(cov[x, x])
    return float(conditional_variances([x], members, cov, noise_variance)[0])


def _half_log_ratio(var_given_a: float, var_given_rest: float) -> float:
    if var_given_rest <= 0.0:
        raise DegeneratePoolError(
            "conditional variance against the complement collapsed to zero"
        )
    if var_given_a <= 0.0:
        return -math.inf
    return 0.5 * math.log(var_given_a / var_given_rest)


def select_alm(pool: Pool, a_indices, theta: Hyperparameters, cov=None) -> int:
    """Next index by maximum predictive variance (ties: lowest index)."""
    if cov is None:
        cov = kernel_matrix(pool.features, theta)
    n = cov.shape[0]
    a = np.asarray(a_indices, dtype=int)
    mask = np.zeros(n, dtype=bool)
    mask[a] = True
    candidates = np.flatnonzero(~mask)
    if candidates.size == 0:
        raise PoolExhaustedError("no unobserved points left")
    variances = conditional_variances(candidates, a, cov, theta.noise_variance)
    return int(candidates[np.argmax(variances)])


def mi_score(
    x_index: int,
    a_indices,
    pool: Pool,
    theta: Hyperparameters,
    trunc: tuple[float, int] | None = None,
    cov=None,
) -> float:
    """Mutual-information gain of querying x, as an entropy difference.

    The first conditional entropy is taken against the observed set exactly;
    the second against the complement of (observed + x), optionally truncated
    to the local kernel of x: `trunc` = (absolute threshold, neighbor cap).
    """
    if cov is None:
        cov = kernel_matrix(pool.features, theta)
    n = cov.shape[0]
    a = np.asarray(a_indices, dtype=int)
    if x_index in set(a.tolist()):
        raise ValueError(f"point {x_index} is already observed")
    mask = np.zeros(n, dtype=bool)
    mask[a] = True
    mask[x_index] = True
    rest = np.flatnonzero(~mask)

    var_a = _cond_var_members(cov, x_index, a, theta.noise_variance)
    # the untruncated complement goes through the same ordering as a no-op
    # truncation so the two paths agree bit for bit
    threshold, cap = trunc if trunc is not None else (0.0, None)
    members = _top_members(np.abs(cov[x_index]), rest, threshold, cap)
    var_rest = _cond_var_members(cov, x_index, members, theta.noise_variance)
    return _half_log_ratio(var_a, var_rest)


def _mi_step_pick(cov, a_indices, noise_variance, threshold, cap):
    """Shared greedy-MI step: exact first term, optionally truncated second."""
    n = cov.shape[0]
    a = np.asarray(a_indices, dtype=int)
    mask = np.zeros(n, dtype=bool)
    mask[a] = True
    candidates = np.flatnonzero(~mask)
    if candidates.size == 0:
        raise PoolExhaustedError("no unobserved points left")

    first = conditional_variances(candidates, a, cov, noise_variance)
    abs_cov = np.abs(cov)
    best_idx, best_score = -1, -math.inf
    for ci, x in enumerate(candidates):
        rest = candidates[candidates != x]
        members = _top_members(abs_cov[x], rest, threshold, cap)
        var_rest = _cond_var_members(cov, x, members, noise_variance)
        score = _half_log_ratio(float(first[ci]), var_rest)
        if score > best_score:
            best_idx, best_score = int(x), score
    return best_idx, best_score


def select_mi(pool: Pool, a_indices, theta: Hyperparameters, cov=None) -> int:
    """Standard greedy mutual-information pick (untruncated)."""
    if cov is None:
        cov = kernel_matrix(pool.features, theta)
    idx, _ = _mi_step_pick(cov, a_indices, theta.noise_variance, 0.0, None)
    return idx


def select_mi_lk(
    cov: np.ndarray,
    budget: int,
    eps_abs: float,
    cap: int | None,
    noise_variance: float = 0.0,
) -> list[int]:
    """Full pick order of greedy MI with fixed local kernels.

    The covariance is built once from constant hyperparameters and never
    changes, so the whole order is computable before any label is seen.  A
    dense score vector is kept; after each pick only scores inside the
    picked point's neighborhood are refreshed, the rest go intentionally
    stale.
    """
    n = cov.shape[0]
    if not 0 < budget <= n:
        raise ValueError("budget must be in 1..n")
    abs_cov = np.abs(cov)
    arange = np.arange(n)
    # neighbor lists are fixed for the whole run: strongest-covariance first
    neighbor_lists = [
        _top_members(abs_cov[x], arange[arange != x], eps_abs, None) for x in range(n)
    ]

    in_a = np.zeros(n, dtype=bool)
    delta = np.empty(n)
    for x in range(n):
        members = neighbor_lists[x][:cap] if cap is not None else neighbor_lists[x]
        var_rest = _cond_var_members(cov, x, members, noise_variance)
        delta[x] = _half_log_ratio(float(cov[x, x]), var_rest)

    picked: list[int] = []
    for _ in range(budget):
        masked = np.where(in_a, -np.inf, delta)
        star = int(np.argmax(masked))  # argmax returns the lowest tied index
        picked.append(star)
        in_a[star] = True
        refresh = neighbor_lists[star][:cap] if cap is not None else neighbor_lists[star]
        for x in refresh:
            if in_a[x]:
                continue
            neighbors = neighbor_lists[x]
            obs = neighbors[in_a[neighbors]][:cap]
            rest = neighbors[~in_a[neighbors]][:cap]
            var_a = _cond_var_members(cov, x, obs, noise_variance)
            var_rest = _cond_var_members(cov, x, rest, noise_variance)
            delta[x] = _half_log_ratio(var_a, var_rest)
    return picked


def select_mi_alk_step(
    pool: Pool | None,
    a_indices,
    theta: Hyperparameters,
    eps_frac: float,
    cap: int | None,
    cov=None,
) -> int:
    """One adaptive-local-kernels pick under the current hyperparameters.

    The truncation threshold is `eps_frac` of the autocovariance, so it
    follows the refit signal variance; the exact-first-term, truncated-
    second-term split matches the greedy MI objective.
    """
    if not 0.0 <= eps_frac <= 1.0:
        raise ValueError("eps_frac must lie in [0, 1]")
    if eps_frac >= 1.0:
        warnings.warn(
            "eps_frac = 1 filters every neighbor; the selector degenerates to "
            "maximum conditional entropy",
            RuntimeWarning,
            stacklevel=2,
        )
    if cov is None:
        if pool is None:
            raise ValueError("either pool or cov is required")
        cov = kernel_matrix(pool.features, theta)
    lam = theta.signal_variance * eps_frac
    idx, _ = _mi_step_pick(cov, a_indices, theta.noise_variance, lam, cap)
    return idx


@dataclass(frozen=True)
class SelectorConfig:
    """Strategy plus its parameters.

    `epsilon` is a fraction of the autocovariance in [0, 1] for both
    local-kernel strategies (the fixed-kernel variant resolves it to an
    absolute threshold against the initial hyperparameters, following the
    convention that thresholds are quoted relative to K(x, x)).  `d` caps
    neighborhood sizes; None means the pool size.
    """

    strategy: str
    budget: int
    seed: int = 0
    epsilon: float = 0.0
    d: int | None = None
    refit: bool = True
    refit_restarts: int = 1
    refit_max_iters: int = 50
    restart_every: int = 1

    def __post_init__(self):
        canon = self.strategy.strip().lower().replace("_", "-")
        if canon not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; pick one of {STRATEGIES}")
        object.__setattr__(self, "strategy", canon)
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.d is not None and self.d < 1:
            raise ValueError("neighbor cap d must be at least 1")
        if canon == "mi-alk" and not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("mi-alk epsilon is a fraction in [0, 1]")


@dataclass(frozen=True)
class StepRecord:
    step: int
    index: int
    score: float
    wall_time: float
    theta: Hyperparameters
    mean: np.ndarray | None = None
    sd: np.ndarray | None = None


@dataclass
class SelectionTrace:
    config: SelectorConfig
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def indices(self) -> list[int]:
        return [s.index for s in self.steps]


class SequentialLearner:
    """Single active-learning session: recommend, observe, refit, predict.

    Both the batch loop and the campaign service drive this class, so a
    scripted label sequence produces identical recommendations either way.
    All randomness (initial hyperparameters, random picks, per-step refit
    restarts) derives from the config seed.
    """

    def __init__(self, pool: Pool, config: SelectorConfig, theta_init: Hyperparameters | None = None):
        if config.budget >= pool.size:
            raise ValueError("budget must be smaller than the pool")
        self.pool = pool
        self.config = config
        self._sq_diffs = pairwise_sq_diffs(pool.features)
        self.observed: dict[int, float] = {}
        self._pending: tuple[int, float] | None = None

        if theta_init is None:
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, _TAG_INIT]))
            theta_init = mle.random_init(rng, pool.features, np.empty(0), pool.ndim)
        elif theta_init.ndim != pool.ndim:
            raise ValueError("theta_init dimensionality does not match the pool")
        self.theta = theta_init
        self.theta_init = theta_init

        self._rnd_order: np.ndarray | None = None
        self._lk_order: list[int] | None = None
        if config.strategy == "rnd":
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, _TAG_RND]))
            self._rnd_order = rng.choice(pool.size, size=pool.size, replace=False)
        elif config.strategy == "mi-lk" and config.budget > 0:
            eps_abs = config.epsilon * theta_init.signal_variance
            self._lk_order = select_mi_lk(
                self.cov(theta_init),
                config.budget,
                eps_abs,
                config.d,
                theta_init.noise_variance,
            )

    def cov(self, theta: Hyperparameters | None = None) -> np.ndarray:
        K = kernel_from_sq_diffs(self._sq_diffs, theta or self.theta)
        return 0.5 * (K + K.T)

    @property
    def a_indices(self) -> np.ndarray:
        return np.fromiter(self.observed, dtype=int, count=len(self.observed))

    @property
    def budget_left(self) -> int:
        return self.config.budget - len(self.observed)

    def recommend(self) -> tuple[int, float]:
        """Next index to label and its selection score.

        Idempotent until the next `observe`; repeated calls return the same
        pending recommendation.
        """
        if self._pending is not None:
            return self._pending
        if self.budget_left <= 0:
            raise BudgetExhaustedError(f"budget of {self.config.budget} labels spent")
        if len(self.observed) >= self.pool.size:
            raise PoolExhaustedError("every pool point is observed")

        strategy = self.config.strategy
        a = self.a_indices
        if strategy == "rnd":
            idx = next(int(i) for i in self._rnd_order if i not in self.observed)
            score = math.nan
        elif strategy == "mi-lk":
            remaining = [i for i in self._lk_order if i not in self.observed]
            if remaining:
                idx, score = remaining[0], math.nan
            else:  # precomputed order exhausted by override labels
                idx, score = _mi_step_pick(
                    self.cov(self.theta_init),
                    a,
                    self.theta_init.noise_variance,
                    self.config.epsilon * self.theta_init.signal_variance,
                    self.config.d,
                )
        else:
            cov = self.cov()
            noise = self.theta.noise_variance
            if strategy == "alm":
                cand = np.flatnonzero(~np.isin(np.arange(self.pool.size), a))
                variances = conditional_variances(cand, a, cov, noise)
                pick = int(np.argmax(variances))
                idx, score = int(cand[pick]), float(variances[pick])
            elif strategy == "mi":
                idx, score = _mi_step_pick(cov, a, noise, 0.0, None)
            else:  # mi-alk
                lam = self.theta.signal_variance * self.config.epsilon
                idx, score = _mi_step_pick(cov, a, noise, lam, self.config.d)
        self._pending = (idx, float(score))
        return self._pending

    def observe(self, index: int, label: float, refit: bool | None = None) -> mle.MleResult | None:
        """Record a label, drop the pending recommendation, refit theta."""
        if self.budget_left <= 0:
            raise BudgetExhaustedError(f"budget of {self.config.budget} labels spent")
        if not 0 <= index < self.pool.size:
            raise KeyError(f"pool index {index} out of range")
        if index in self.observed:
            raise ValueError(f"point {index} already has a label")
        if not math.isfinite(label):
            raise ValueError("label must be finite")
        self.observed[index] = float(label)
        self._pending = None

        do_refit = self.config.refit if refit is None else refit
        if not do_refit or len(self.observed) < 2:
            return None
        return self._refit()

    def _refit(self) -> mle.MleResult:
        step = len(self.observed)
        a = self.a_indices
        X = self.pool.features[a]
        z, _, _ = standardize_labels([self.observed[int(i)] for i in a])
        restarts = (
            self.config.refit_restarts if step % max(1, self.config.restart_every) == 0 else 0
        )
        result = mle.fit(
            X,
            z,
            theta_init=self.theta,
            max_iters=self.config.refit_max_iters,
            restarts=restarts,
            seed=np.random.SeedSequence([self.config.seed, _TAG_REFIT, step]),
        )
        self.theta = result.theta
        return result

    def predictions(self, cov=None) -> Posterior:
        """Posterior mean/variance over the whole pool under current theta."""
        a = self.a_indices
        labels = [self.observed[int(i)] for i in a]
        if cov is None:
            cov = self.cov()
        return pool_posterior(cov, a, labels, self.theta.noise_variance)

    def clone(self) -> "SequentialLearner":
        """Independent copy for what-if exploration; shares immutable data."""
        dup = object.__new__(SequentialLearner)
        dup.pool = self.pool
        dup.config = self.config
        dup._sq_diffs = self._sq_diffs
        dup.observed = dict(self.observed)
        dup._pending = self._pending
        dup.theta = self.theta
        dup.theta_init = self.theta_init
        dup._rnd_order = self._rnd_order
        dup._lk_order = self._lk_order
        return dup


def run_active_loop(
    pool: Pool,
    oracle,
    config: SelectorConfig,
    theta_init: Hyperparameters | None = None,
    record_steps=None,
) -> SelectionTrace:
    """Run the full select/label/refit loop for the configured budget.

    `record_steps` limits the steps at which pool-wide predictions are
    stored (and, for the random baseline, at which theta is refit); None
    records every step.  Oracle failures raise `OracleError` with the
    partial trace attached.
    """
    learner = SequentialLearner(pool, config, theta_init)
    trace = SelectionTrace(config=config)
    recorded = None if record_steps is None else set(record_steps)
    for step in range(1, config.budget + 1):
        t0 = time.perf_counter()
        idx, score = learner.recommend()
        try:
            label = float(oracle(idx))
        except Exception as exc:
            raise OracleError(f"oracle failed at step {step} for index {idx}", trace) from exc
        record_this = recorded is None or step in recorded
        refit = None if config.strategy != "rnd" else (config.refit and record_this)
        learner.observe(idx, label, refit=refit)
        mean = sd = None
        if record_this:
            post = learner.predictions()
            mean, sd = post.mean, np.sqrt(post.variance)
        trace.steps.append(
            StepRecord(step, idx, score, time.perf_counter() - t0, learner.theta, mean, sd)
        )
    return trace
