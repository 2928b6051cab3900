"""Rational-quadratic ARD kernel and exact Gaussian-process posteriors.

All functions here are pure: they take arrays plus a hyperparameter record
and return new arrays.  Factorizations go through `cholesky_with_jitter`,
which escalates a diagonal jitter before giving up, so callers see a single
failure mode (`NumericalDegeneracyError`) for ill-conditioned systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

__all__ = [
    "Hyperparameters",
    "Posterior",
    "NumericalDegeneracyError",
    "rq_kernel",
    "kernel_matrix",
    "kernel_cross",
    "posterior",
    "pool_posterior",
    "conditional_variance",
    "conditional_variances",
    "entropy",
    "standardize_labels",
    "cholesky_with_jitter",
]

# Variances in [-VAR_CLAMP, 0) are rounding noise and snap to 0; anything
# more negative indicates a real numerical problem and raises.
VAR_CLAMP = 1e-10

JITTER_START = 1e-10
JITTER_STOP = 1e-4


class NumericalDegeneracyError(RuntimeError):
    """The observed set produced a covariance that cannot be factorized."""


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel parameters: per-dimension lengthscales, signal variance,
    shape exponent of the rational-quadratic form, and observation noise."""

    lengthscales: np.ndarray
    signal_variance: float
    shape: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a non-empty 1-D vector")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be strictly positive")
        for name in ("signal_variance", "shape", "noise_variance"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be strictly positive, got {v!r}")

    @property
    def ndim(self) -> int:
        return self.lengthscales.size

    def replace(self, **changes) -> "Hyperparameters":
        kw = dict(
            lengthscales=self.lengthscales,
            signal_variance=self.signal_variance,
            shape=self.shape,
            noise_variance=self.noise_variance,
        )
        kw.update(changes)
        return Hyperparameters(**kw)

    def as_dict(self) -> dict:
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "signal_variance": float(self.signal_variance),
            "shape": float(self.shape),
            "noise_variance": float(self.noise_variance),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(
            lengthscales=np.asarray(d["lengthscales"], dtype=float),
            signal_variance=float(d["signal_variance"]),
            shape=float(d["shape"]),
            noise_variance=float(d["noise_variance"]),
        )


@dataclass(frozen=True)
class Posterior:
    """Predictive mean and (non-negative) variance per query point."""

    mean: np.ndarray
    variance: np.ndarray


def _check_dim(x: np.ndarray, theta: Hyperparameters, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    width = x.shape[-1] if x.ndim > 1 else x.size
    if width != theta.ndim:
        raise ValueError(
            f"{what} has {width} dimensions but theta has {theta.ndim} lengthscales"
        )
    return x


def rq_kernel(p, q, theta: Hyperparameters) -> float:
    """Covariance between two feature vectors.

    k(p, q) = sv * (1 + r / (2 a))^(-a) with r the lengthscale-weighted
    squared distance, sv the signal variance and a the shape exponent.
    """
    p = _check_dim(np.atleast_1d(p), theta, "p")
    q = _check_dim(np.atleast_1d(q), theta, "q")
    # fsum keeps the distance accumulation compensated for near-duplicates
    r = math.fsum(((pi - qi) / li) ** 2 for pi, qi, li in zip(p, q, theta.lengthscales))
    return theta.signal_variance * math.exp(-theta.shape * math.log1p(r / (2.0 * theta.shape)))


def pairwise_sq_diffs(X, Z=None) -> np.ndarray:
    """Stack of per-dimension squared differences, shape (m, n1, n2).

    Computed once per feature matrix and reused across hyperparameter
    evaluations (kernel builds and likelihood gradients slice it instead of
    recomputing distances).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = X if Z is None else np.atleast_2d(np.asarray(Z, dtype=float))
    diff = X[None, :, :].transpose(2, 1, 0) - Z[None, :, :].transpose(2, 0, 1)
    return diff**2


def kernel_from_sq_diffs(sq_diffs: np.ndarray, theta: Hyperparameters) -> np.ndarray:
    """Kernel block from a precomputed `pairwise_sq_diffs` stack."""
    if sq_diffs.shape[0] != theta.ndim:
        raise ValueError("sq_diffs stack does not match theta dimensionality")
    inv_l2 = 1.0 / theta.lengthscales**2
    r = np.tensordot(inv_l2, sq_diffs, axes=(0, 0))
    return theta.signal_variance * np.exp(-theta.shape * np.log1p(r / (2.0 * theta.shape)))


def kernel_matrix(X, theta: Hyperparameters, add_noise: bool = False) -> np.ndarray:
    """Symmetric covariance matrix over the rows of X.

    With `add_noise`, the observation noise variance is added on the
    diagonal (the conditioning block of the posterior equations).
    """
    X = _check_dim(np.atleast_2d(X), theta, "X")
    if X.shape[0] == 0:
        raise ValueError("X must contain at least one point")
    K = kernel_from_sq_diffs(pairwise_sq_diffs(X), theta)
    # enforce exact symmetry against floating-point asymmetry in the reduction
    K = 0.5 * (K + K.T)
    if add_noise:
        K[np.diag_indices_from(K)] += theta.noise_variance
    return K


def kernel_cross(X, Z, theta: Hyperparameters) -> np.ndarray:
    """Rectangular covariance block K(X, Z), never noised."""
    X = _check_dim(np.atleast_2d(X), theta, "X")
    Z = _check_dim(np.atleast_2d(Z), theta, "Z")
    return kernel_from_sq_diffs(pairwise_sq_diffs(X, Z), theta)


def cholesky_with_jitter(mat: np.ndarray, scale: float | None = None):
    """Lower Cholesky factor of `mat`, escalating diagonal jitter on failure.

    Jitter starts at 1e-10 * scale and doubles up to 1e-4 * scale before
    raising `NumericalDegeneracyError`.  `scale` defaults to the largest
    diagonal entry.

    Returns (L, jitter_used).
    """
    mat = np.asarray(mat, dtype=float)
    if scale is None:
        scale = max(float(np.max(np.diag(mat))), np.finfo(float).tiny)
    try:
        return cholesky(mat, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START * scale
    eye = np.eye(mat.shape[0])
    while jitter <= JITTER_STOP * scale:
        try:
            return cholesky(mat + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise NumericalDegeneracyError(
        f"covariance of the observed set is numerically degenerate "
        f"(not positive definite after jitter escalation to {JITTER_STOP * scale:.3g})"
    )


def clamp_variance(var):
    """Snap tiny negative variances (cancellation) to zero; raise otherwise."""
    var = np.asarray(var, dtype=float)
    bad = var < -VAR_CLAMP
    if np.any(bad):
        worst = float(var[bad].min())
        raise NumericalDegeneracyError(
            f"posterior variance {worst:.3g} is negative beyond the clamp window"
        )
    return np.where(var < 0.0, 0.0, var)


def standardize_labels(y):
    """Shift/scale labels to zero mean, unit population variance.

    Returns (z, mean, scale); scale falls back to 1 for constant or
    single-point label sets.  Shared by the posterior and the likelihood
    fitting path so both see the same standardized values.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        return y, 0.0, 1.0
    mean = float(np.mean(y))
    scale = float(np.std(y))
    if scale == 0.0 or not math.isfinite(scale):
        scale = 1.0
    return (y - mean) / scale, mean, scale


def posterior(X_train, y_train, X_query, theta: Hyperparameters) -> Posterior:
    """Exact GP posterior at the query points.

    Labels are standardized internally (zero-mean prior over standardized
    labels); outputs are de-standardized.  One Cholesky factorization of the
    training covariance is reused for every query point.
    """
    X_query = _check_dim(np.atleast_2d(X_query), theta, "X_query")
    X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
    y_train = np.asarray(y_train, dtype=float).ravel()
    if X_train.size == 0 or X_train.shape[0] == 0:
        prior_var = np.full(X_query.shape[0], theta.signal_variance)
        return Posterior(mean=np.zeros(X_query.shape[0]), variance=prior_var)
    _check_dim(X_train, theta, "X_train")
    if X_train.shape[0] != y_train.size:
        raise ValueError("X_train and y_train lengths differ")

    z, y_mean, y_scale = standardize_labels(y_train)
    K_aa = kernel_matrix(X_train, theta, add_noise=True)
    L, _ = cholesky_with_jitter(K_aa, scale=theta.signal_variance)
    K_qa = kernel_cross(X_query, X_train, theta)

    alpha = cho_solve((L, True), z)
    mean_std = K_qa @ alpha
    v = solve_triangular(L, K_qa.T, lower=True)
    var_std = theta.signal_variance - np.einsum("ij,ij->j", v, v)
    var_std = clamp_variance(var_std)
    return Posterior(mean=y_mean + y_scale * mean_std, variance=y_scale**2 * var_std)


def pool_posterior(cov: np.ndarray, a_indices, y_a, noise_variance: float) -> Posterior:
    """Posterior over every pool point from a precomputed pool covariance.

    `cov` is the noise-free covariance over the whole pool; `a_indices` are
    the observed rows with labels `y_a`.  Same standardization convention as
    `posterior`.
    """
    n = cov.shape[0]
    a = np.asarray(a_indices, dtype=int)
    y_a = np.asarray(y_a, dtype=float).ravel()
    if a.size == 0:
        return Posterior(mean=np.zeros(n), variance=np.diag(cov).copy())
    if a.size != y_a.size:
        raise ValueError("a_indices and y_a lengths differ")

    z, y_mean, y_scale = standardize_labels(y_a)
    K_aa = cov[np.ix_(a, a)].copy()
    K_aa[np.diag_indices_from(K_aa)] += noise_variance
    L, _ = cholesky_with_jitter(K_aa, scale=float(np.max(np.diag(cov))))
    K_qa = cov[:, a]
    alpha = cho_solve((L, True), z)
    mean_std = K_qa @ alpha
    v = solve_triangular(L, K_qa.T, lower=True)
    var_std = np.diag(cov) - np.einsum("ij,ij->j", v, v)
    var_std = clamp_variance(var_std)
    return Posterior(mean=y_mean + y_scale * mean_std, variance=y_scale**2 * var_std)


def conditional_variances(
    candidates, a_indices, cov: np.ndarray, noise_variance: float
) -> np.ndarray:
    """Posterior variances of `candidates` given the observed rows `a_indices`.

    Label-free: depends only on the pool covariance.  One factorization of
    the observed block serves every candidate.
    """
    cand = np.asarray(candidates, dtype=int)
    a = np.asarray(a_indices, dtype=int)
    prior = np.diag(cov)[cand].astype(float)
    if a.size == 0:
        return prior.copy()
    K_aa = cov[np.ix_(a, a)].copy()
    K_aa[np.diag_indices_from(K_aa)] += noise_variance
    L, _ = cholesky_with_jitter(K_aa, scale=float(np.max(np.diag(cov))))
    v = solve_triangular(L, cov[np.ix_(a, cand)], lower=True)
    return clamp_variance(prior - np.einsum("ij,ij->j", v, v))


def conditional_variance(
    x_idx: int, a_indices, cov: np.ndarray, noise_variance: float = 0.0
) -> float:
    """Variance of pool point `x_idx` conditioned on the rows `a_indices`."""
    a = np.asarray(a_indices, dtype=int)
    if x_idx in set(a.tolist()):
        raise ValueError(f"point {x_idx} is already in the conditioning set")
    return float(conditional_variances([x_idx], a, cov, noise_variance)[0])


def entropy(variance: float) -> float:
    """Differential entropy of a Gaussian with the given variance."""
    if variance <= 0:
        raise ValueError(f"entropy requires a positive variance, got {variance!r}")
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)
