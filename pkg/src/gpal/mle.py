"""Hyperparameter estimation by maximizing the log marginal likelihood.

The likelihood and its analytic gradient are evaluated against the RQ-ARD
kernel; optimization runs in log-parameter space (positivity is structural)
with a Polak-Ribiere nonlinear conjugate-gradient method and Wolfe line
search, optionally restarted from seeded random initializations.

Gradient order is canonical throughout: one entry per lengthscale, then
signal variance, noise variance, shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from gpal.gp import (
    Hyperparameters,
    NumericalDegeneracyError,
    cholesky_with_jitter,
    pairwise_sq_diffs,
)

__all__ = ["MleResult", "log_marginal_likelihood", "lml_gradient", "fit", "random_init"]

GRAD_TOL = 1e-6
PENALTY = 1e25
LOG_BOUND = 50.0  # |log parameter| beyond this is treated as divergence


@dataclass(frozen=True)
class MleResult:
    theta: Hyperparameters
    nlml: float
    iterations: int
    converged: bool
    restarts_used: int


def _pack(theta: Hyperparameters) -> np.ndarray:
    return np.log(
        np.concatenate(
            [
                theta.lengthscales,
                [theta.signal_variance, theta.noise_variance, theta.shape],
            ]
        )
    )


def _unpack(phi: np.ndarray, ndim: int) -> Hyperparameters:
    p = np.exp(phi)
    return Hyperparameters(
        lengthscales=p[:ndim],
        signal_variance=float(p[ndim]),
        noise_variance=float(p[ndim + 1]),
        shape=float(p[ndim + 2]),
    )


def _lml_and_grad(sq_diffs: np.ndarray, y: np.ndarray, theta: Hyperparameters):
    """Log marginal likelihood and its gradient w.r.t. the raw parameters.

    Returns (lml, grad) with grad ordered [l_1..l_m, sv, nv, shape].
    """
    m = sq_diffs.shape[0]
    n = y.size
    ls, sv, nv, a = theta.lengthscales, theta.signal_variance, theta.noise_variance, theta.shape

    r = np.tensordot(1.0 / ls**2, sq_diffs, axes=(0, 0))
    s = r / (2.0 * a)
    log_q = np.log1p(s)
    K = sv * np.exp(-a * log_q)
    S_aa = K + nv * np.eye(n)

    L, _ = cholesky_with_jitter(S_aa, scale=sv)
    alpha = cho_solve((L, True), y)
    inv = cho_solve((L, True), np.eye(n))
    lml = float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi)
    )

    # d(lml)/d(theta_j) = 0.5 * sum(W o dSigma_j), W = alpha alpha^T - Sigma^-1
    W = np.outer(alpha, alpha) - inv
    grad = np.empty(m + 3)
    wk_over_q = W * (K / (1.0 + s))
    grad[:m] = 0.5 * np.tensordot(wk_over_q, sq_diffs, axes=([0, 1], [1, 2])) / ls**3
    grad[m] = 0.5 * float(np.sum(W * K)) / sv
    grad[m + 1] = 0.5 * float(np.trace(W))
    # d/da of sv*Q^-a = K * (-ln Q + 1 - 1/Q); the 1 - 1/Q term comes from
    # Q's own dependence on the shape parameter
    grad[m + 2] = 0.5 * float(np.sum(W * K * (-log_q + 1.0 - 1.0 / (1.0 + s))))
    return lml, grad


def log_marginal_likelihood(X, y, theta: Hyperparameters) -> float:
    """Exact log marginal likelihood of the labels under the kernel."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("log marginal likelihood requires at least one point")
    lml, _ = _lml_and_grad(pairwise_sq_diffs(X), y, theta)
    return lml


def lml_gradient(X, y, theta: Hyperparameters) -> np.ndarray:
    """Analytic gradient of the log marginal likelihood.

    Ordered [d/dl_1 .. d/dl_m, d/d(signal_variance), d/d(noise_variance),
    d/d(shape)], all with respect to the raw (not log) parameters.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    _, grad = _lml_and_grad(pairwise_sq_diffs(X), y, theta)
    return grad


def random_init(rng, X, y, ndim: int | None = None) -> Hyperparameters:
    """Seeded random initialization, scaled to the data's standard deviations.

    Each parameter gets a log-uniform multiplier in [0.1, 10] applied to the
    matching scale: feature column sd for lengthscales, label sd for the
    signal and noise amplitudes, 1 for the shape.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    m = X.shape[1] if ndim is None else ndim
    lo, hi = math.log(0.1), math.log(10.0)

    def mult(size=None):
        return np.exp(rng.uniform(lo, hi, size=size))

    x_sd = np.std(X, axis=0) if X.shape[0] > 1 else np.ones(m)
    x_sd = np.where(x_sd > 0, x_sd, 1.0)
    y_sd = float(np.std(y)) if y.size > 1 else 1.0
    y_sd = y_sd if y_sd > 0 else 1.0
    return Hyperparameters(
        lengthscales=mult(m) * x_sd,
        signal_variance=(mult() * y_sd) ** 2,
        noise_variance=(mult() * y_sd) ** 2,
        shape=float(mult()),
    )


def fit(
    X,
    y,
    theta_init: Hyperparameters | None = None,
    max_iters: int = 100,
    restarts: int = 0,
    seed: int | None = None,
) -> MleResult:
    """Minimize the negative log marginal likelihood.

    `theta_init` seeds the first optimization; `restarts` adds that many
    random initializations (scaled to the data, drawn from `seed`).  The
    best optimum across starts wins, ties resolved by start order, so the
    result is deterministic per seed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, m = X.shape
    if n != y.size:
        raise ValueError("X and y lengths differ")
    rng = np.random.default_rng(seed)

    inits = []
    if theta_init is not None:
        if theta_init.ndim != m:
            raise ValueError("theta_init dimensionality does not match X")
        inits.append(theta_init)
    inits.extend(random_init(rng, X, y, m) for _ in range(restarts))
    if not inits:
        inits.append(random_init(rng, X, y, m))

    if n < 2:
        theta0 = inits[0]
        nlml0 = -log_marginal_likelihood(X, y, theta0) if n == 1 else math.nan
        return MleResult(theta0, nlml0, 0, False, len(inits))

    sq_diffs = pairwise_sq_diffs(X)

    def objective(phi):
        if np.any(np.abs(phi) > LOG_BOUND):
            return PENALTY, np.zeros_like(phi)
        theta = _unpack(phi, m)
        try:
            lml, grad = _lml_and_grad(sq_diffs, y, theta)
        except NumericalDegeneracyError:
            return PENALTY, np.zeros_like(phi)
        if not math.isfinite(lml):
            return PENALTY, np.zeros_like(phi)
        # chain rule into log space, negate for minimization
        raw = np.concatenate(
            [theta.lengthscales, [theta.signal_variance, theta.noise_variance, theta.shape]]
        )
        return -lml, -grad * raw

    best = None
    last_theta = inits[-1]
    for i, theta0 in enumerate(inits):
        phi0 = _pack(theta0)
        f0, _ = objective(phi0)
        res = minimize(
            objective,
            phi0,
            jac=True,
            method="CG",
            options={"maxiter": max_iters, "gtol": GRAD_TOL},
        )
        if res.fun <= f0 and np.all(np.abs(res.x) <= LOG_BOUND) and math.isfinite(res.fun):
            theta_f, nlml_f, nit, ok = _unpack(res.x, m), float(res.fun), res.nit, bool(res.success)
        else:
            theta_f, nlml_f, nit, ok = theta0, float(f0), 0, False
        last_theta = theta_f
        if nlml_f >= PENALTY:
            continue
        if best is None or nlml_f < best.nlml:
            best = MleResult(theta_f, nlml_f, nit, ok, len(inits))
    if best is None:
        err = NumericalDegeneracyError(
            "all restarts failed numerically during likelihood optimization"
        )
        err.last_theta = last_theta
        raise err
    return best
