"""Independent reference implementations used as test oracles.

Everything here is deliberately naive: explicit loops, `np.linalg.inv`,
scalar math.  These functions never call into the library's linear-algebra
paths, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np


def naive_rq(p, q, lengthscales, signal_variance, shape) -> float:
    """Scalar rational-quadratic covariance, term by term."""
    r = 0.0
    for pi, qi, li in zip(np.atleast_1d(p), np.atleast_1d(q), np.atleast_1d(lengthscales)):
        r += ((pi - qi) / li) ** 2
    return signal_variance * (1.0 + r / (2.0 * shape)) ** (-shape)


def naive_kernel(X, Z, theta, add_noise: bool = False) -> np.ndarray:
    """Entrywise kernel block via the scalar formula."""
    X = np.atleast_2d(X)
    Z = np.atleast_2d(Z)
    K = np.empty((X.shape[0], Z.shape[0]))
    for i in range(X.shape[0]):
        for j in range(Z.shape[0]):
            K[i, j] = naive_rq(
                X[i], Z[j], theta.lengthscales, theta.signal_variance, theta.shape
            )
    if add_noise:
        K[np.diag_indices_from(K)] += theta.noise_variance
    return K


def naive_standardize(y):
    y = np.asarray(y, dtype=float).ravel()
    mean = float(np.mean(y)) if y.size else 0.0
    scale = float(np.std(y)) if y.size else 1.0
    if scale == 0.0:
        scale = 1.0
    return (y - mean) / scale, mean, scale


def naive_posterior(X_train, y_train, X_query, theta):
    """Dense-inverse posterior with the same label standardization convention."""
    X_train = np.atleast_2d(X_train)
    X_query = np.atleast_2d(X_query)
    z, y_mean, y_scale = naive_standardize(y_train)
    S_aa = naive_kernel(X_train, X_train, theta, add_noise=True)
    S_inv = np.linalg.inv(S_aa)
    mean = np.empty(X_query.shape[0])
    var = np.empty(X_query.shape[0])
    for i in range(X_query.shape[0]):
        k_xa = naive_kernel(X_query[i : i + 1], X_train, theta)[0]
        mean[i] = y_mean + y_scale * (k_xa @ S_inv @ z)
        var[i] = y_scale**2 * (theta.signal_variance - k_xa @ S_inv @ k_xa)
    return mean, var


def naive_conditional_variance(x_idx, a_indices, cov, noise_variance) -> float:
    """Posterior variance from an explicit inverse of the conditioning block."""
    a = list(a_indices)
    if not a:
        return float(cov[x_idx, x_idx])
    S_aa = cov[np.ix_(a, a)] + noise_variance * np.eye(len(a))
    k_xa = cov[x_idx, a]
    return float(cov[x_idx, x_idx] - k_xa @ np.linalg.inv(S_aa) @ k_xa)


def naive_mi_score(x_idx, a_indices, cov, noise_variance) -> float:
    """Mutual-information gain of querying x: H(x|A) - H(x|complement)."""
    n = cov.shape[0]
    a = list(a_indices)
    rest = [i for i in range(n) if i != x_idx and i not in a]
    var_a = naive_conditional_variance(x_idx, a, cov, noise_variance)
    var_rest = naive_conditional_variance(x_idx, rest, cov, noise_variance)
    return 0.5 * math.log(2 * math.pi * math.e * var_a) - 0.5 * math.log(
        2 * math.pi * math.e * var_rest
    )


def greedy_mi_sequence(cov, noise_variance, budget) -> list[int]:
    """Exact greedy mutual-information pick order (ties: lowest index)."""
    n = cov.shape[0]
    picked: list[int] = []
    for _ in range(budget):
        best_idx, best_score = None, -math.inf
        for x in range(n):
            if x in picked:
                continue
            score = naive_mi_score(x, picked, cov, noise_variance)
            if best_idx is None or score > best_score:
                best_idx, best_score = x, score
        picked.append(best_idx)
    return picked


def naive_lml(X, y, theta) -> float:
    """Log marginal likelihood via explicit inverse and determinant."""
    X = np.atleast_2d(X)
    y = np.asarray(y, dtype=float).ravel()
    S = naive_kernel(X, X, theta, add_noise=True)
    sign, logdet = np.linalg.slogdet(S)
    assert sign > 0
    return float(
        -0.5 * y @ np.linalg.inv(S) @ y - 0.5 * logdet - 0.5 * y.size * math.log(2 * math.pi)
    )


def central_difference(f, x0, step):
    """Componentwise central finite-difference gradient of f at x0."""
    x0 = np.asarray(x0, dtype=float)
    g = np.empty_like(x0)
    for i in range(x0.size):
        hi = x0.copy()
        lo = x0.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (f(hi) - f(lo)) / (2.0 * step)
    return g


def linear_sdof_max_response(
    stiffness_extra: float,
    mass: float = 1.0,
    damping: float = 0.2,
    stiffness: float = 1.0,
    amplitude: float = 2.0,
    t_end: float = 10.0,
    samples: int = 200001,
) -> float:
    """Closed-form max displacement of m*u'' + c*u' + K*u = A*cos(t), zero ICs.

    K = stiffness + stiffness_extra.  Particular solution u_p = a*cos t +
    b*sin t; homogeneous part fixed by the initial conditions; the maximum is
    taken on a dense time grid of the closed-form trajectory.
    """
    K = stiffness + stiffness_extra
    m, c, A = mass, damping, amplitude
    # (K - m) a + c b = A ;  -c a + (K - m) b = 0   (forcing frequency = 1)
    den = (K - m) ** 2 + c**2
    a = A * (K - m) / den
    b = A * c / den
    wn = math.sqrt(K / m)
    zeta = c / (2.0 * math.sqrt(K * m))
    assert zeta < 1.0
    wd = wn * math.sqrt(1.0 - zeta**2)
    # u(0) = 0 and u'(0) = 0 fix the homogeneous constants
    c1 = -a
    c2 = (-b - zeta * wn * a) / wd
    t = np.linspace(0.0, t_end, samples)
    u = (
        a * np.cos(t)
        + b * np.sin(t)
        + np.exp(-zeta * wn * t) * (c1 * np.cos(wd * t) + c2 * np.sin(wd * t))
    )
    return float(np.max(u))
