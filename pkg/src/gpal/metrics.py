"""Prediction-quality and representativeness metrics.

SMSE and the correlation coefficient score predictions against truths; AUC
condenses a learning curve into one number (lower is better for SMSE).
Representativeness is measured by each testing point's maximum normalized
covariance to the training set, smoothed into a density on [0, 1] with
truncated normal kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from gpal.gp import Hyperparameters, kernel_cross
from gpal.selectors import Pool

__all__ = [
    "LearningCurve",
    "SimilarityPdf",
    "smse",
    "cc",
    "auc",
    "cov_max",
    "cov_max_testing",
    "truncated_normal_pdf",
    "similarity_pdf",
]

SIMILARITY_SIGMA = 0.01  # smoothing constant for the similarity density
PDF_GRID_POINTS = 1001


@dataclass(frozen=True)
class LearningCurve:
    """Metric values indexed by training-set size."""

    steps: np.ndarray
    values: np.ndarray
    realization: int = 0

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if steps.size != values.size:
            raise ValueError("steps and values lengths differ")
        if steps.size and np.any(np.diff(steps) <= 0):
            raise ValueError("steps must be strictly increasing")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "values", values)


def smse(predictions, truths, population_variance: bool = True, printed_form: bool = False):
    """Standardized mean squared error.

    Default: mean of squared residuals over the variance of the truths
    (population convention).  `printed_form` squares the *sum* of residuals
    instead — kept for auditability against sources that typeset it that
    way; not the default because the mean-of-squares form is what the name
    and reference behavior imply.
    """
    mu = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(truths, dtype=float).ravel()
    if mu.size != y.size or y.size < 2:
        raise ValueError("need equally sized prediction/truth vectors of length >= 2")
    var = float(np.var(y, ddof=0 if population_variance else 1))
    if var <= 0:
        raise ValueError("truths have zero variance")
    resid = mu - y
    if printed_form:
        return float(np.sum(resid) ** 2 / resid.size / var)
    return float(np.mean(resid**2) / var)


def cc(predictions, truths) -> float:
    """Correlation coefficient with the (n-1) normalization and sample SDs."""
    mu = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(truths, dtype=float).ravel()
    if mu.size != y.size or y.size < 2:
        raise ValueError("need equally sized prediction/truth vectors of length >= 2")
    sd_mu = float(np.std(mu, ddof=1))
    sd_y = float(np.std(y, ddof=1))
    if sd_mu == 0 or sd_y == 0:
        raise ValueError("correlation undefined for constant vectors")
    zm = (mu - np.mean(mu)) / sd_mu
    zy = (y - np.mean(y)) / sd_y
    return float(np.sum(zm * zy) / (mu.size - 1))


def auc(curve: LearningCurve, start_step: float = 75) -> float:
    """Trapezoidal area under the curve from `start_step` onward.

    The curve is treated as piecewise linear; when `start_step` falls
    between recorded steps the value there is interpolated.
    """
    steps, values = curve.steps, curve.values
    if steps.size < 2 or steps[0] > start_step or steps[-1] <= start_step:
        raise ValueError(
            f"curve over [{steps[0] if steps.size else '-'}, "
            f"{steps[-1] if steps.size else '-'}] does not cover start {start_step}"
        )
    keep = steps >= start_step
    xs = steps[keep]
    ys = values[keep]
    if xs[0] > start_step:
        y0 = float(np.interp(start_step, steps, values))
        xs = np.concatenate([[start_step], xs])
        ys = np.concatenate([[y0], ys])
    return float(np.trapezoid(ys, xs))


def cov_max(x_index: int, a_indices, pool: Pool, theta: Hyperparameters) -> float:
    """Maximum normalized covariance of a testing point to the training set.

    Normalization divides by the autocovariance (noise excluded) so the
    similarity lands in (0, 1]; 1 means the point has a training twin.
    """
    a = np.asarray(a_indices, dtype=int)
    if a.size == 0:
        raise ValueError("cov_max needs a non-empty training set")
    k = kernel_cross(pool.features[x_index : x_index + 1], pool.features[a], theta)[0]
    return float(np.max(k) / theta.signal_variance)


def cov_max_testing(pool: Pool, a_indices, theta: Hyperparameters) -> np.ndarray:
    """`cov_max` for every point outside the training set, in index order."""
    a = np.asarray(a_indices, dtype=int)
    if a.size == 0:
        raise ValueError("cov_max needs a non-empty training set")
    mask = np.ones(pool.size, dtype=bool)
    mask[a] = False
    testing = np.flatnonzero(mask)
    k = kernel_cross(pool.features[testing], pool.features[a], theta)
    return np.max(k, axis=1) / theta.signal_variance


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def _cap_phi(x):
    return 0.5 * (1.0 + erf(np.asarray(x) / math.sqrt(2.0)))


def truncated_normal_pdf(x, mu: float, sigma: float, lower: float, upper: float):
    """Density of a normal truncated to [lower, upper]; zero outside."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not lower < upper:
        raise ValueError("lower bound must be below upper bound")
    x = np.asarray(x, dtype=float)
    mass = _cap_phi((upper - mu) / sigma) - _cap_phi((lower - mu) / sigma)
    dens = _phi((x - mu) / sigma) / (sigma * mass)
    dens = np.where((x < lower) | (x > upper), 0.0, dens)
    return float(dens) if dens.ndim == 0 else dens


@dataclass(frozen=True)
class SimilarityPdf:
    """Smoothed distribution of max training-set similarity on [0, 1]."""

    grid: np.ndarray
    density: np.ndarray
    step: int | None = None

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def mean(self) -> float:
        return float(np.trapezoid(self.grid * self.density, self.grid))

    def sd(self) -> float:
        second = float(np.trapezoid(self.grid**2 * self.density, self.grid))
        return math.sqrt(max(second - self.mean() ** 2, 0.0))

    def mass_below(self, threshold: float) -> float:
        keep = self.grid <= threshold
        return float(np.trapezoid(self.density[keep], self.grid[keep]))


def similarity_pdf(
    values,
    sigma: float = SIMILARITY_SIGMA,
    grid_points: int = PDF_GRID_POINTS,
    step: int | None = None,
) -> SimilarityPdf:
    """Average of per-point truncated normal spikes on [0, 1].

    `values` is one realization's max-similarity vector or a sequence of
    such vectors; realizations are weighted equally.
    """
    if isinstance(values, (list, tuple)) and len(values) and np.ndim(values[0]) >= 1:
        realizations = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values]
    else:
        realizations = [np.atleast_1d(np.asarray(values, dtype=float))]
    grid = np.linspace(0.0, 1.0, grid_points)
    total = np.zeros_like(grid)
    for vals in realizations:
        if np.any((vals < 0) | (vals > 1)):
            raise ValueError("similarity values must lie in [0, 1]")
        mass = _cap_phi((1.0 - vals) / sigma) - _cap_phi((0.0 - vals) / sigma)
        spikes = _phi((grid[None, :] - vals[:, None]) / sigma) / (sigma * mass[:, None])
        total += spikes.mean(axis=0)
    return SimilarityPdf(grid=grid, density=total / len(realizations), step=step)
