"""Hysteretic-oscillator benchmark dataset.

A single-degree-of-freedom oscillator with a Bouc-Wen restoring force is
driven by a cosine load; the maximum displacement over the run is the
regression label.  Four shape parameters are sampled per realization, two
noisy copies and two pure-noise columns are appended, so the learner faces
eight input dimensions of which only four matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoucWenParams",
    "SdofDataset",
    "SimulationError",
    "FEATURE_COLUMNS",
    "LABEL_COLUMN",
    "sample_params",
    "simulate",
    "build_dataset",
    "write_csv",
]

MASS = 1.0
DAMPING = 0.2
STIFFNESS = 1.0
FORCING_AMPLITUDE = 2.0
T_END = 10.0
DT = 0.005
NOISE_VARIANCE = 0.0025  # sd 0.05, applied to the parameter copies and label

FEATURE_COLUMNS = ("s1", "s2", "s3", "s4", "s1n", "s2n", "g1", "g2")
LABEL_COLUMN = "label"


class SimulationError(RuntimeError):
    """The trajectory left the finite range for a parameter draw."""


@dataclass(frozen=True)
class BoucWenParams:
    """Admissible restoring-force shape parameters.

    s1 scales the elastic term, s2/s3 the hysteretic decay terms, s4 the
    smoothness exponent.  Admissibility: s1 > 0, |s3| <= s2, s4 >= 1.
    """

    s1: float
    s2: float
    s3: float
    s4: float

    def __post_init__(self):
        if not self.s1 > 0:
            raise ValueError(f"s1 must be positive, got {self.s1}")
        if abs(self.s3) > self.s2:
            raise ValueError(f"|s3| <= s2 required, got s2={self.s2}, s3={self.s3}")
        if self.s4 < 1:
            raise ValueError(f"s4 must be at least 1, got {self.s4}")

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3, self.s4])


def sample_params(rng, max_attempts: int = 1_000_000) -> BoucWenParams:
    """Draw admissible parameters: s1 ~ U(0.5, 2.5), s4 ~ U(1, 2), and
    (s2, s3) jointly redrawn from N(0, 1) until |s3| <= s2."""
    s1 = rng.uniform(0.5, 2.5)
    s4 = rng.uniform(1.0, 2.0)
    s2, s3, _ = _draw_s2_s3(rng, max_attempts)
    return BoucWenParams(s1=s1, s2=s2, s3=s3, s4=s4)


def _draw_s2_s3(rng, max_attempts: int = 1_000_000):
    """Rejection-sample the (s2, s3) pair; returns (s2, s3, attempts)."""
    for attempt in range(1, max_attempts + 1):
        s2 = rng.normal()
        s3 = rng.normal()
        if abs(s3) <= s2:
            return s2, s3, attempt
    raise SimulationError(f"no admissible (s2, s3) pair in {max_attempts} draws")


def _integrate(s: np.ndarray, forcing, t_end: float, dt: float) -> np.ndarray:
    """Classical fixed-step RK4 on the batched 3-state system [u, v, z].

    `s` has shape (n, 4).  Returns the per-system maximum of the signed
    displacement over the trajectory; the peak is refined by quadratic
    interpolation through the samples around the best one, so the label is
    insensitive to the sampling grid (halving dt moves it by far less than
    the step error).
    """
    s1, s2, s3, s4 = s[:, 0], s[:, 1], s[:, 2], s[:, 3]
    n = s.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    z = np.zeros(n)

    def rhs(t, u, v, z):
        du = v
        dv = (forcing(t) - DAMPING * v - STIFFNESS * u - z) / MASS
        abs_z = np.abs(z)
        dz = s1 * v - (s2 * z * abs_z ** (s4 - 1.0) * np.abs(v) + s3 * abs_z**s4 * v)
        return du, dv, dz

    steps = round(t_end / dt)
    hist = np.empty((steps + 1, n))
    hist[0] = u
    t = 0.0
    for k in range(steps):
        k1u, k1v, k1z = rhs(t, u, v, z)
        k2u, k2v, k2z = rhs(t + dt / 2, u + dt / 2 * k1u, v + dt / 2 * k1v, z + dt / 2 * k1z)
        k3u, k3v, k3z = rhs(t + dt / 2, u + dt / 2 * k2u, v + dt / 2 * k2v, z + dt / 2 * k2z)
        k4u, k4v, k4z = rhs(t + dt, u + dt * k3u, v + dt * k3v, z + dt * k3z)
        u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        z = z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        t += dt
        hist[k + 1] = u
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
        bad = np.flatnonzero(~(np.isfinite(u) & np.isfinite(z)))
        raise SimulationError(f"non-finite trajectory for parameter rows {bad.tolist()}")

    best = np.argmax(hist, axis=0)
    cols = np.arange(n)
    peak = hist[best, cols]
    interior = (best > 0) & (best < steps)
    if np.any(interior):
        i = best[interior]
        c = cols[interior]
        y0, y1, y2 = hist[i - 1, c], hist[i, c], hist[i + 1, c]
        a = 0.5 * (y0 + y2) - y1
        b = 0.5 * (y2 - y0)
        concave = a < 0
        refined = np.where(concave, y1 - np.divide(b**2, 4.0 * a, where=concave, out=np.zeros_like(a)), y1)
        peak[interior] = refined
    return peak


def simulate(
    params: BoucWenParams,
    forcing=None,
    t_end: float = T_END,
    dt: float = DT,
) -> float:
    """Maximum displacement of the driven oscillator from rest.

    Default forcing is FORCING_AMPLITUDE * cos(t) over [0, t_end].
    """
    if forcing is None:
        forcing = lambda t: FORCING_AMPLITUDE * math.cos(t)
    return float(_integrate(params.as_array()[None, :], forcing, t_end, dt)[0])


@dataclass(frozen=True)
class SdofDataset:
    """Feature table (n, 8), noisy labels, and the noise-free labels."""

    features: np.ndarray
    labels: np.ndarray
    clean_labels: np.ndarray
    seed: int

    @property
    def size(self) -> int:
        return self.features.shape[0]


def build_dataset(n: int = 400, seed: int = 0, dt: float = DT) -> SdofDataset:
    """Generate the benchmark dataset deterministically.

    Each row derives its randomness from (seed, row index), so regeneration
    is byte-identical and rows are independent.  Columns: the four shape
    parameters, noisy copies of the first two, two pure N(0, 1) columns.
    """
    params = np.empty((n, 4))
    noise = np.empty((n, 5))  # eps_s1, eps_s2, g1, g2, eps_label
    sd = math.sqrt(NOISE_VARIANCE)
    for row in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, row]))
        p = sample_params(rng)
        params[row] = p.as_array()
        noise[row, 0] = rng.normal(scale=sd)
        noise[row, 1] = rng.normal(scale=sd)
        noise[row, 2] = rng.normal()
        noise[row, 3] = rng.normal()
        noise[row, 4] = rng.normal(scale=sd)

    clean = _integrate(params, lambda t: FORCING_AMPLITUDE * math.cos(t), T_END, dt)
    features = np.column_stack(
        [
            params,
            params[:, 0] + noise[:, 0],
            params[:, 1] + noise[:, 1],
            noise[:, 2],
            noise[:, 3],
        ]
    )
    return SdofDataset(
        features=features, labels=clean + noise[:, 4], clean_labels=clean, seed=seed
    )


def write_csv(dataset: SdofDataset, path) -> None:
    """Serialize with 17 significant digits so a reload is bit-identical."""
    header = ",".join(FEATURE_COLUMNS + (LABEL_COLUMN,))
    rows = np.column_stack([dataset.features, dataset.labels])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
