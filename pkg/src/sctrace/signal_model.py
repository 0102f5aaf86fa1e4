"""RSS samples and the path-loss distance model.

The model maps received signal strength ``P`` (dBm) to distance ``d`` (m) via

    d = exp((1/n) * ln(1 / (P - c)))

whose algebraic inverse is ``P = c + d**(-n)``.  Both directions live here,
together with a damped Gauss-Newton (Levenberg-Marquardt) fit of ``(n, c)``
to per-distance mean RSS values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

CASES = ("HH", "HP", "HB", "PB", "PP", "BB")

DEFAULT_D_MAX = 20.0

# Hand-to-hand measurement statistics: distance (m), count, mean RSS (dBm), var RSS (dBm^2).
TABLE_II = (
    (0.2, 1548, -58.9994, 48.8203),
    (0.4, 1203, -62.9967, 9.8685),
    (0.6, 934, -70.3084, 10.7666),
    (0.8, 1080, -74.3167, 16.6930),
    (1.0, 1631, -79.3476, 14.3153),
    (1.2, 1573, -74.7788, 12.7322),
    (1.4, 3986, -80.6468, 41.5620),
    (1.6, 1282, -89.6599, 11.8577),
    (1.8, 1344, -79.4903, 4.8413),
    (2.0, 1101, -80.1835, 15.0263),
    (3.0, 886, -82.1704, 16.0150),
    (4.0, 1220, -88.5475, 10.7254),
    (5.0, 2115, -90.4591, 38.0261),
)

_T2 = np.array(TABLE_II, dtype=float)


class FitDegenerateError(ValueError):
    """Raised when the fit input cannot determine both coefficients."""


@dataclass(frozen=True, slots=True)
class RssSample:
    rss: float
    timestamp: float = 0.0
    true_distance: float | None = None
    tx_id: str = ""
    rx_id: str = ""
    case: str = "HH"
    elapsed: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.rss):
            raise ValueError(f"rss must be finite, got {self.rss}")
        if self.true_distance is not None and not self.true_distance > 0:
            raise ValueError(f"true_distance must be > 0, got {self.true_distance}")
        if self.elapsed < 0:
            raise ValueError(f"elapsed must be >= 0, got {self.elapsed}")


@dataclass(frozen=True, slots=True)
class DistanceStats:
    distance: float
    count: int
    mean_rss: float
    var_rss: float


@dataclass(frozen=True, slots=True)
class PathLossModel:
    n: float
    c: float

    def __post_init__(self):
        if not (math.isfinite(self.n) and self.n > 0):
            raise ValueError(f"path loss exponent must be > 0, got {self.n}")
        if not math.isfinite(self.c):
            raise ValueError(f"constant coefficient must be finite, got {self.c}")

    def predict_rss(self, distance):
        return predict_rss(self, distance)

    def estimate_distance(self, rss, d_max: float = DEFAULT_D_MAX) -> "DistanceEstimate":
        return estimate_distance(self, rss, d_max)


class DistanceEstimate(NamedTuple):
    distance: float
    saturated: bool


def predict_rss(model: PathLossModel, distance):
    """RSS in dBm expected at ``distance``; accepts scalars or arrays."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    out = model.c + d ** (-model.n)
    return float(out) if out.ndim == 0 else out


def estimate_distance(model: PathLossModel, rss: float, d_max: float = DEFAULT_D_MAX) -> DistanceEstimate:
    """Invert the model for one RSS reading.

    Readings at or below ``c`` have no real solution; they come back as
    ``d_max`` with ``saturated=True``.
    """
    excess = rss - model.c
    if not excess > 0:
        return DistanceEstimate(d_max, True)
    return DistanceEstimate(math.exp((1.0 / model.n) * math.log(1.0 / excess)), False)


def estimate_distances(model: PathLossModel, rss, d_max: float = DEFAULT_D_MAX):
    """Vectorised ``estimate_distance``; returns ``(distances, saturated_mask)``."""
    rss = np.asarray(rss, dtype=float)
    excess = rss - model.c
    saturated = ~(excess > 0)
    safe = np.where(saturated, 1.0, excess)
    d = np.exp((1.0 / model.n) * np.log(1.0 / safe))
    return np.where(saturated, d_max, d), saturated


def residual_sum_squares(model: PathLossModel, points) -> float:
    d, p = _points_arrays(points)
    r = model.c + d ** (-model.n) - p
    return float(r @ r)


def _points_arrays(points):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be a sequence of (distance, mean_rss) pairs")
    return arr[:, 0], arr[:, 1]


def fit_path_loss(points: Sequence[tuple[float, float]], max_iter: int = 200,
                  gtol: float = 1e-10) -> PathLossModel:
    """Least-squares fit of ``(n, c)`` to ``(distance, mean_rss)`` pairs.

    Levenberg-Marquardt from ``n0 = 2``, ``c0 = min(mean_rss) - 1``.
    """
    if len(points) < 2:
        raise FitDegenerateError("need at least two (distance, rss) points")
    d, p = _points_arrays(points)
    if np.any(d <= 0) or not np.all(np.isfinite(p)):
        raise ValueError("distances must be > 0 and RSS values finite")
    if np.unique(d).size < 2:
        raise FitDegenerateError("need at least two distinct distances")

    log_d = np.log(d)
    x = np.array([2.0, p.min() - 1.0])

    def residuals(x):
        return x[1] + np.exp(-x[0] * log_d) - p

    def jacobian(x):
        f = np.exp(-x[0] * log_d)
        return np.column_stack([-log_d * f, np.ones_like(d)])

    r = residuals(x)
    cost = r @ r
    lam = 1e-3
    for _ in range(max_iter):
        J = jacobian(x)
        g = J.T @ r
        if np.max(np.abs(g)) < gtol:
            break
        A = J.T @ J
        improved = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.diag(np.maximum(np.diag(A), 1e-12)), -g)
            trial = x + step
            if trial[0] > 0:
                r_trial = residuals(trial)
                cost_trial = r_trial @ r_trial
                if cost_trial <= cost:
                    improved = True
                    break
            lam *= 10.0
        if not improved:
            break
        small_step = np.all(np.abs(step) <= 1e-15 * (np.abs(x) + 1e-15))
        x, r, cost = trial, r_trial, cost_trial
        lam = max(lam / 10.0, 1e-12)
        if small_step:
            break
    return PathLossModel(n=float(x[0]), c=float(x[1]))


def synthesize_rss(model: PathLossModel, distance: float, noise_var: float, rng_seed=None, size=None):
    """Model RSS at ``distance`` plus zero-mean Gaussian noise of variance ``noise_var``.

    ``rng_seed`` may be an int or an existing ``numpy.random.Generator``.
    """
    if not distance > 0:
        raise ValueError("distance must be > 0")
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    mean = model.c + distance ** (-model.n)
    if noise_var == 0:
        return mean if size is None else np.full(size, mean)
    rng = np.random.default_rng(rng_seed)
    return mean + rng.normal(0.0, math.sqrt(noise_var), size=size)


def table2_variance(distance) -> float:
    """RSS variance at ``distance`` interpolated from the hand-to-hand statistics."""
    return np.interp(distance, _T2[:, 0], _T2[:, 3])


def table2_mean(distance) -> float:
    return np.interp(distance, _T2[:, 0], _T2[:, 2])


def table2_points() -> list[tuple[float, float]]:
    return [(row[0], row[2]) for row in TABLE_II]


def reference_model() -> PathLossModel:
    """Model fitted to the published hand-to-hand per-distance means."""
    return fit_path_loss(table2_points())


def save_model(model: PathLossModel, path) -> None:
    Path(path).write_text(f"n={model.n!r}\nc={model.c!r}\n")


def load_model(path) -> PathLossModel:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"malformed model line: {line!r}")
        values[key.strip()] = float(val)
    try:
        return PathLossModel(n=values["n"], c=values["c"])
    except KeyError as exc:
        raise ValueError(f"model file {path} is missing {exc.args[0]!r}") from None
