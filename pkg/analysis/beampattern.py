"""
Normalized far-field array response and phase-compensation steering weights.

    f_w(θ) = (1 / Σ|w_n|) Σ w_n exp(j2π(x_n sinθ + y_n cosθ))

Positions are in wavelength units, so λ never appears explicitly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from analysis.errors import InvalidArgumentError
from analysis.geometry import ArrayLayout, MultiLinearTopology

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
DEFAULT_FOV_DEG = (-90.0, 90.0)
PATTERN_COLUMNS = ["theta_s_deg", "theta_deg", "magnitude"]


# ==================================================
# TYPES
# ==================================================
@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=complex, copy=True).reshape(-1)
        if w.size < 1 or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("weights must be a non-empty finite vector")
        if np.sum(np.abs(w)) <= 0:
            raise InvalidArgumentError("weights must have Σ|w_n| > 0")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return int(self.weights.size)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.weights)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.weights)))


@dataclass(frozen=True, eq=False)
class PatternGrid:
    """|f| indexed [steer][obs]; complex values kept only on request."""
    steer_angles: np.ndarray
    obs_angles: np.ndarray
    magnitude: np.ndarray
    complex_values: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per (steer, obs) cell, steer-major."""
        n_steer, n_obs = self.magnitude.shape
        return pd.DataFrame(
            {
                "theta_s_deg": np.repeat(np.rad2deg(self.steer_angles), n_obs),
                "theta_deg": np.tile(np.rad2deg(self.obs_angles), n_steer),
                "magnitude": self.magnitude.reshape(-1),
            }
        )


# ==================================================
# HELPERS
# ==================================================
def _check_lengths(layout: ArrayLayout, w: WeightVector) -> None:
    if len(layout) != len(w):
        raise InvalidArgumentError(
            f"weight vector has {len(w)} entries but layout has {len(layout)} elements"
        )


def _phase(layout: ArrayLayout, thetas: np.ndarray) -> np.ndarray:
    """2π(x sinθ + y cosθ), shape (len(thetas), N)."""
    thetas = np.asarray(thetas, dtype=float).reshape(-1, 1)
    return TWO_PI * (layout.x[None, :] * np.sin(thetas) + layout.y[None, :] * np.cos(thetas))


def _check_magnitudes(magnitudes: Optional[Sequence[float]], n: int) -> np.ndarray:
    if magnitudes is None:
        return np.ones(n)
    mags = np.asarray(magnitudes, dtype=float).reshape(-1)
    if mags.size != n:
        raise InvalidArgumentError(f"expected {n} magnitudes, got {mags.size}")
    if not np.all(np.isfinite(mags)) or np.any(mags <= 0):
        raise InvalidArgumentError("magnitudes must be finite and > 0")
    return mags


def angle_grid(count: int, fov_deg: Tuple[float, float] = DEFAULT_FOV_DEG) -> np.ndarray:
    """
    Inclusive uniform grid in radians. Built in degrees first so that grids
    whose step divides another's share bit-identical samples.
    """
    lo, hi = float(fov_deg[0]), float(fov_deg[1])
    if count < 1:
        raise InvalidArgumentError(f"grid count must be >= 1, got {count}")
    if count > 1 and not hi > lo:
        raise InvalidArgumentError(f"field of view must be increasing, got {fov_deg}")
    return np.deg2rad(np.linspace(lo, hi, int(count)))


def _check_grid(name: str, grid: Sequence[float]) -> np.ndarray:
    arr = np.asarray(grid, dtype=float).reshape(-1)
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} must not be empty")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise InvalidArgumentError(f"{name} must be strictly increasing")
    return arr


# ==================================================
# WEIGHTS / RESPONSE
# ==================================================
def steering_weights(
    layout: ArrayLayout,
    theta_s: float,
    magnitudes: Optional[Sequence[float]] = None,
) -> WeightVector:
    """Phase-difference compensation; unit magnitudes by default."""
    mags = _check_magnitudes(magnitudes, len(layout))
    phase = _phase(layout, np.array([theta_s]))[0]
    return WeightVector(mags * np.exp(-1j * phase))


def response_many(layout: ArrayLayout, w: WeightVector, thetas: Sequence[float]) -> np.ndarray:
    """f_w at every angle in `thetas`; sums run in element-index order."""
    _check_lengths(layout, w)
    phasors = np.exp(1j * _phase(layout, np.asarray(thetas, dtype=float)))
    return (phasors * w.weights[None, :]).sum(axis=1) / w.norm


def response(layout: ArrayLayout, w: WeightVector, theta: float) -> complex:
    return complex(response_many(layout, w, [theta])[0])


def multilinear_response(t: MultiLinearTopology, w: WeightVector, theta: float) -> complex:
    """
    Factored form: each sub-array contributes its leading-element phasor times
    a harmonic sum in d_m sinθ.
    """
    if len(w) != t.size:
        raise InvalidArgumentError(
            f"weight vector has {len(w)} entries but topology has {t.size} elements"
        )
    s, c = np.sin(theta), np.cos(theta)
    total = 0j
    start = 0
    for sub in t.subarrays:
        block = w.weights[start : start + sub.count]
        n = np.arange(sub.count)
        harmonic = (block * np.exp(1j * TWO_PI * n * sub.spacing_d * s)).sum()
        lead = np.exp(1j * TWO_PI * (sub.leading.x * s + sub.leading.y * c))
        total += lead * harmonic
        start += sub.count
    return complex(total / w.norm)


# ==================================================
# SWEEPS
# ==================================================
def _sweep_row(
    phasors: np.ndarray,
    layout: ArrayLayout,
    theta_s: float,
    mags: np.ndarray,
) -> np.ndarray:
    w = steering_weights(layout, theta_s, mags)
    return (phasors * w.weights[None, :]).sum(axis=1) / w.norm


def pattern_sweep(
    layout: ArrayLayout,
    steer_grid: Sequence[float],
    obs_grid: Sequence[float],
    magnitudes: Optional[Sequence[float]] = None,
    *,
    keep_complex: bool = False,
    n_jobs: int = 1,
    evaluate_on: Optional[ArrayLayout] = None,
) -> PatternGrid:
    """
    |f| for every (steer, obs) pair. Rows are independent and may run on
    several threads; each cell's sum is sequential, so results do not depend
    on n_jobs.

    Weights are always computed from `layout`; `evaluate_on` (same size)
    gives the actual element positions, e.g. a perturbed copy.
    """
    steer = _check_grid("steer_grid", steer_grid)
    obs = _check_grid("obs_grid", obs_grid)
    mags = _check_magnitudes(magnitudes, len(layout))
    actual = layout if evaluate_on is None else evaluate_on
    if len(actual) != len(layout):
        raise InvalidArgumentError("evaluate_on must have as many elements as layout")
    phasors = np.exp(1j * _phase(actual, obs))

    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_sweep_row)(phasors, layout, ts, mags) for ts in steer
    )
    values = np.vstack(rows)
    logger.debug(
        "pattern sweep done",
        extra={"n_steer": int(steer.size), "n_obs": int(obs.size), "n_elements": len(layout)},
    )
    return PatternGrid(
        steer_angles=steer,
        obs_angles=obs,
        magnitude=np.abs(values),
        complex_values=values if keep_complex else None,
    )


# ==================================================
# LOBE STRUCTURE
# ==================================================
def main_lobe_bounds(magnitude: np.ndarray, peak_index: int) -> Tuple[int, int]:
    """
    Indices of the first local minima left and right of the peak (inclusive).
    A side that never turns upward extends to the grid edge.
    """
    mag = np.asarray(magnitude, dtype=float)
    left = peak_index
    while left > 0 and mag[left - 1] <= mag[left]:
        left -= 1
    right = peak_index
    while right < mag.size - 1 and mag[right + 1] <= mag[right]:
        right += 1
    return left, right


def nearest_index(grid: np.ndarray, angle: float) -> int:
    return int(np.argmin(np.abs(np.asarray(grid) - angle)))


def summarize_pattern(
    grid: PatternGrid,
    grating_angles: Optional[List[List[float]]] = None,
) -> Dict[str, Any]:
    """
    Per-steer side-lobe statistics plus aggregates.
    grating_angles[i] holds the scan result (radians) of steer row i.
    """
    per_steer = []
    obs_deg = np.rad2deg(grid.obs_angles)
    for i, theta_s in enumerate(grid.steer_angles):
        row = grid.magnitude[i]
        peak = nearest_index(grid.obs_angles, theta_s)
        left, right = main_lobe_bounds(row, peak)
        outside = np.ones(row.size, dtype=bool)
        outside[left : right + 1] = False
        sidelobe = float(row[outside].max()) if outside.any() else 0.0
        lobes = grating_angles[i] if grating_angles is not None else []
        per_steer.append(
            {
                "theta_s_deg": float(np.rad2deg(theta_s)),
                "max_sidelobe": sidelobe,
                "main_lobe_width_deg": float(obs_deg[right] - obs_deg[left]),
                "grating_lobe_angles_deg": [float(np.rad2deg(a)) for a in lobes],
            }
        )

    return {
        "max_sidelobe": max(r["max_sidelobe"] for r in per_steer),
        "main_lobe_width_deg": {
            "min": min(r["main_lobe_width_deg"] for r in per_steer),
            "max": max(r["main_lobe_width_deg"] for r in per_steer),
        },
        "grating_lobe_angles": [r["grating_lobe_angles_deg"] for r in per_steer],
        "steer_with_grating_lobes": sum(1 for r in per_steer if r["grating_lobe_angles_deg"]),
        "per_steer": per_steer,
    }
