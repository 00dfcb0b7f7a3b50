"""
Positional perturbations of a steered array.

Each element is displaced by an independent bivariate Gaussian (Δx, Δy) with
covariance Σ_n (wavelength² units). With u = (sinθ, cosθ):

- at the steering angle the perturbed response has the exact mean
  Σ|w| exp(-2π² uᵀΣu) / Σ|w| and variance Σ|w|²(1 - exp(-4π² uᵀΣu)) / (Σ|w|)²;
- elsewhere the first-order fluctuation Δf is zero-mean Gaussian with
  variance (2π)² Σ|w|² uᵀΣu / (Σ|w|)².

Complex variance is E|X - EX|² throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from analysis.beampattern import (
    TWO_PI,
    WeightVector,
    _check_magnitudes,
    _phase,
    response_many,
    steering_weights,
)
from analysis.errors import InvalidArgumentError
from analysis.geometry import ArrayLayout, equilateral_dual, expand_topology

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]

DEFAULT_TRIALS = 500
TRIAL_CHUNK = 256
PSD_TOL = 1e-12
STATS_COLUMNS = ["theta_deg", "analytic_mean_abs", "analytic_var", "mc_mean_abs", "mc_var", "mean_abs_fluct"]

LAW_EXACT = "exact"
LAW_LINEARIZED = "linearized"


# ==================================================
# TYPES
# ==================================================
@dataclass(frozen=True, eq=False)
class PerturbationModel:
    """
    Either a shared isotropic σ (Σ_n = σ²I) or explicit covariances of shape
    (2, 2) shared by every element or (N, 2, 2) per element.
    """
    sigma: Optional[float] = None
    covariances: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if (self.sigma is None) == (self.covariances is None):
            raise InvalidArgumentError("give exactly one of sigma or covariances")
        if self.sigma is not None:
            if not math.isfinite(self.sigma) or self.sigma < 0:
                raise InvalidArgumentError(f"sigma must be finite and >= 0, got {self.sigma}")
            return

        cov = np.array(self.covariances, dtype=float, copy=True)
        if cov.shape == (2, 2):
            cov = cov[None, :, :]
        if cov.ndim != 3 or cov.shape[1:] != (2, 2) or cov.shape[0] < 1:
            raise InvalidArgumentError(f"covariances must have shape (2, 2) or (N, 2, 2), got {cov.shape}")
        if not np.all(np.isfinite(cov)):
            raise InvalidArgumentError("covariances must be finite")
        if np.any(np.abs(cov - np.swapaxes(cov, 1, 2)) > PSD_TOL):
            raise InvalidArgumentError("covariances must be symmetric")
        min_eig = np.linalg.eigvalsh(cov).min()
        if min_eig < -PSD_TOL:
            raise InvalidArgumentError(f"covariances must be positive semidefinite (min eigenvalue {min_eig:.3g})")
        cov.setflags(write=False)
        object.__setattr__(self, "covariances", cov)

    @classmethod
    def isotropic(cls, sigma: float) -> "PerturbationModel":
        return cls(sigma=float(sigma))

    @classmethod
    def anisotropic(cls, covariances: np.ndarray) -> "PerturbationModel":
        return cls(covariances=np.asarray(covariances, dtype=float))

    @property
    def is_isotropic(self) -> bool:
        return self.sigma is not None

    def covariance_stack(self, n: int) -> np.ndarray:
        """Σ_n for n elements, shape (n, 2, 2)."""
        if self.is_isotropic:
            return np.broadcast_to(self.sigma**2 * np.eye(2), (n, 2, 2))
        cov = self.covariances
        if cov.shape[0] == 1:
            return np.broadcast_to(cov[0], (n, 2, 2))
        if cov.shape[0] != n:
            raise InvalidArgumentError(f"model holds {cov.shape[0]} covariances but the array has {n} elements")
        return cov

    def quadratic_form(self, theta: float, n: int) -> np.ndarray:
        """uᵀΣ_n u per element, u = (sinθ, cosθ)."""
        if self.is_isotropic:
            return np.full(n, self.sigma**2)
        u = np.array([math.sin(theta), math.cos(theta)])
        return np.einsum("i,nij,j->n", u, self.covariance_stack(n), u)

    def factor(self, n: int) -> np.ndarray:
        """L_n with L_n L_nᵀ = Σ_n via the eigen decomposition (PSD-safe)."""
        vals, vecs = np.linalg.eigh(self.covariance_stack(n))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))[:, None, :]

    def describe(self) -> Dict[str, Any]:
        if self.is_isotropic:
            return {"kind": "isotropic", "sigma": self.sigma}
        return {"kind": "anisotropic", "n_covariances": int(self.covariances.shape[0])}


@dataclass(frozen=True, eq=False)
class PerturbationSample:
    deltas: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.deltas, dtype=float, copy=True).reshape(-1, 2)
        d.setflags(write=False)
        object.__setattr__(self, "deltas", d)

    def __len__(self) -> int:
        return int(self.deltas.shape[0])

    def scaled(self, factor: float) -> "PerturbationSample":
        """Same draw at factor·σ."""
        return PerturbationSample(self.deltas * factor)


@dataclass(frozen=True)
class FluctuationStats:
    """
    Analytic and Monte Carlo moments at one angle. `law` says which result
    filled the analytic fields; mc_variance measures the same quantity
    (the perturbed response for "exact", the linearized response for
    "linearized"), while mc_response_variance is always that of the
    perturbed response.
    """
    theta: float
    analytic_mean: complex
    analytic_variance: float
    mc_mean: complex
    mc_variance: float
    mc_response_variance: float
    mean_abs_fluct: float
    trials: int
    law: str
    tail_bound_at: Optional[List[Tuple[float, float]]] = None


@dataclass(frozen=True, eq=False)
class MonteCarloDraws:
    """Per-trial values on a θ-grid, rows ordered by trial index."""
    theta: np.ndarray
    nominal: np.ndarray
    perturbed: np.ndarray
    linear: np.ndarray

    @property
    def trials(self) -> int:
        return int(self.perturbed.shape[0])


# ==================================================
# SAMPLING
# ==================================================
def _root_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if int(seed) < 0:
        raise InvalidArgumentError(f"seed must be >= 0, got {seed}")
    return np.random.SeedSequence(int(seed))


def _draw(model: PerturbationModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if model.is_isotropic:
        return rng.normal(0.0, model.sigma, size=(n, 2))
    z = rng.standard_normal(size=(n, 2))
    return np.einsum("nij,nj->ni", model.factor(n), z)


def sample_perturbation(model: PerturbationModel, n_elements: int, seed: SeedLike) -> PerturbationSample:
    if n_elements < 1:
        raise InvalidArgumentError(f"n_elements must be >= 1, got {n_elements}")
    rng = np.random.default_rng(_root_sequence(seed))
    return PerturbationSample(_draw(model, int(n_elements), rng))


# ==================================================
# RESPONSES
# ==================================================
def _check_sample(layout: ArrayLayout, w: WeightVector, sample: PerturbationSample) -> None:
    if not len(layout) == len(w) == len(sample):
        raise InvalidArgumentError(
            f"length mismatch: layout {len(layout)}, weights {len(w)}, sample {len(sample)}"
        )


def _pert_phase(deltas: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """2π(Δx sinθ + Δy cosθ); deltas (..., N, 2) -> (..., K, N)."""
    s, c = np.sin(thetas), np.cos(thetas)
    return TWO_PI * (deltas[..., None, :, 0] * s[:, None] + deltas[..., None, :, 1] * c[:, None])


def _nominal_terms(layout: ArrayLayout, w: WeightVector, thetas: np.ndarray) -> np.ndarray:
    """w_n exp(j2π(x_n sinθ + y_n cosθ)), shape (K, N)."""
    return w.weights[None, :] * np.exp(1j * _phase(layout, thetas))


def perturbed_response_many(
    layout: ArrayLayout,
    w: WeightVector,
    sample: PerturbationSample,
    thetas: Sequence[float],
) -> np.ndarray:
    _check_sample(layout, w, sample)
    th = np.asarray(thetas, dtype=float).reshape(-1)
    terms = _nominal_terms(layout, w, th) * np.exp(1j * _pert_phase(sample.deltas, th))
    return terms.sum(axis=1) / w.norm


def perturbed_response(
    layout: ArrayLayout,
    w: WeightVector,
    sample: PerturbationSample,
    theta: float,
) -> complex:
    return complex(perturbed_response_many(layout, w, sample, [theta])[0])


def steered_perturbed_response(
    magnitudes: Sequence[float],
    sample: PerturbationSample,
    theta_s: float,
) -> complex:
    """Phase-only form at θ_s: nominal phases cancel against the steering weights."""
    mags = _check_magnitudes(magnitudes, len(sample))
    phase = _pert_phase(sample.deltas, np.array([theta_s]))[0]
    return complex((mags * np.exp(1j * phase)).sum() / mags.sum())


def linearized_fluctuation_many(
    layout: ArrayLayout,
    w: WeightVector,
    sample: PerturbationSample,
    thetas: Sequence[float],
) -> np.ndarray:
    _check_sample(layout, w, sample)
    th = np.asarray(thetas, dtype=float).reshape(-1)
    terms = _nominal_terms(layout, w, th) * _pert_phase(sample.deltas, th)
    return 1j * terms.sum(axis=1) / w.norm


def linearized_fluctuation(
    layout: ArrayLayout,
    w: WeightVector,
    sample: PerturbationSample,
    theta: float,
) -> complex:
    return complex(linearized_fluctuation_many(layout, w, sample, [theta])[0])


# ==================================================
# CLOSED FORMS
# ==================================================
def _magnitude_vector(magnitudes: Sequence[float]) -> np.ndarray:
    mags = np.asarray(magnitudes, dtype=float).reshape(-1)
    if mags.size < 1:
        raise InvalidArgumentError("magnitudes must not be empty")
    return _check_magnitudes(mags, mags.size)


def analytic_mean_steer(model: PerturbationModel, magnitudes: Sequence[float], theta_s: float) -> float:
    mags = _magnitude_vector(magnitudes)
    q = model.quadratic_form(theta_s, mags.size)
    return float((mags * np.exp(-2.0 * np.pi**2 * q)).sum() / mags.sum())


def analytic_var_steer(model: PerturbationModel, magnitudes: Sequence[float], theta_s: float) -> float:
    mags = _magnitude_vector(magnitudes)
    q = model.quadratic_form(theta_s, mags.size)
    return float((mags**2 * -np.expm1(-4.0 * np.pi**2 * q)).sum() / mags.sum() ** 2)


def fluctuation_variance(model: PerturbationModel, magnitudes: Sequence[float], theta: float) -> float:
    mags = _magnitude_vector(magnitudes)
    q = model.quadratic_form(theta, mags.size)
    return float(TWO_PI**2 * (mags**2 * q).sum() / mags.sum() ** 2)


def tail_bound(t: float, n: int, sigma: float) -> float:
    """P(|Δf| >= t) bound for unit magnitudes and isotropic σ, clamped to [0, 1]."""
    if t <= 0 or n < 1 or sigma <= 0:
        raise InvalidArgumentError(f"tail_bound needs t > 0, n >= 1, sigma > 0 (got {t}, {n}, {sigma})")
    bound = 2.0 * math.exp(-(t**2) * n / (2.0 * TWO_PI**2 * sigma**2))
    return min(1.0, max(0.0, bound))


# ==================================================
# MONTE CARLO
# ==================================================
def _chunks(total: int, size: int) -> List[Tuple[int, int]]:
    return [(start, min(start + size, total)) for start in range(0, total, size)]


def _run_chunk(
    children: Sequence[np.random.SeedSequence],
    model: PerturbationModel,
    nominal_terms: np.ndarray,
    thetas: np.ndarray,
    norm: float,
) -> Tuple[np.ndarray, np.ndarray]:
    n = nominal_terms.shape[1]
    deltas = np.stack([_draw(model, n, np.random.default_rng(child)) for child in children])
    phase = _pert_phase(deltas, thetas)
    perturbed = (nominal_terms[None] * np.exp(1j * phase)).sum(axis=2) / norm
    linear = 1j * (nominal_terms[None] * phase).sum(axis=2) / norm
    return perturbed, linear


def _chunk_results(
    layout: ArrayLayout,
    w: WeightVector,
    model: PerturbationModel,
    thetas: np.ndarray,
    trials: int,
    seed: SeedLike,
    n_jobs: int,
    return_as: str = "list",
):
    if trials < 1:
        raise InvalidArgumentError(f"trials must be >= 1, got {trials}")
    if len(layout) != len(w):
        raise InvalidArgumentError(f"weight vector has {len(w)} entries but layout has {len(layout)} elements")
    model.covariance_stack(len(layout))

    children = _root_sequence(seed).spawn(int(trials))
    terms = _nominal_terms(layout, w, thetas)
    return Parallel(n_jobs=n_jobs, prefer="threads", return_as=return_as)(
        delayed(_run_chunk)(children[a:b], model, terms, thetas, w.norm)
        for a, b in _chunks(int(trials), TRIAL_CHUNK)
    )


def simulate_trials(
    layout: ArrayLayout,
    w: WeightVector,
    model: PerturbationModel,
    theta_grid: Sequence[float],
    trials: int = DEFAULT_TRIALS,
    seed: SeedLike = 0,
    n_jobs: int = 1,
) -> MonteCarloDraws:
    """
    Perturbed and linearized responses for every trial. Trial k always uses
    the k-th child of the seed, so results do not depend on n_jobs.
    """
    thetas = np.asarray(theta_grid, dtype=float).reshape(-1)
    parts = _chunk_results(layout, w, model, thetas, trials, seed, n_jobs)
    return MonteCarloDraws(
        theta=thetas,
        nominal=response_many(layout, w, thetas),
        perturbed=np.concatenate([p for p, _ in parts], axis=0),
        linear=np.concatenate([lin for _, lin in parts], axis=0),
    )


def empirical_tail_frequency(draws: MonteCarloDraws, t_grid: Sequence[float], column: int = 0) -> np.ndarray:
    """Fraction of trials with |Δf| >= t at draws.theta[column]."""
    mags = np.abs(draws.linear[:, column])
    return np.array([float(np.mean(mags >= t)) for t in t_grid])


@dataclass
class _Moments:
    """Running count/mean/M2 per angle, merged in chunk order."""
    count: int = 0
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None

    def merge(self, values: np.ndarray) -> None:
        n_b = values.shape[0]
        mean_b = values.mean(axis=0)
        m2_b = (np.abs(values - mean_b) ** 2).sum(axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = n_b, mean_b, m2_b
            return
        n = self.count + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.m2 = self.m2 + m2_b + np.abs(delta) ** 2 * (self.count * n_b / n)
        self.count = n

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / self.count


def _same_theta(a: float, b: Optional[float]) -> bool:
    return b is not None and abs(a - b) <= 1e-12


def monte_carlo_stats(
    layout: ArrayLayout,
    w: WeightVector,
    model: PerturbationModel,
    theta_grid: Sequence[float],
    trials: int = DEFAULT_TRIALS,
    seed: SeedLike = 0,
    theta_s: Optional[float] = None,
    n_jobs: int = 1,
    tail_grid: Optional[Sequence[float]] = None,
) -> List[FluctuationStats]:
    """
    Moments per angle. The exact steering-angle law fills the analytic fields
    at θ_s (w must then be the steering weights for θ_s); the linearized law
    fills them elsewhere.
    """
    thetas = np.asarray(theta_grid, dtype=float).reshape(-1)
    parts = _chunk_results(layout, w, model, thetas, trials, seed, n_jobs, return_as="generator")
    nominal = response_many(layout, w, thetas)

    response = _Moments()
    linear = _Moments()
    abs_fluct = np.zeros(thetas.size)
    for perturbed, lin in parts:
        response.merge(perturbed)
        linear.merge(nominal[None, :] + lin)
        abs_fluct += np.abs(perturbed - nominal[None, :]).sum(axis=0)
    abs_fluct /= response.count

    mags = w.magnitudes
    tails = None
    if tail_grid is not None and model.is_isotropic and model.sigma > 0:
        tails = [(float(t), tail_bound(float(t), len(layout), model.sigma)) for t in tail_grid]

    stats = []
    for k, theta in enumerate(thetas):
        if _same_theta(float(theta), theta_s):
            law = LAW_EXACT
            a_mean = complex(analytic_mean_steer(model, mags, theta))
            a_var = analytic_var_steer(model, mags, theta)
            mc_var = float(response.variance[k])
        else:
            law = LAW_LINEARIZED
            a_mean = complex(nominal[k])
            a_var = fluctuation_variance(model, mags, theta)
            mc_var = float(linear.variance[k])
        stats.append(
            FluctuationStats(
                theta=float(theta),
                analytic_mean=a_mean,
                analytic_variance=a_var,
                mc_mean=complex(response.mean[k]),
                mc_variance=mc_var,
                mc_response_variance=float(response.variance[k]),
                mean_abs_fluct=float(abs_fluct[k]),
                trials=int(trials),
                law=law,
                tail_bound_at=tails,
            )
        )
    logger.info(
        "monte carlo finished",
        extra={"trials": int(trials), "n_angles": int(thetas.size), "n_elements": len(layout)},
    )
    return stats


def stats_to_frame(stats: Sequence[FluctuationStats]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "theta_deg": [math.degrees(s.theta) for s in stats],
            "analytic_mean_abs": [abs(s.analytic_mean) for s in stats],
            "analytic_var": [s.analytic_variance for s in stats],
            "mc_mean_abs": [abs(s.mc_mean) for s in stats],
            "mc_var": [s.mc_variance for s in stats],
            "mean_abs_fluct": [s.mean_abs_fluct for s in stats],
        },
        columns=STATS_COLUMNS,
    )


# ==================================================
# ARRAY-SIZE PROTOCOL
# ==================================================
def fluctuation_vs_size(
    sizes: Sequence[int],
    sigma: float,
    theta_grid: Sequence[float],
    trials: int = DEFAULT_TRIALS,
    seed: SeedLike = 0,
    theta_s: float = 0.0,
    d: float = math.sqrt(3.0) / 3.0,
    n_jobs: int = 1,
) -> pd.DataFrame:
    """
    Mean |f - f̃| per angle for equilateral dual-linear arrays of each size
    (n1 = ceil(N/2), n2 = N - n1), uniform weights steered to θ_s.
    """
    model = PerturbationModel.isotropic(sigma)
    streams = _root_sequence(seed).spawn(len(sizes))
    frames = []
    for size, stream in zip(sizes, streams):
        if size < 2:
            raise InvalidArgumentError(f"array size must be >= 2, got {size}")
        n1 = math.ceil(size / 2)
        layout = expand_topology(equilateral_dual(d, n1, size - n1))
        w = steering_weights(layout, theta_s)
        stats = monte_carlo_stats(layout, w, model, theta_grid, trials, stream, theta_s=theta_s, n_jobs=n_jobs)
        frames.append(
            pd.DataFrame(
                {
                    "N": size,
                    "theta_deg": [math.degrees(s.theta) for s in stats],
                    "mean_abs_fluct": [s.mean_abs_fluct for s in stats],
                }
            )
        )
    return pd.concat(frames, ignore_index=True)
