"""
Euclidean random matrices from disordered 3-D layouts and their limiting
spectral laws.

    G(i, j) = exp(-j2πr/λ) / (-2πr/λ),  G(i, i) = 0

splits into a cosine part C = cos(2πr/λ)/(-2πr/λ) and a sinc part
S = sin(2πr/λ)/(2πr/λ). With β = 2.8N/(2πL/λ)², the sinc part shifted by the
identity follows Marčenko-Pastur(β) for β < 1, and the cosine part follows a
semicircle of variance β at low density (Cauchy when β >> 1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial.chebyshev import Chebyshev
from scipy import integrate, linalg
from scipy.spatial.distance import pdist, squareform

from analysis.errors import DegenerateDistanceError, InvalidArgumentError, OutOfRegimeError

logger = logging.getLogger(__name__)

BETA_CONSTANT = 2.8
SYMMETRY_TOL = 1e-12
HIST_BINS = 100
HIST_PAD = 0.10
LAW_POINTS = 500
CAUCHY_WINDOW = (-10.0, 10.0)
MP_CHEB_DEGREE = 128

PART_COSINE = "cosine"
PART_SINC = "sinc"
PARTS = (PART_COSINE, PART_SINC)
DEFAULT_SHIFT = {PART_SINC: 1.0, PART_COSINE: 0.0}

ArrayLike = Union[float, Sequence[float], np.ndarray]


# ==================================================
# TYPES
# ==================================================
@dataclass(frozen=True)
class CubeEnsemble:
    n: int
    side_m: float
    lambda_m: float
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgumentError(f"n must be an integer >= 2, got {self.n}")
        if not (math.isfinite(self.side_m) and self.side_m > 0):
            raise InvalidArgumentError(f"side_m must be > 0, got {self.side_m}")
        if not (math.isfinite(self.lambda_m) and self.lambda_m > 0):
            raise InvalidArgumentError(f"lambda_m must be > 0, got {self.lambda_m}")
        if self.seed < 0:
            raise InvalidArgumentError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class RegimeDescriptor:
    beta: float
    rho_lambda3: float

    @classmethod
    def from_density(cls, rho_lambda3: float, side_over_lambda: float) -> "RegimeDescriptor":
        """β from (ρλ³, L/λ): β/(ρλ³) = 2.8 (L/λ) / (2π)²."""
        beta = BETA_CONSTANT * side_over_lambda * rho_lambda3 / (2.0 * math.pi) ** 2
        return cls(beta=beta, rho_lambda3=rho_lambda3)


@dataclass(frozen=True, eq=False)
class KernelPair:
    cosine_part: np.ndarray
    sinc_part: np.ndarray

    def part(self, name: str) -> np.ndarray:
        if name == PART_COSINE:
            return self.cosine_part
        if name == PART_SINC:
            return self.sinc_part
        raise InvalidArgumentError(f"unknown kernel part {name!r}, expected one of {PARTS}")


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    part: str
    shift_applied: float
    regime: RegimeDescriptor

    def __len__(self) -> int:
        return int(self.eigenvalues.size)


# ==================================================
# ENSEMBLE
# ==================================================
def sample_cube(e: CubeEnsemble) -> np.ndarray:
    """N i.i.d. uniform points in [0, L]³ (meters), shape (N, 3)."""
    rng = np.random.default_rng(e.seed)
    return rng.uniform(0.0, e.side_m, size=(e.n, 3))


def regime(e: CubeEnsemble) -> RegimeDescriptor:
    return RegimeDescriptor(
        beta=BETA_CONSTANT * e.n / (2.0 * math.pi * e.side_m / e.lambda_m) ** 2,
        rho_lambda3=e.n * e.lambda_m**3 / e.side_m**3,
    )


def build_kernels(positions: np.ndarray, lambda_m: float) -> KernelPair:
    """Entries are computed once per unordered pair, so symmetry is exact."""
    pts = np.asarray(positions, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InvalidArgumentError("positions must have shape (N, dim) with N >= 2")
    if lambda_m <= 0:
        raise InvalidArgumentError(f"lambda_m must be > 0, got {lambda_m}")

    r = pdist(pts)
    if np.any(r <= 0):
        raise DegenerateDistanceError("two points coincide; the kernel is undefined at r = 0")
    k = 2.0 * np.pi * r / lambda_m
    return KernelPair(
        cosine_part=squareform(np.cos(k) / -k),
        sinc_part=squareform(np.sin(k) / k),
    )


# ==================================================
# SPECTRA
# ==================================================
def _check_symmetric(matrix: np.ndarray) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidArgumentError(f"expected a non-empty square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise InvalidArgumentError("matrix is not symmetric")
    return a


def esd(matrix: np.ndarray) -> np.ndarray:
    """All eigenvalues, ascending, with multiplicity."""
    a = _check_symmetric(matrix)
    return np.sort(linalg.eigh(a, eigvals_only=True))


def eigensolver_residual(matrix: np.ndarray) -> float:
    """max_i ‖A v_i - λ_i v_i‖ / ‖A‖₂."""
    a = _check_symmetric(matrix)
    vals, vecs = linalg.eigh(a)
    scale = float(np.max(np.abs(vals))) or 1.0
    residual = np.linalg.norm(a @ vecs - vecs * vals[None, :], axis=0)
    return float(residual.max() / scale)


# ==================================================
# LIMITING LAWS
# ==================================================
def _mp_edges(beta: float) -> Tuple[float, float]:
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be > 0, got {beta}")
    if beta >= 1:
        raise OutOfRegimeError(f"Marčenko-Pastur law needs beta < 1, got {beta:.4g}")
    root = math.sqrt(beta)
    return (1.0 - root) ** 2, (1.0 + root) ** 2


def _as_output(x: ArrayLike, values: np.ndarray):
    return float(values) if np.ndim(x) == 0 else values


def mp_density(x: ArrayLike, beta: float):
    a, b = _mp_edges(beta)
    xs = np.asarray(x, dtype=float)
    inside = (xs > a) & (xs < b)
    safe = np.where(inside, xs, 1.0)
    values = np.where(
        inside,
        np.sqrt(np.clip((safe - a) * (b - safe), 0.0, None)) / (2.0 * np.pi * beta * safe),
        0.0,
    )
    return _as_output(x, values)


def semicircle_density(x: ArrayLike, beta: float):
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be > 0, got {beta}")
    xs = np.asarray(x, dtype=float)
    values = np.sqrt(np.clip(4.0 * beta - xs**2, 0.0, None)) / (2.0 * np.pi * beta)
    return _as_output(x, values)


def cauchy_density(x: ArrayLike):
    xs = np.asarray(x, dtype=float)
    return _as_output(x, 1.0 / (np.pi * (1.0 + xs**2)))


@lru_cache(maxsize=32)
def _mp_cdf_interpolant(beta: float) -> Chebyshev:
    """
    CDF in the angle variable t ∈ [0, π], x = (a+b)/2 - (b-a)/2·cos t.
    The integrand is smooth in t, so a Chebyshev fit converges fast.
    """
    a, b = _mp_edges(beta)
    mid, half = (a + b) / 2.0, (b - a) / 2.0

    def integrand(t: float) -> float:
        x = mid - half * math.cos(t)
        return (half * math.sin(t)) ** 2 / (2.0 * math.pi * beta * x)

    def cdf_t(ts: np.ndarray) -> np.ndarray:
        return np.array([integrate.quad(integrand, 0.0, t, epsabs=1e-13, epsrel=1e-12)[0] for t in ts])

    return Chebyshev.interpolate(cdf_t, MP_CHEB_DEGREE, domain=[0.0, math.pi])


def mp_cdf(x: ArrayLike, beta: float):
    a, b = _mp_edges(beta)
    xs = np.asarray(x, dtype=float)
    mid, half = (a + b) / 2.0, (b - a) / 2.0
    t = np.arccos(np.clip((mid - xs) / half, -1.0, 1.0))
    values = np.clip(_mp_cdf_interpolant(float(beta))(t), 0.0, 1.0)
    values = np.where(xs <= a, 0.0, np.where(xs >= b, 1.0, values))
    return _as_output(x, values)


def semicircle_cdf(x: ArrayLike, beta: float):
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be > 0, got {beta}")
    radius = 2.0 * math.sqrt(beta)
    xs = np.clip(np.asarray(x, dtype=float), -radius, radius)
    values = (
        0.5
        + xs * np.sqrt(np.clip(4.0 * beta - xs**2, 0.0, None)) / (4.0 * np.pi * beta)
        + np.arcsin(xs / radius) / np.pi
    )
    return _as_output(x, np.clip(values, 0.0, 1.0))


def cauchy_cdf(x: ArrayLike):
    xs = np.asarray(x, dtype=float)
    return _as_output(x, 0.5 + np.arctan(xs) / np.pi)


@dataclass(frozen=True)
class LimitingLaw:
    name: str
    beta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.name not in ("marcenko-pastur", "semicircle", "cauchy"):
            raise InvalidArgumentError(f"unknown law {self.name!r}")
        if self.name == "marcenko-pastur":
            _mp_edges(self.beta if self.beta is not None else 0.0)
        elif self.name == "semicircle" and not (self.beta is not None and self.beta > 0):
            raise InvalidArgumentError(f"semicircle needs beta > 0, got {self.beta}")

    @classmethod
    def marcenko_pastur(cls, beta: float) -> "LimitingLaw":
        return cls("marcenko-pastur", float(beta))

    @classmethod
    def semicircle(cls, beta: float) -> "LimitingLaw":
        return cls("semicircle", float(beta))

    @classmethod
    def cauchy(cls) -> "LimitingLaw":
        return cls("cauchy")

    def support(self) -> Tuple[float, float]:
        if self.name == "marcenko-pastur":
            return _mp_edges(self.beta)
        if self.name == "semicircle":
            r = 2.0 * math.sqrt(self.beta)
            return -r, r
        return -math.inf, math.inf

    def pdf(self, x: ArrayLike):
        if self.name == "marcenko-pastur":
            return mp_density(x, self.beta)
        if self.name == "semicircle":
            return semicircle_density(x, self.beta)
        return cauchy_density(x)

    def cdf(self, x: ArrayLike):
        if self.name == "marcenko-pastur":
            return mp_cdf(x, self.beta)
        if self.name == "semicircle":
            return semicircle_cdf(x, self.beta)
        return cauchy_cdf(x)

    def describe(self) -> Dict[str, Optional[float]]:
        return {"name": self.name, "beta": self.beta}


def law_for(part: str, reg: RegimeDescriptor) -> LimitingLaw:
    """Sinc part -> MP(β); cosine part -> semicircle(β), or Cauchy when β >= 1."""
    if part == PART_SINC:
        return LimitingLaw.marcenko_pastur(reg.beta)
    if part == PART_COSINE:
        if reg.beta >= 1:
            logger.warning(
                "beta >= 1: comparing the cosine part against the Cauchy law",
                extra={"beta": reg.beta, "rho_lambda3": reg.rho_lambda3},
            )
            return LimitingLaw.cauchy()
        return LimitingLaw.semicircle(reg.beta)
    raise InvalidArgumentError(f"unknown kernel part {part!r}, expected one of {PARTS}")


# ==================================================
# COMPARISON
# ==================================================
def _hist_window(eigs: np.ndarray, law: LimitingLaw) -> Tuple[float, float]:
    lo, hi = law.support()
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = float(eigs[0]), float(eigs[-1])
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
    pad = HIST_PAD * (hi - lo)
    return lo - pad, hi + pad


def compare_esd(eigs: Sequence[float], law: LimitingLaw) -> Tuple[float, float]:
    """
    (KS, L1). KS is max(D+, D-) against the law CDF. L1 sums |empirical -
    law| bin masses over a 100-bin histogram on the padded support, plus the
    mass difference outside it.
    """
    s = np.sort(np.asarray(eigs, dtype=float).reshape(-1))
    n = s.size
    if n == 0:
        raise InvalidArgumentError("eigenvalue list must not be empty")

    cdf = np.asarray(law.cdf(s), dtype=float)
    d_plus = np.max(np.arange(1, n + 1) / n - cdf)
    d_minus = np.max(cdf - np.arange(0, n) / n)
    ks = float(max(d_plus, d_minus))

    lo, hi = _hist_window(s, law)
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    counts, _ = np.histogram(s, bins=edges)
    empirical = counts / n
    expected = np.diff(np.asarray(law.cdf(edges), dtype=float))
    outside_emp = 1.0 - empirical.sum()
    outside_law = 1.0 - expected.sum()
    l1 = float(np.abs(empirical - expected).sum() + abs(outside_emp - outside_law))
    return ks, l1


def law_curve(law: LimitingLaw, points: int = LAW_POINTS) -> pd.DataFrame:
    lo, hi = law.support()
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = CAUCHY_WINDOW
    x = np.linspace(lo, hi, int(points))
    return pd.DataFrame({"x": x, "density": np.asarray(law.pdf(x), dtype=float)})


# ==================================================
# PIPELINE
# ==================================================
def spectra(
    e: CubeEnsemble,
    parts: Sequence[str] = PARTS,
    shift: Optional[float] = None,
) -> Dict[str, SpectrumResult]:
    """
    Sample, build both kernels once, and diagonalize the requested parts.
    `shift` overrides the default (+1 for the sinc part, 0 for the cosine part).
    """
    for part in parts:
        if part not in PARTS:
            raise InvalidArgumentError(f"unknown kernel part {part!r}, expected one of {PARTS}")
    reg = regime(e)
    kernels = build_kernels(sample_cube(e), e.lambda_m)
    out = {}
    for part in parts:
        applied = DEFAULT_SHIFT[part] if shift is None else float(shift)
        eigs = esd(kernels.part(part)) + applied
        out[part] = SpectrumResult(eigenvalues=eigs, part=part, shift_applied=applied, regime=reg)
        logger.debug("spectrum computed", extra={"part": part, "n": e.n, "shift": applied})
    return out


def spectrum(e: CubeEnsemble, part: str, shift: Optional[float] = None) -> SpectrumResult:
    return spectra(e, (part,), shift)[part]
