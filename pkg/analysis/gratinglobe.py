"""
Grating-lobe analysis for multi-linear topologies.

Periodicity at θ with image θ' holds iff, for every spacing d_i,
d_i (sinθ - sinθ') is a nonzero integer (C1) and, for every leading element
l >= 2, x_l1 (sinθ - sinθ') + y_l1 (cosθ - cosθ') is an integer (C2).
For the equal-spacing dual-linear case the two conditions combine into the
circle identity

    (p/d)² + ((q d - p x21) / (d y21))² = 2 - 2 cos(θ - θ')

so no period pair exists when the left side exceeds 4 for every (p, q) (C3).
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from analysis.beampattern import (
    main_lobe_bounds,
    nearest_index,
    response_many,
    steering_weights,
)
from analysis.errors import DegenerateGeometryError, InvalidArgumentError
from analysis.geometry import ArrayLayout, MultiLinearTopology, Position2D

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
C3_BOUND = 4.0
FOV = (-math.pi / 2, math.pi / 2)

VERDICT_STRICT = "strict"
VERDICT_BOUNDARY = "boundary"
VERDICT_VIOLATED = "violated"


# ==================================================
# TYPES
# ==================================================
@dataclass(frozen=True)
class PeriodPair:
    theta: float
    theta_image: float
    p: int
    q: int

    def in_fov(self, fov: Tuple[float, float] = FOV, tol: float = DEFAULT_TOL) -> bool:
        """Both angles must lie in the field of view."""
        lo, hi = fov
        return all(lo - tol <= a <= hi + tol for a in (self.theta, self.theta_image))


@dataclass(frozen=True)
class C3Witness:
    p: int
    q: int
    lhs: float


@dataclass(frozen=True)
class C3Report:
    verdict: str
    witnesses: Tuple[C3Witness, ...]
    search_bounds: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict,
            "witnesses": [{"p": w.p, "q": w.q, "lhs": w.lhs} for w in self.witnesses],
            "search_bounds": self.search_bounds,
        }


# ==================================================
# PERIODICITY RESIDUALS
# ==================================================
def _residual(v: float) -> Tuple[float, int]:
    k = int(round(v))
    return v - k, k


def c1_residual(d: float, theta: float, theta_image: float) -> Tuple[float, int]:
    """v = d (sinθ - sinθ'); C1 holds iff the residual vanishes and the integer is nonzero."""
    if d <= 0:
        raise InvalidArgumentError(f"d must be > 0, got {d}")
    return _residual(d * (math.sin(theta) - math.sin(theta_image)))


def c2_residual(leading: Position2D, theta: float, theta_image: float) -> Tuple[float, int]:
    """v = x (sinθ - sinθ') + y (cosθ - cosθ'); q = 0 is allowed."""
    v = leading.x * (math.sin(theta) - math.sin(theta_image)) + leading.y * (
        math.cos(theta) - math.cos(theta_image)
    )
    return _residual(v)


def _same_angle(a: float, b: float, tol: float) -> bool:
    return abs(math.remainder(a - b, 2 * math.pi)) <= tol


def is_period_pair(
    t: MultiLinearTopology,
    theta: float,
    theta_image: float,
    tol: float = DEFAULT_TOL,
) -> bool:
    if tol <= 0:
        raise InvalidArgumentError(f"tol must be > 0, got {tol}")
    if _same_angle(theta, theta_image, tol):
        return False
    for d in t.spacings:
        res, k = c1_residual(d, theta, theta_image)
        if k == 0 or abs(res) > tol:
            return False
    for sub in t.subarrays[1:]:
        res, _ = c2_residual(sub.leading, theta, theta_image)
        if abs(res) > tol:
            return False
    return True


def candidate_period_pairs(
    t: MultiLinearTopology,
    theta: float,
    tol: float = DEFAULT_TOL,
) -> List[PeriodPair]:
    """
    Images θ' of θ proposed by sub-array 1's integer condition
    (sinθ' = sinθ - p/d_1, both branches), kept when every condition holds.
    """
    d1 = t.subarrays[0].spacing_d
    s = math.sin(theta)
    p_max = int(math.floor(2 * d1 + tol))
    found: List[PeriodPair] = []
    for p in range(-p_max, p_max + 1):
        if p == 0:
            continue
        s_img = s - p / d1
        if abs(s_img) > 1 + tol:
            continue
        base = math.asin(max(-1.0, min(1.0, s_img)))
        for img in (base, math.pi - base):
            img = math.remainder(img, 2 * math.pi)
            if any(_same_angle(img, f.theta_image, tol) for f in found):
                continue
            if not is_period_pair(t, theta, img, tol):
                continue
            q = c2_residual(t.subarrays[1].leading, theta, img)[1] if len(t.subarrays) > 1 else 0
            found.append(PeriodPair(theta=theta, theta_image=img, p=p, q=q))
    return found


def rational_spacing_precheck(
    spacings: Sequence[float],
    max_denominator: int = 10**6,
    tol: Optional[float] = None,
) -> bool:
    """
    True iff every ratio d_i/d_j has a rational approximation with denominator
    <= max_denominator. False rules grating lobes out (irrational ratios
    cannot satisfy C1 on all lines at once).

    The default tolerance is 16 ulps of the ratio: exact rationals survive
    float division to a few ulps, while irrationals keep a gap of order
    1/q² that is far larger at q <= 10⁶.
    """
    ds = [float(d) for d in spacings]
    if any(d <= 0 for d in ds):
        raise InvalidArgumentError("spacings must be positive")
    if max_denominator < 1:
        raise InvalidArgumentError("max_denominator must be >= 1")
    for i, di in enumerate(ds):
        for dj in ds[i + 1 :]:
            ratio = di / dj
            approx = Fraction(ratio).limit_denominator(max_denominator)
            bound = tol if tol is not None else 16 * sys.float_info.epsilon * abs(ratio)
            if abs(ratio - float(approx)) > bound:
                return False
    return True


# ==================================================
# DUAL-LINEAR, EQUAL SPACING
# ==================================================
def dual_parameters(t: MultiLinearTopology) -> Optional[Tuple[float, float, float]]:
    """(d, x21, y21) when t is dual-linear with equal spacings, else None."""
    if len(t.subarrays) != 2:
        return None
    first, second = t.subarrays
    if first.spacing_d != second.spacing_d:
        return None
    return first.spacing_d, second.leading.x, second.leading.y


def c3_lhs(d: float, x21: float, y21: float, p: int, q: int) -> float:
    return (p / d) ** 2 + ((q * d - p * x21) / (d * y21)) ** 2


def _check_dual(d: float, y21: float) -> None:
    if d <= 0:
        raise InvalidArgumentError(f"d must be > 0, got {d}")
    if y21 == 0:
        raise DegenerateGeometryError(
            "y21 = 0 puts both lines on one axis; analyse it as a single linear array"
        )


def _q_range(d: float, x21: float, y21: float, p: int) -> range:
    # |q d - p x21| <= 2 d |y21|, widened by one on each side for roundoff
    center = p * x21 / d
    half = 2.0 * abs(y21)
    return range(math.floor(center - half) - 1, math.ceil(center + half) + 2)


def _candidates(d: float, x21: float, y21: float, signs: Sequence[int]) -> List[Tuple[int, int, float]]:
    p_max = int(math.floor(2 * d))
    out = []
    for p in range(1, p_max + 1):
        for sign in signs:
            pp = sign * p
            for q in _q_range(d, x21, y21, pp):
                out.append((pp, q, c3_lhs(d, x21, y21, pp, q)))
    return out


def c3_check(d: float, x21: float, y21: float, tol: float = DEFAULT_TOL) -> C3Report:
    """
    Evaluates the (C3) left side over the finite set where it can reach 4.
    Witnesses are listed for p >= 1; (-p, -q) gives the same value and the
    same relation with θ and θ' exchanged.
    """
    _check_dual(d, y21)
    if tol < 0:
        raise InvalidArgumentError(f"tol must be >= 0, got {tol}")

    p_max = int(math.floor(2 * d))
    witnesses = sorted(
        (C3Witness(p, q, lhs) for p, q, lhs in _candidates(d, x21, y21, (1,)) if lhs <= C3_BOUND + tol),
        key=lambda w: (w.p, w.q),
    )
    if not witnesses:
        verdict = VERDICT_STRICT
    elif min(w.lhs for w in witnesses) >= C3_BOUND - tol:
        verdict = VERDICT_BOUNDARY
    else:
        verdict = VERDICT_VIOLATED

    bounds = {
        "p_max": p_max,
        "q_ranges": {
            str(p): [r.start, r.stop - 1] for p in range(1, p_max + 1) for r in [_q_range(d, x21, y21, p)]
        },
    }
    return C3Report(verdict=verdict, witnesses=tuple(witnesses), search_bounds=bounds)


def c3_y21_threshold(d: float, x21: float) -> float:
    """
    Supremum of |y21| keeping (C3) strict. +inf when d < 1/2, where the
    first square term alone exceeds 4.
    """
    if d <= 0:
        raise InvalidArgumentError(f"d must be > 0, got {d}")
    best = math.inf
    p = 1
    while (p / d) ** 2 < C3_BOUND:
        center = p * x21 / d
        for q in (math.floor(center), math.ceil(center)):
            gap = abs(q * d - p * x21)
            best = min(best, gap / (d * math.sqrt(C3_BOUND - (p / d) ** 2)))
        p += 1
    return best


def period_angles(
    d: float,
    x21: float,
    y21: float,
    theta: float,
    tol: float = DEFAULT_TOL,
) -> List[PeriodPair]:
    """
    Images θ' of θ solving sinθ' = sinθ - p/d and
    cosθ' = cosθ - (q d - p x21)/(d y21) on the unit circle, θ' in (-π, π].
    """
    _check_dual(d, y21)
    s, c = math.sin(theta), math.cos(theta)
    found = []
    for p, q, _ in _candidates(d, x21, y21, (1, -1)):
        s_img = s - p / d
        c_img = c - (q * d - p * x21) / (d * y21)
        if abs(s_img * s_img + c_img * c_img - 1.0) > tol:
            continue
        img = math.atan2(s_img, c_img)
        if img <= -math.pi:
            img += 2 * math.pi
        if _same_angle(img, theta, tol):
            continue
        found.append(PeriodPair(theta=theta, theta_image=img, p=p, q=q))
    return found


def period_solutions(d: float, x21: float, y21: float) -> List[PeriodPair]:
    """
    Every θ that admits a period partner. For (p, q) with A = p/d and
    B = (q d - p x21)/(d y21), the circle condition reduces to
    A sinθ + B cosθ = (A² + B²)/2, solvable iff A² + B² <= 4.
    """
    _check_dual(d, y21)
    pairs: List[PeriodPair] = []
    for p, q, lhs in _candidates(d, x21, y21, (1, -1)):
        if lhs > C3_BOUND + DEFAULT_TOL:
            continue
        a = p / d
        b = (q * d - p * x21) / (d * y21)
        r = math.sqrt(lhs)
        phi = math.atan2(a, b)
        spread = math.acos(min(1.0, r / 2.0))
        roots = {phi} if spread == 0.0 else {phi - spread, phi + spread}
        for root in sorted(roots):
            theta = math.remainder(root, 2 * math.pi)
            img = math.atan2(math.sin(theta) - a, math.cos(theta) - b)
            if theta <= -math.pi:
                theta += 2 * math.pi
            if img <= -math.pi:
                img += 2 * math.pi
            pairs.append(PeriodPair(theta=theta, theta_image=img, p=p, q=q))
    pairs.sort(key=lambda pp: (pp.theta, pp.p, pp.q))
    return pairs


# ==================================================
# NUMERICAL SCAN
# ==================================================
def scan_grating_lobes(
    layout: ArrayLayout,
    theta_s: float,
    obs_grid: Sequence[float],
    epsilon: float = 0.01,
    magnitudes: Optional[Sequence[float]] = None,
) -> List[float]:
    """
    Grid angles outside the main lobe where |f| >= 1 - epsilon. The main lobe
    runs between the first local minima on either side of θ_s.
    """
    if not 0 < epsilon < 1:
        raise InvalidArgumentError(f"epsilon must be in (0, 1), got {epsilon}")
    grid = np.asarray(obs_grid, dtype=float).reshape(-1)
    if grid.size < 3:
        raise InvalidArgumentError("observation grid needs at least 3 points to bracket the main lobe")

    w = steering_weights(layout, theta_s, magnitudes)
    mag = np.abs(response_many(layout, w, grid))
    return scan_row(grid, mag, theta_s, epsilon)


def scan_row(grid: np.ndarray, mag: np.ndarray, theta_s: float, epsilon: float) -> List[float]:
    """Scan one precomputed pattern row (shared with the sweep summary)."""
    left, right = main_lobe_bounds(mag, nearest_index(grid, theta_s))
    hits = np.flatnonzero(mag >= 1.0 - epsilon)
    return [float(grid[i]) for i in hits if i < left or i > right]
