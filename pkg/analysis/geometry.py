"""
Planar array layouts and multi-linear topologies.

All positions are in wavelength units (x/λ, y/λ). Angles are measured from
the +y axis, so the direction of θ is (sin θ, cos θ).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

LAYOUT_COLUMNS = ["index", "x_wavelengths", "y_wavelengths"]


# ==================================================
# TYPES
# ==================================================
def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgumentError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class Position2D:
    x: float
    y: float

    def __post_init__(self) -> None:
        _require_finite("position", self.x, self.y)

    def distance_to(self, other: "Position2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class LinearSubarray:
    """Elements at leading + (n-1)·spacing_d·x̂, n = 1..count."""
    leading: Position2D
    spacing_d: float
    count: int

    def __post_init__(self) -> None:
        _require_finite("spacing_d", self.spacing_d)
        if self.spacing_d <= 0:
            raise InvalidArgumentError(f"spacing_d must be > 0, got {self.spacing_d}")
        if int(self.count) != self.count or self.count < 1:
            raise InvalidArgumentError(f"count must be an integer >= 1, got {self.count}")


@dataclass(frozen=True)
class MultiLinearTopology:
    subarrays: Tuple[LinearSubarray, ...]

    def __post_init__(self) -> None:
        subs = tuple(self.subarrays)
        object.__setattr__(self, "subarrays", subs)
        if not subs:
            raise InvalidArgumentError("a topology needs at least one sub-array")
        lead = subs[0].leading
        if lead.x != 0.0 or lead.y != 0.0:
            raise InvalidArgumentError(
                f"sub-array 1 must lead at the origin, got ({lead.x}, {lead.y})"
            )

    @property
    def size(self) -> int:
        return sum(s.count for s in self.subarrays)

    @property
    def spacings(self) -> List[float]:
        return [s.spacing_d for s in self.subarrays]


@dataclass(frozen=True, eq=False)
class ArrayLayout:
    """Ordered element positions, shape (N, 2)."""
    positions: np.ndarray

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float, copy=True).reshape(-1, 2)
        if pos.shape[0] < 1:
            raise InvalidArgumentError("a layout needs at least one element")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("layout positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if np.unique(pos, axis=0).shape[0] < pos.shape[0]:
            logger.warning(
                "layout contains duplicate positions",
                extra={"n_elements": int(pos.shape[0])},
            )

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "ArrayLayout":
        return cls(np.asarray(list(points), dtype=float))

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    @property
    def x(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.positions[:, 1]

    def translated(self, dx: float, dy: float) -> "ArrayLayout":
        return ArrayLayout(self.positions + np.array([dx, dy]))

    def shifted(self, deltas: np.ndarray) -> "ArrayLayout":
        """Per-element displacement; deltas has shape (N, 2)."""
        deltas = np.asarray(deltas, dtype=float)
        if deltas.shape != self.positions.shape:
            raise InvalidArgumentError(
                f"deltas shape {deltas.shape} does not match layout {self.positions.shape}"
            )
        return ArrayLayout(self.positions + deltas)


@dataclass(frozen=True)
class FarFieldQuery:
    r: float
    theta: float

    def __post_init__(self) -> None:
        _require_finite("far-field query", self.r, self.theta)
        if self.r <= 0:
            raise InvalidArgumentError(f"r must be > 0, got {self.r}")


# ==================================================
# DISTANCES
# ==================================================
def exact_distance(q: FarFieldQuery, p: Position2D) -> float:
    """Distance from element p to the point at range r in direction θ."""
    return math.hypot(q.r * math.sin(q.theta) - p.x, q.r * math.cos(q.theta) - p.y)


def far_field_distance(q: FarFieldQuery, p: Position2D) -> float:
    """First-order expansion r - (x sinθ + y cosθ)."""
    return q.r - (p.x * math.sin(q.theta) + p.y * math.cos(q.theta))


def far_field_error(q: FarFieldQuery, p: Position2D) -> float:
    # leading term is (x² + y² - (x sinθ + y cosθ)²) / (2r)
    return abs(exact_distance(q, p) - far_field_distance(q, p))


# ==================================================
# TOPOLOGIES
# ==================================================
def expand_topology(t: MultiLinearTopology) -> ArrayLayout:
    """Sub-array-major, index-major element order."""
    points: List[Tuple[float, float]] = []
    for sub in t.subarrays:
        for n in range(sub.count):
            points.append((sub.leading.x + n * sub.spacing_d, sub.leading.y))
    return ArrayLayout.from_points(points)


def uniform_linear(d: float, n: int) -> MultiLinearTopology:
    return MultiLinearTopology((LinearSubarray(Position2D(0.0, 0.0), d, n),))


def dual_linear(d: float, x21: float, y21: float, n1: int, n2: int) -> MultiLinearTopology:
    """Two parallel lines with equal spacing d; line 2 leads at (x21, y21)."""
    _require_finite("dual-linear parameters", d, x21, y21)
    if d <= 0:
        raise InvalidArgumentError(f"d must be > 0, got {d}")
    return MultiLinearTopology(
        (
            LinearSubarray(Position2D(0.0, 0.0), d, n1),
            LinearSubarray(Position2D(x21, y21), d, n2),
        )
    )


def equilateral_dual(d: float, n1: int, n2: int) -> MultiLinearTopology:
    """
    Dual-linear topology whose leading element of line 2 forms an equilateral
    triangle of side d with the first two elements of line 1.
    """
    return dual_linear(d, d / 2.0, d * math.sqrt(3.0) / 2.0, n1, n2)


# ==================================================
# TABULAR I/O
# ==================================================
def layout_to_frame(layout: ArrayLayout) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "index": np.arange(len(layout)),
            "x_wavelengths": layout.x,
            "y_wavelengths": layout.y,
        }
    )


def layout_from_frame(df: pd.DataFrame) -> ArrayLayout:
    required_cols = {"x_wavelengths", "y_wavelengths"}
    if not required_cols.issubset(df.columns):
        raise InvalidArgumentError(
            "layout table must contain x_wavelengths, y_wavelengths columns"
        )
    if "index" in df.columns:
        df = df.sort_values("index", kind="stable")
    return ArrayLayout(df[["x_wavelengths", "y_wavelengths"]].to_numpy(dtype=float))
