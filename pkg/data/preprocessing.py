from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from analysis.errors import ConfigError
from analysis.geometry import (
    ArrayLayout,
    LinearSubarray,
    MultiLinearTopology,
    Position2D,
    dual_linear,
    equilateral_dual,
    expand_topology,
    layout_from_frame,
)
from analysis.perturbation import PerturbationModel
from analysis.randmatrix import CubeEnsemble
from data.config import (
    CsvTopologyConfig,
    DualTopologyConfig,
    EquilateralTopologyConfig,
    ExperimentConfig,
    MultilinearTopologyConfig,
    PerturbationConfig,
)

logger = logging.getLogger(__name__)

COVARIANCE_COLUMNS = ["index", "sxx", "sxy", "syy"]


# ==================================================
# HELPERS
# ==================================================
def to_wavelengths(values_m, lambda_m: float):
    """Meters -> multiples of λ"""
    if lambda_m <= 0:
        raise ConfigError(f"lambda_m must be > 0, got {lambda_m}")
    return np.asarray(values_m, dtype=float) / lambda_m


def _read_table(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


# ==================================================
# LAYOUTS
# ==================================================
def read_layout_csv(path: str, units: str = "wavelengths", lambda_m: Optional[float] = None) -> ArrayLayout:
    """
    Layout table with columns index,x_wavelengths,y_wavelengths
    (or index,x_m,y_m when units = "meters").
    """
    df = _read_table(path)

    if units == "meters":
        required_cols = {"x_m", "y_m"}
        if not required_cols.issubset(df.columns):
            raise ConfigError(f"{path}: layout in meters needs columns x_m, y_m")
        df = df.assign(
            x_wavelengths=to_wavelengths(df["x_m"], lambda_m),
            y_wavelengths=to_wavelengths(df["y_m"], lambda_m),
        )

    try:
        layout = layout_from_frame(df)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    logger.info("layout loaded", extra={"path": path, "n_elements": len(layout), "units": units})
    return layout


def build_topology(cfg: ExperimentConfig) -> Tuple[Optional[MultiLinearTopology], ArrayLayout]:
    """
    Topology section -> (structured topology or None for explicit layouts,
    expanded layout).
    """
    topo = cfg.topology
    if topo is None:
        raise ConfigError("this command needs a [topology] section")

    if isinstance(topo, DualTopologyConfig):
        t = dual_linear(topo.d, topo.x21, topo.y21, topo.n1, topo.n2)
    elif isinstance(topo, EquilateralTopologyConfig):
        t = equilateral_dual(topo.d, topo.n1, topo.n2)
    elif isinstance(topo, MultilinearTopologyConfig):
        t = MultiLinearTopology(
            tuple(LinearSubarray(Position2D(s.x, s.y), s.d, s.count) for s in topo.subarrays)
        )
    elif isinstance(topo, CsvTopologyConfig):
        return None, read_layout_csv(topo.path, topo.units, topo.lambda_m)
    else:
        raise ConfigError(f"unsupported topology kind {getattr(topo, 'kind', topo)!r}")

    return t, expand_topology(t)


# ==================================================
# PERTURBATIONS
# ==================================================
def read_covariance_csv(
    path: str,
    n_elements: int,
    units: str = "wavelengths",
    lambda_m: Optional[float] = None,
) -> PerturbationModel:
    """
    Per-element covariance table index,sxx,sxy,syy
    (wavelength² units, or m² when units = "meters").
    """
    df = _read_table(path)

    required_cols = set(COVARIANCE_COLUMNS)
    if not required_cols.issubset(df.columns):
        raise ConfigError(f"{path}: covariance table needs columns {', '.join(COVARIANCE_COLUMNS)}")
    df = df.sort_values("index", kind="stable")
    if len(df) != n_elements:
        raise ConfigError(f"{path}: {len(df)} covariance rows for {n_elements} elements")

    sxx, sxy, syy = (df[c].to_numpy(dtype=float) for c in ("sxx", "sxy", "syy"))
    cov = np.stack([np.stack([sxx, sxy], axis=-1), np.stack([sxy, syy], axis=-1)], axis=1)
    if units == "meters":
        cov = cov / lambda_m**2
    try:
        return PerturbationModel.anisotropic(cov)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_perturbation_model(section: PerturbationConfig, n_elements: int) -> PerturbationModel:
    if section.sigma is not None:
        return PerturbationModel.isotropic(section.sigma)
    return read_covariance_csv(section.covariance_file, n_elements, section.covariance_units, section.lambda_m)


# ==================================================
# ENSEMBLES
# ==================================================
def build_ensemble(cfg: ExperimentConfig) -> CubeEnsemble:
    s = cfg.spectrum
    return CubeEnsemble(n=s.n, side_m=s.side_m, lambda_m=s.lambda_m, seed=s.seed)
