"""
Experiment configuration: TOML file + named presets, validated by pydantic.

Precedence (highest first): CLI flags > config file > preset > schema default.
Angles are degrees here; the analysis layer works in radians.
"""

from __future__ import annotations

import copy
import logging
import math
import os
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import toml
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing_extensions import Annotated

from analysis.errors import ConfigError

logger = logging.getLogger(__name__)

APP_NAME = "swarmbeam"
APP_VERSION = "0.1.0"

SQRT3 = math.sqrt(3.0)


# ==================================================
# SCHEMA
# ==================================================
class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _check_fov(v: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = v
    if not hi > lo:
        raise ValueError(f"fov_deg must be increasing, got {list(v)}")
    return v


FovDeg = Annotated[Tuple[float, float], AfterValidator(_check_fov)]


class SubarrayConfig(StrictModel):
    x: float = 0.0
    y: float = 0.0
    d: float = Field(gt=0)
    count: int = Field(ge=1)


class MultilinearTopologyConfig(StrictModel):
    kind: Literal["multilinear"]
    subarrays: List[SubarrayConfig] = Field(min_length=1)

    @model_validator(mode="after")
    def _first_at_origin(self) -> "MultilinearTopologyConfig":
        first = self.subarrays[0]
        if first.x != 0.0 or first.y != 0.0:
            raise ValueError("subarrays[0] must lead at the origin (x = 0, y = 0)")
        return self


class DualTopologyConfig(StrictModel):
    kind: Literal["dual"]
    d: float = Field(gt=0)
    x21: float
    y21: float
    n1: int = Field(ge=1)
    n2: int = Field(ge=1)


class EquilateralTopologyConfig(StrictModel):
    kind: Literal["equilateral"]
    d: float = Field(gt=0)
    n1: int = Field(ge=1)
    n2: int = Field(ge=1)


class CsvTopologyConfig(StrictModel):
    kind: Literal["explicit-csv"]
    path: str
    units: Literal["wavelengths", "meters"] = "wavelengths"
    lambda_m: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _meters_need_lambda(self) -> "CsvTopologyConfig":
        if self.units == "meters" and self.lambda_m is None:
            raise ValueError("lambda_m is required when units = 'meters'")
        return self


TopologyConfig = Annotated[
    Union[MultilinearTopologyConfig, DualTopologyConfig, EquilateralTopologyConfig, CsvTopologyConfig],
    Field(discriminator="kind"),
]


class SweepConfig(StrictModel):
    steer_count: int = Field(default=181, ge=1)
    obs_count: int = Field(default=721, ge=3)
    fov_deg: FovDeg = (-90.0, 90.0)
    epsilon: float = Field(default=0.01, gt=0, lt=1)


class PerturbationConfig(StrictModel):
    sigma_wavelengths: Optional[float] = Field(default=None, ge=0)
    sigma_m: Optional[float] = Field(default=None, ge=0)
    lambda_m: Optional[float] = Field(default=None, gt=0)
    covariance_file: Optional[str] = None
    covariance_units: Literal["wavelengths", "meters"] = "wavelengths"
    trials: int = Field(default=500, ge=1)
    seed: int = Field(default=0, ge=0)
    theta_s_deg: float = 0.0
    obs_count: int = Field(default=181, ge=1)
    fov_deg: FovDeg = (-90.0, 90.0)
    sizes: Optional[List[Annotated[int, Field(ge=2)]]] = None
    tail_points: int = Field(default=20, ge=1)

    @model_validator(mode="after")
    def _one_noise_source(self) -> "PerturbationConfig":
        given = [
            name
            for name in ("sigma_wavelengths", "sigma_m", "covariance_file")
            if getattr(self, name) is not None
        ]
        if len(given) != 1:
            raise ValueError(
                "give exactly one of sigma_wavelengths, sigma_m, covariance_file"
                f" (got {', '.join(given) or 'none'})"
            )
        needs_lambda = self.sigma_m is not None or (
            self.covariance_file is not None and self.covariance_units == "meters"
        )
        if needs_lambda and self.lambda_m is None:
            raise ValueError("lambda_m is required for inputs given in meters")
        if self.sizes is not None and self.covariance_file is not None:
            raise ValueError("sizes (array-size protocol) needs an isotropic sigma")
        return self

    @property
    def sigma(self) -> Optional[float]:
        """Isotropic σ in wavelength units, or None for a covariance file."""
        if self.sigma_wavelengths is not None:
            return self.sigma_wavelengths
        if self.sigma_m is not None:
            return self.sigma_m / self.lambda_m
        return None


class SpectrumConfig(StrictModel):
    n: int = Field(default=2000, ge=2)
    side_m: float = Field(default=10.0, gt=0)
    lambda_m: float = Field(default=0.3, gt=0)
    seed: int = Field(default=0, ge=0)
    part: Literal["cosine", "sinc", "both"] = "sinc"
    shift: Union[Literal["auto"], float] = "auto"


class ExperimentConfig(StrictModel):
    threads: int = Field(default=1, ge=1)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    topology: Optional[TopologyConfig] = None
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    perturbation: Optional[PerturbationConfig] = None
    spectrum: SpectrumConfig = Field(default_factory=SpectrumConfig)


# ==================================================
# PRESETS
# ==================================================
PRESETS: Dict[str, Dict[str, Any]] = {
    "fig6": {
        "topology": {"kind": "dual", "d": 0.8, "x21": 0.4, "y21": 0.32, "n1": 50, "n2": 49},
        "sweep": {"steer_count": 181, "obs_count": 721},
    },
    "fig7": {
        "topology": {"kind": "dual", "d": SQRT3 / 3, "x21": SQRT3 / 6, "y21": 0.5, "n1": 50, "n2": 49},
        "sweep": {"steer_count": 181, "obs_count": 721},
    },
    "fig8": {
        "topology": {"kind": "equilateral", "d": 0.6, "n1": 50, "n2": 49},
        "sweep": {"steer_count": 181, "obs_count": 721},
    },
    "fig9": {
        "topology": {"kind": "equilateral", "d": SQRT3 / 3, "n1": 50, "n2": 49},
        "perturbation": {
            "sigma_wavelengths": 0.1,
            "trials": 500,
            "theta_s_deg": 0.0,
            "obs_count": 181,
            "sizes": [40, 80, 160],
        },
    },
    "fig10": {"spectrum": {"n": 8000, "side_m": 20.0, "lambda_m": 0.3, "part": "both"}},
    "fig10-desk": {"spectrum": {"n": 2000, "side_m": 10.0, "lambda_m": 0.3, "part": "both"}},
    "fig11": {"spectrum": {"n": 8000, "side_m": 40.0, "lambda_m": 0.3, "part": "both"}},
    "fig11-desk": {"spectrum": {"n": 2000, "side_m": 20.0, "lambda_m": 0.3, "part": "both"}},
}


# ==================================================
# LOADING
# ==================================================
def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; override wins, tables merge key by key."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            # a topology of another kind replaces the preset one wholesale
            if key == "topology" and value.get("kind", out[key].get("kind")) != out[key].get("kind"):
                out[key] = copy.deepcopy(value)
            else:
                out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _format_problems(exc: ValidationError) -> List[str]:
    problems = []
    for err in exc.errors():
        path = ".".join(str(part) for part in err["loc"]) or "<root>"
        problems.append(f"{path}: {err['msg']}")
    return problems


def _resolve_paths(raw: Dict[str, Any], base_dir: str) -> None:
    topo = raw.get("topology")
    if isinstance(topo, dict) and isinstance(topo.get("path"), str):
        topo["path"] = os.path.normpath(os.path.join(base_dir, topo["path"]))
    pert = raw.get("perturbation")
    if isinstance(pert, dict) and isinstance(pert.get("covariance_file"), str):
        pert["covariance_file"] = os.path.normpath(os.path.join(base_dir, pert["covariance_file"]))


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = toml.load(path)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    _resolve_paths(raw, os.path.dirname(os.path.abspath(path)))
    return raw


def load_config(
    path: Optional[str] = None,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> ExperimentConfig:
    if path is None and preset is None:
        raise ConfigError("give --config, --preset, or both")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}", [f"preset: choose one of {', '.join(sorted(PRESETS))}"])

    raw: Dict[str, Any] = copy.deepcopy(PRESETS[preset]) if preset else {}
    if path is not None:
        raw = deep_merge(raw, read_config_file(path))

    if threads is not None:
        raw["threads"] = threads
    if seed is not None:
        if isinstance(raw.setdefault("spectrum", {}), dict):
            raw["spectrum"]["seed"] = seed
        if isinstance(raw.get("perturbation"), dict):
            raw["perturbation"]["seed"] = seed

    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError("invalid configuration", _format_problems(exc)) from exc

    logger.info("configuration resolved", extra={"config_path": path, "preset": preset})
    return cfg


def resolved(cfg: ExperimentConfig) -> Dict[str, Any]:
    return cfg.model_dump(mode="json")
