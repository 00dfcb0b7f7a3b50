"""Error taxonomy shared by the analysis modules and the CLI."""

from __future__ import annotations

from typing import List, Optional


class SwarmBeamError(ValueError):
    """Base class. Subclasses ValueError so bad-input handling stays uniform."""


class InvalidArgumentError(SwarmBeamError):
    pass


class DegenerateGeometryError(SwarmBeamError):
    """Dual-linear geometry collapsed onto one line (y21 = 0)."""


class DegenerateDistanceError(SwarmBeamError):
    """Two points of a Euclidean random matrix coincide."""


class OutOfRegimeError(SwarmBeamError):
    """A limiting law was requested outside its parameter regime."""


class ResourceGuardError(SwarmBeamError):
    pass


class ConfigError(SwarmBeamError):
    """
    Configuration validation failure.
    `problems` holds one "section.key: message" string per failing field.
    """

    def __init__(self, message: str, problems: Optional[List[str]] = None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)
