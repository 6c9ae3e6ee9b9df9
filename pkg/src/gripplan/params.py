"""Analysis parameter set: the boundary conditions of a planning run."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
import math

import numpy as np

from .errors import ParamError


def _unit(vec, what: str) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise ParamError(f"{what} must be a nonzero vector")
    return v / n


@dataclass
class AnalysisParams:
    """Per-run boundary conditions for gripping-point detection.

    Lengths in mm, angles in degrees. ``raster_spacing`` defaults to a
    quarter of the cup diameter when left unset.
    """

    cup_diameter: float = 20.0
    cup_count: int = 3
    min_spacing: float = 30.0
    flatness_tol: float = 0.5
    cone_slope: float = 0.0
    max_curvature_angle: float = 10.0
    max_tilt: float = 15.0
    approach_axis: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    min_line_offset: float = 5.0
    stability_margin: float = 5.0
    raster_spacing: float | None = None
    roughness_limit: float | None = None
    allow_boundary: bool = False
    gravity: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, -1.0]))

    def __post_init__(self):
        self.approach_axis = _unit(self.approach_axis, "approach_axis")
        self.gravity = _unit(self.gravity, "gravity")
        if self.cup_diameter <= 0:
            raise ParamError("cup_diameter must be positive")
        if self.cup_count < 3:
            raise ParamError("cup_count must be at least 3")
        for name in ("min_spacing", "flatness_tol", "cone_slope",
                     "min_line_offset", "stability_margin"):
            if getattr(self, name) < 0:
                raise ParamError(f"{name} must be nonnegative")
        if not 0.0 <= self.max_curvature_angle <= 180.0:
            raise ParamError("max_curvature_angle must be in [0, 180]")
        if not 0.0 <= self.max_tilt <= 180.0:
            raise ParamError("max_tilt must be in [0, 180]")
        if self.raster_spacing is not None and self.raster_spacing <= 0:
            raise ParamError("raster_spacing must be positive")
        if self.roughness_limit is not None and self.roughness_limit < 0:
            raise ParamError("roughness_limit must be nonnegative")

    @property
    def effective_raster_spacing(self) -> float:
        if self.raster_spacing is not None:
            return self.raster_spacing
        return self.cup_diameter / 4.0

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value = [float(x) for x in value]
            out[f.name] = value
        return out

    @classmethod
    def from_mapping(cls, mapping: dict) -> "AnalysisParams":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ParamError(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**mapping)

    def replace(self, **overrides) -> "AnalysisParams":
        data = self.to_mapping()
        data.update(overrides)
        return AnalysisParams.from_mapping(data)


def parse_axis(text: str, what: str = "axis") -> np.ndarray:
    """Parse "x,y,z" into a unit vector."""
    parts = text.split(",")
    if len(parts) != 3:
        raise ParamError(f"{what} must be three comma-separated numbers")
    try:
        vec = [float(p) for p in parts]
    except ValueError as exc:
        raise ParamError(f"{what}: {exc}") from exc
    return _unit(vec, what)


def snapped_angle(deg: float) -> float:
    """Normalize an angle to [0, 360)."""
    a = math.fmod(deg, 360.0)
    return a + 360.0 if a < 0 else a
