"""Shared raster, geometry and configuration types used by every pipeline stage.

Rasters are float64 internally; 8-bit integer data only appears at I/O
boundaries. All containers freeze their buffers after construction so they
can be shared between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np


class GazeSegError(Exception):
    """Base class for all pipeline errors."""


class InvalidParameterError(GazeSegError):
    pass


class EmptyTraceError(GazeSegError):
    pass


class EmptyMapError(GazeSegError):
    pass


class ConfigError(GazeSegError):
    pass


class PixelPoint(NamedTuple):
    """Integer pixel coordinate; column x, row y."""

    x: int
    y: int


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Frame:
    """8-bit RGB raster, shape (height, width, 3), row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidParameterError(f"frame must be HxWx3, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidParameterError("frame dimensions must be positive")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def contains(self, p: PixelPoint) -> bool:
        return 0 <= p.x < self.width and 0 <= p.y < self.height


@dataclass(frozen=True)
class GrayMap:
    """Row-major float raster backing gaze maps, saliency maps and masks."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidParameterError(f"gray map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("gray map values must be finite")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def sigma_from_geometry(
    theta_deg: float,
    distance_R_cm: float,
    monitor_px: tuple[int, int],
    monitor_cm: tuple[float, float],
) -> float:
    """Estimate the gaze-spread std-dev in monitor pixels from viewing geometry.

    sigma = (theta/360) * pi * R * sqrt((W_p*H_p) / (W*H)) with R and the
    physical monitor size in centimeters. Linear in both theta and R.
    theta == 0 is allowed and yields 0.
    """
    wp, hp = monitor_px
    wcm, hcm = monitor_cm
    if theta_deg < 0:
        raise InvalidParameterError("theta_deg must be >= 0")
    for name, v in (("distance_R_cm", distance_R_cm), ("monitor_px", wp * hp),
                    ("monitor_cm", wcm * hcm)):
        if v <= 0:
            raise InvalidParameterError(f"{name} must be positive")
    return (theta_deg / 360.0) * math.pi * distance_R_cm * math.sqrt((wp * hp) / (wcm * hcm))


# Config fields holding (x, y)-style integer or float pairs.
_PAIR_INT_FIELDS = {"monitor_px"}
_PAIR_FLOAT_FIELDS = {"monitor_cm"}


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline, with the operating defaults.

    The gaze kernel spread is taken from ``sigma_px`` at runtime;
    :func:`sigma_from_geometry` exists for calibration studies but the
    default pipeline never calls it.
    ``enhance_blur_sigma = None`` means "derive as ROI side / 30".
    """

    theta_deg: float = 1.0
    distance_R_cm: float = 60.0
    monitor_px: tuple[int, int] = (1920, 1080)
    monitor_cm: tuple[float, float] = (64.0, 48.0)
    sigma_px: float = 25.0
    gaze_binarize_quantile: float = 0.85
    roi_min_M: int = 128
    enhance_alpha: float = 4.0
    enhance_beta: float = -4.0
    enhance_lambda: float = 128.0
    enhance_blur_sigma: float | None = None
    ft_cutoff: float = math.pi / 2.75
    fusion_gamma: float = 0.5
    fusion_eta: float = 0.5
    saliency_binarize_quantile: float = 0.90
    grid_N: int = 100
    dkf_roundness_min: float = 0.8
    mbd_max_passes: int = 10

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positives = [
            "theta_deg", "distance_R_cm", "sigma_px", "enhance_alpha",
            "enhance_lambda", "ft_cutoff", "fusion_gamma", "fusion_eta",
            "dkf_roundness_min",
        ]
        for name in positives:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("roi_min_M", "grid_N", "mbd_max_passes"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.grid_N < 2:
            raise ConfigError("grid_N must be >= 2")
        for name in ("gaze_binarize_quantile", "saliency_binarize_quantile"):
            q = getattr(self, name)
            if not (0.0 < q < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.enhance_blur_sigma is not None and self.enhance_blur_sigma <= 0:
            raise ConfigError("enhance_blur_sigma must be strictly positive or auto")
        if any(v <= 0 for v in self.monitor_px) or any(v <= 0 for v in self.monitor_cm):
            raise ConfigError("monitor geometry must be positive")

    def blur_sigma_for(self, size_M: int) -> float:
        if self.enhance_blur_sigma is not None:
            return self.enhance_blur_sigma
        return size_M / 30.0

    # Flat key/value text representation. One "key = value" per line,
    # '#' comments, unknown keys rejected.
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in _PAIR_INT_FIELDS:
                s = f"{v[0]},{v[1]}"
            elif f.name in _PAIR_FLOAT_FIELDS:
                s = f"{_fmt_float(v[0])},{_fmt_float(v[1])}"
            elif v is None:
                s = "auto"
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, float):
                s = _fmt_float(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in known:
                raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _parse_config_value(key, val)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read(), source=str(path))


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _parse_config_value(key: str, val: str):
    if key in _PAIR_INT_FIELDS:
        a, b = val.split(",")
        return (int(a), int(b))
    if key in _PAIR_FLOAT_FIELDS:
        a, b = val.split(",")
        return (float(a), float(b))
    if key == "enhance_blur_sigma" and val.lower() == "auto":
        return None
    if key in ("roi_min_M", "grid_N", "mbd_max_passes"):
        return int(val)
    return float(val)
