"""Structured-light depth noise: standard deviation grows with the square of depth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import camera
from .camera import CameraIntrinsics
from .errors import ConfigError, InvalidDepthError
from .geometry import DepthRaster, VarianceRaster

# |m / (f_x b)| / 2 for a Kinect-class sensor, units 1/m
DEFAULT_DEPTH_COEFF = 1.425e-3


@dataclass(frozen=True)
class RgbdNoiseModel:
    depth_coeff: float = DEFAULT_DEPTH_COEFF

    def __post_init__(self):
        if not self.depth_coeff > 0:
            raise ConfigError(f"depth_coeff must be positive, got {self.depth_coeff}")


def _check_depth(depth):
    d = np.asarray(depth, dtype=float)
    if not np.all(np.isfinite(d) & (d > 0)):
        raise InvalidDepthError(f"depth must be positive and finite, got {depth}")
    return d


def depth_sigma(model: RgbdNoiseModel, depth):
    """Axial standard deviation ``coeff * Z**2`` in meters (scalar or array)."""
    d = _check_depth(depth)
    out = model.depth_coeff * d * d
    return float(out) if out.ndim == 0 else out


def variance_raster(model: RgbdNoiseModel, depth: DepthRaster) -> VarianceRaster:
    values = np.full(depth.shape, np.nan)
    z = depth.values[depth.valid]
    sigma = model.depth_coeff * z * z
    values[depth.valid] = sigma * sigma
    return VarianceRaster(values, depth.valid.copy())


def lateral_sigma(model: RgbdNoiseModel, intr: CameraIntrinsics, col, row, depth):
    """Lateral ``(sigma_X, sigma_Y)`` in meters.

    Each is the axial sigma scaled by the pixel's normalized offset from the
    principal point; the magnitude is returned so left/up-of-centre pixels
    still get non-negative deviations.
    """
    sz = model.depth_coeff * np.square(_check_depth(depth))
    ax, ay = camera.pixel_rays(intr, col, row)
    sx, sy = np.abs(ax) * sz, np.abs(ay) * sz
    if np.ndim(sx) == 0:
        return float(sx), float(sy)
    return sx, sy
