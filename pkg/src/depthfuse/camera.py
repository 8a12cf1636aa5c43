"""Pinhole camera model with optional radial-tangential distortion.

Pixel convention: the integer pixel ``(c, r)`` is the sample located at exactly
``(c, r)`` in continuous image coordinates; there is no half-pixel offset. The
image therefore covers ``[-0.5, width - 0.5) x [-0.5, height - 0.5)``.

Distortion enters the pinhole equations through per-pixel offsets
``delta = f * (undistorted - distorted)`` in normalized coordinates, so that

    X = (col + dx - cx) * Z / fx          (back-projection)
    col = fx * X / Z - dx + cx            (projection)

With all coefficients zero both offsets vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, BoundsError, ConfigError, InvalidDepthError

_UNDISTORT_ITERS = 50
_UNDISTORT_TOL = 1e-15


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    distortion: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"image size must be at least 1x1, got {self.width}x{self.height}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )
        if len(self.distortion) != 4:
            raise ConfigError("distortion must hold exactly four coefficients (k1, k2, p1, p2)")
        object.__setattr__(self, "distortion", tuple(float(d) for d in self.distortion))

    @property
    def shape(self) -> tuple[int, int]:
        """Raster shape as ``(height, width)``."""
        return (self.height, self.width)

    @property
    def has_distortion(self) -> bool:
        return any(d != 0.0 for d in self.distortion)

    def in_bounds(self, col, row):
        col = np.asarray(col)
        row = np.asarray(row)
        return (col >= -0.5) & (col < self.width - 0.5) & (row >= -0.5) & (row < self.height - 0.5)


@dataclass(frozen=True)
class Point3:
    """A point in the optical frame (x right, y down, z along the optical axis)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite point coordinates {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def distort_normalized(intr: CameraIntrinsics, xn, yn):
    """Apply the Brown-Conrady model to undistorted normalized coordinates."""
    k1, k2, p1, p2 = intr.distortion
    xn = np.asarray(xn, dtype=float)
    yn = np.asarray(yn, dtype=float)
    r2 = xn * xn + yn * yn
    radial = 1.0 + k1 * r2 + k2 * r2 * r2
    xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn)
    yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn
    return xd, yd


def undistort_normalized(intr: CameraIntrinsics, xd, yd):
    """Invert :func:`distort_normalized` by Newton iteration."""
    xd = np.asarray(xd, dtype=float)
    yd = np.asarray(yd, dtype=float)
    if not intr.has_distortion:
        return xd.copy(), yd.copy()
    k1, k2, p1, p2 = intr.distortion
    xn = xd.copy()
    yn = yd.copy()
    for _ in range(_UNDISTORT_ITERS):
        r2 = xn * xn + yn * yn
        radial = 1.0 + k1 * r2 + k2 * r2 * r2
        g = 2.0 * (k1 + 2.0 * k2 * r2)  # d(radial)/d(r2) * 2
        fx_ = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn) - xd
        fy_ = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn - yd
        j11 = radial + xn * g * xn + 2.0 * p1 * yn + 6.0 * p2 * xn
        j12 = xn * g * yn + 2.0 * p1 * xn + 2.0 * p2 * yn
        j21 = yn * g * xn + 2.0 * p1 * xn + 2.0 * p2 * yn
        j22 = radial + yn * g * yn + 6.0 * p1 * yn + 2.0 * p2 * xn
        det = j11 * j22 - j12 * j21
        step_x = (j22 * fx_ - j12 * fy_) / det
        step_y = (j11 * fy_ - j21 * fx_) / det
        xn = xn - step_x
        yn = yn - step_y
        if np.all(np.abs(step_x) < _UNDISTORT_TOL) and np.all(np.abs(step_y) < _UNDISTORT_TOL):
            break
    return xn, yn


def pixel_offsets(intr: CameraIntrinsics, col, row):
    """Distortion offsets ``(dx, dy)`` for observed pixel positions."""
    xd = (np.asarray(col, dtype=float) - intr.cx) / intr.fx
    yd = (np.asarray(row, dtype=float) - intr.cy) / intr.fy
    xn, yn = undistort_normalized(intr, xd, yd)
    return intr.fx * (xn - xd), intr.fy * (yn - yd)


def pixel_rays(intr: CameraIntrinsics, col, row):
    """Normalized ray slopes ``(X/Z, Y/Z)`` through the given pixels."""
    dx, dy = pixel_offsets(intr, col, row)
    ax = (np.asarray(col, dtype=float) + dx - intr.cx) / intr.fx
    ay = (np.asarray(row, dtype=float) + dy - intr.cy) / intr.fy
    return ax, ay


def back_project(intr: CameraIntrinsics, col, row, depth) -> np.ndarray:
    """Vectorized back-projection, no precondition checks. Returns ``(..., 3)``."""
    depth = np.asarray(depth, dtype=float)
    ax, ay = pixel_rays(intr, col, row)
    return np.stack(np.broadcast_arrays(ax * depth, ay * depth, depth), axis=-1)


def project(intr: CameraIntrinsics, points: np.ndarray):
    """Vectorized projection of ``(N, 3)`` points with ``z > 0``.

    Returns subpixel ``(col, row)`` arrays and the depths; no bounds clipping.
    """
    points = np.asarray(points, dtype=float)
    z = points[..., 2]
    xn = points[..., 0] / z
    yn = points[..., 1] / z
    if intr.has_distortion:
        xd, yd = distort_normalized(intr, xn, yn)
        dx = intr.fx * (xn - xd)
        dy = intr.fy * (yn - yd)
    else:
        dx = dy = 0.0
    col = intr.fx * xn - dx + intr.cx
    row = intr.fy * yn - dy + intr.cy
    return col, row, z


def back_project_pixel(intr: CameraIntrinsics, col: float, row: float, depth: float) -> Point3:
    """Recover the optical-frame point seen at ``(col, row)`` with the given depth."""
    if not depth > 0 or not math.isfinite(depth):
        raise InvalidDepthError(f"depth must be positive and finite, got {depth}")
    if not bool(intr.in_bounds(col, row)):
        raise BoundsError(f"pixel ({col}, {row}) outside {intr.width}x{intr.height} image")
    x, y, z = back_project(intr, col, row, depth)
    return Point3(float(x), float(y), float(z))


def project_point(intr: CameraIntrinsics, p: Point3) -> tuple[float, float, float]:
    """Project ``p`` to subpixel ``(col, row, depth)``. Coordinates may be off-image."""
    if not p.z > 0:
        raise BehindCameraError(f"point {p} is not in front of the camera")
    col, row, z = project(intr, p.as_array())
    return float(col), float(row), float(z)
