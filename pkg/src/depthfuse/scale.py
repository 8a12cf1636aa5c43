"""Per-frame recovery of the unknown SfM scale from co-registered depth."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NoScaleError, ShapeError
from .geometry import DepthRaster, VarianceRaster

SCALE_MODES = ("least_squares", "mean_ratio")
DEFAULT_MIN_SUPPORT = 50
TRIM_FRACTION = 0.05


@dataclass(frozen=True)
class ScaleEstimate:
    alpha: float
    support: int
    mode: str
    fallback: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"scale must be positive and finite, got {self.alpha}")


def valid_overlap(rgbd: DepthRaster, sfm: DepthRaster) -> np.ndarray:
    """Boolean mask of pixels where both depths are valid and positive."""
    if rgbd.shape != sfm.shape:
        raise ShapeError(f"raster shapes differ: {rgbd.shape} vs {sfm.shape}")
    both = rgbd.valid & sfm.valid
    both &= np.where(both, rgbd.values, 0) > 0
    both &= np.where(both, sfm.values, 0) > 0
    return both


def scale_error(rgbd: DepthRaster, sfm: DepthRaster, alpha: float) -> float:
    """Sum of squared residuals ``d - alpha * mu`` over the overlap."""
    v = valid_overlap(rgbd, sfm)
    r = rgbd.values[v] - alpha * sfm.values[v]
    return float(np.dot(r, r))


def estimate_scale(
    rgbd: DepthRaster,
    sfm: DepthRaster,
    mode: str = "least_squares",
    min_support: int = DEFAULT_MIN_SUPPORT,
    prev: ScaleEstimate | None = None,
    trimmed: bool = False,
) -> ScaleEstimate:
    """Estimate ``alpha`` with ``rgbd ~ alpha * sfm``.

    ``least_squares`` gives the exact minimizer ``sum(d*mu) / sum(mu**2)``;
    ``mean_ratio`` averages ``d / mu``. With ``trimmed`` the lowest and highest
    5% of ratios are discarded first. When fewer than ``min_support`` pixels
    remain, ``prev``'s scale is returned flagged as a fallback, carrying the
    actual (insufficient) support.
    """
    if mode not in SCALE_MODES:
        raise ConfigError(f"unknown scale mode {mode!r}; expected one of {SCALE_MODES}")
    if not (isinstance(min_support, (int, np.integer)) and min_support >= 1):
        raise ConfigError(f"min_support must be a positive integer, got {min_support!r}")
    v = valid_overlap(rgbd, sfm)
    d = rgbd.values[v]
    mu = sfm.values[v]
    if trimmed and len(d):
        ratio = d / mu
        lo, hi = np.quantile(ratio, [TRIM_FRACTION, 1.0 - TRIM_FRACTION])
        keep = (ratio >= lo) & (ratio <= hi)
        d, mu = d[keep], mu[keep]
    n = len(d)
    if n < min_support:
        if prev is None:
            raise NoScaleError(f"only {n} overlapping pixels (need {min_support}) and no previous scale")
        return replace(prev, support=n, fallback=True)
    if mode == "least_squares":
        alpha = float(np.dot(d, mu) / np.dot(mu, mu))
    else:
        alpha = float(np.mean(d / mu))
    return ScaleEstimate(alpha, n, mode, False)


def apply_scale(
    sfm_depth: DepthRaster, sfm_var: VarianceRaster | None, est: ScaleEstimate
) -> tuple[DepthRaster, VarianceRaster | None]:
    a = est.alpha
    depth = DepthRaster(sfm_depth.values * a, sfm_depth.valid.copy())
    if sfm_var is None:
        return depth, None
    return depth, VarianceRaster(sfm_var.values * (a * a), sfm_var.valid.copy())
