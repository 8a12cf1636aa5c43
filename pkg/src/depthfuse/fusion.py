"""Per-pixel Gaussian fusion of RGBD and scaled SfM depth, with provenance."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import EmptyInputError, InvalidVarianceError, ShapeError
from .geometry import DepthRaster, VarianceRaster
from .scale import ScaleEstimate

DEFAULT_GATE_K = 3.0
DEFAULT_SIGMA_VIZ_MAX = 0.1


class Provenance(IntEnum):
    NONE = 0
    RGBD_ONLY = 1
    SFM_ONLY = 2
    FUSED = 3


PROVENANCE_COLORS = {
    Provenance.NONE: (0, 0, 0),
    Provenance.RGBD_ONLY: (255, 255, 255),
    Provenance.SFM_ONLY: (255, 255, 0),
    Provenance.FUSED: (255, 0, 0),
}


@dataclass(frozen=True)
class FrameStats:
    timestamp: float
    rgbd_only: int
    sfm_only: int
    fused: int
    none: int

    @property
    def total_measured(self) -> int:
        return self.rgbd_only + self.sfm_only + self.fused

    def _pct(self, n: int) -> float:
        total = self.total_measured
        return 100.0 * n / total if total else 0.0

    @property
    def rgbd_only_pct(self) -> float:
        return self._pct(self.rgbd_only)

    @property
    def sfm_only_pct(self) -> float:
        return self._pct(self.sfm_only)

    @property
    def fused_pct(self) -> float:
        return self._pct(self.fused)

    @classmethod
    def from_labels(cls, labels: np.ndarray, timestamp: float = 0.0) -> "FrameStats":
        counts = np.bincount(labels.ravel(), minlength=4)
        return cls(
            timestamp,
            int(counts[Provenance.RGBD_ONLY]),
            int(counts[Provenance.SFM_ONLY]),
            int(counts[Provenance.FUSED]),
            int(counts[Provenance.NONE]),
        )


@dataclass(eq=False)
class FusedFrame:
    depth: DepthRaster
    variance: VarianceRaster
    provenance: np.ndarray  # uint8 Provenance labels
    scale: ScaleEstimate | None
    stats: FrameStats


@dataclass(frozen=True)
class StatsRow:
    """One line of a provenance-ratio table."""

    label: str
    rgbd_only_pct: float
    sfm_only_pct: float
    fused_pct: float
    total_measured: float


def _fuse(d, vd, has_d, mu, vm, has_mu, gate):
    """Vectorized core shared by :func:`fuse_pixel` and :func:`fuse_frame`."""
    both = has_d & has_mu
    out_z = np.where(has_d, d, np.where(has_mu, mu, np.nan))
    out_v = np.where(has_d, vd, np.where(has_mu, vm, np.nan))
    label = np.where(
        both,
        Provenance.FUSED,
        np.where(has_d, Provenance.RGBD_ONLY, np.where(has_mu, Provenance.SFM_ONLY, Provenance.NONE)),
    ).astype(np.uint8)
    if both.any():
        a, va, b, vb = d[both], vd[both], mu[both], vm[both]
        wa, wb = 1.0 / va, 1.0 / vb
        wsum = wa + wb
        z = (wa * a + wb * b) / wsum
        v = 1.0 / wsum
        if gate is not None:
            reject = np.abs(a - b) > gate * np.sqrt(va + vb)
            prefer_d = va <= vb
            z = np.where(reject, np.where(prefer_d, a, b), z)
            v = np.where(reject, np.where(prefer_d, va, vb), v)
            sub = np.where(prefer_d, Provenance.RGBD_ONLY, Provenance.SFM_ONLY).astype(np.uint8)
            label[both] = np.where(reject, sub, Provenance.FUSED)
        out_z[both] = z
        out_v[both] = v
    return out_z, out_v, label


def _check_var(v, present, what):
    bad = present & ~(np.isfinite(v) & (v > 0))
    if np.any(bad):
        raise InvalidVarianceError(f"{what} variance must be positive and finite where depth is present")


def fuse_pixel(d_rgbd=None, var_rgbd=None, mu_sfm=None, var_sfm=None, gate: float | None = None):
    """Fuse one pixel. Absent measurements are passed as ``None``.

    Returns ``(depth, variance, label)``; depth and variance are NaN when
    neither source is present.
    """
    has_d = d_rgbd is not None
    has_mu = mu_sfm is not None
    if has_d and (var_rgbd is None or not (np.isfinite(var_rgbd) and var_rgbd > 0)):
        raise InvalidVarianceError(f"RGBD variance must be positive and finite, got {var_rgbd}")
    if has_mu and (var_sfm is None or not (np.isfinite(var_sfm) and var_sfm > 0)):
        raise InvalidVarianceError(f"SfM variance must be positive and finite, got {var_sfm}")
    arr = lambda x: np.array([np.nan if x is None else float(x)])  # noqa: E731
    z, v, lab = _fuse(
        arr(d_rgbd), arr(var_rgbd), np.array([has_d]), arr(mu_sfm), arr(var_sfm), np.array([has_mu]), gate
    )
    return float(z[0]), float(v[0]), Provenance(int(lab[0]))


def fuse_frame(
    rgbd: DepthRaster,
    rgbd_var: VarianceRaster,
    sfm: DepthRaster | None = None,
    sfm_var: VarianceRaster | None = None,
    scale_est: ScaleEstimate | None = None,
    gate: float | None = None,
    timestamp: float = 0.0,
) -> FusedFrame:
    """Fuse a frame. SfM rasters must already be in metric scale."""
    if rgbd_var.shape != rgbd.shape:
        raise ShapeError("RGBD depth and variance shapes differ")
    has_d = rgbd.valid
    _check_var(rgbd_var.values, has_d, "RGBD")
    if not np.all(rgbd_var.valid[has_d]):
        raise InvalidVarianceError("RGBD variance missing at valid depth pixels")
    if sfm is None:
        mu = np.full(rgbd.shape, np.nan)
        vm = np.full(rgbd.shape, np.nan)
        has_mu = np.zeros(rgbd.shape, dtype=bool)
    else:
        if sfm_var is None:
            raise InvalidVarianceError("SfM depth given without variance")
        if sfm.shape != rgbd.shape or sfm_var.shape != rgbd.shape:
            raise ShapeError(f"SfM raster shape {sfm.shape} differs from RGBD {rgbd.shape}")
        mu, vm, has_mu = sfm.values, sfm_var.values, sfm.valid
        _check_var(vm, has_mu, "SfM")
    z, v, labels = _fuse(rgbd.values, rgbd_var.values, has_d, mu, vm, has_mu, gate)
    measured = labels != Provenance.NONE
    return FusedFrame(
        DepthRaster(z, measured),
        VarianceRaster(v, measured),
        labels,
        scale_est,
        FrameStats.from_labels(labels, timestamp),
    )


def colorize_provenance(labels: np.ndarray) -> np.ndarray:
    """RGB image: white RGBD-only, yellow SfM-only, red fused, black none."""
    lut = np.zeros((256, 3), dtype=np.uint8)
    for lab, rgb in PROVENANCE_COLORS.items():
        lut[int(lab)] = rgb
    return lut[np.asarray(labels, dtype=np.uint8)]


def sigma_image(variance: VarianceRaster, sigma_max: float = DEFAULT_SIGMA_VIZ_MAX) -> np.ndarray:
    """8-bit grayscale of the standard deviation, linear on ``[0, sigma_max]``.

    Unmeasured pixels are 0, same as a zero deviation.
    """
    sigma = np.sqrt(variance.filled(0.0))
    return np.rint(np.clip(sigma / sigma_max, 0.0, 1.0) * 255.0).astype(np.uint8)


def _mean_row(label: str, rows: list) -> StatsRow:
    return StatsRow(
        label,
        float(np.mean([r.rgbd_only_pct for r in rows])),
        float(np.mean([r.sfm_only_pct for r in rows])),
        float(np.mean([r.fused_pct for r in rows])),
        float(np.mean([r.total_measured for r in rows])),
    )


def sequence_stats(frames: Iterable) -> list[StatsRow]:
    """Per-frame rows followed by an ``average`` row of mean percentages.

    Accepts :class:`FusedFrame`, :class:`FrameStats` or :class:`StatsRow` items.
    """
    rows = []
    for f in frames:
        s = f.stats if isinstance(f, FusedFrame) else f
        if isinstance(s, FrameStats):
            s = StatsRow(f"{s.timestamp:.6f}", s.rgbd_only_pct, s.sfm_only_pct, s.fused_pct, s.total_measured)
        rows.append(s)
    if not rows:
        raise EmptyInputError("sequence_stats needs at least one frame")
    return rows + [_mean_row("average", rows)]


def format_table(rows: list[StatsRow], first_header: str = "frame") -> str:
    header = f"{first_header:>17} {'RGBD-only (%)':>14} {'SfM-only (%)':>13} {'Fused (%)':>10}"
    lines = [header, "-" * len(header)]
    for r in rows:
        name = "Average" if r.label == "average" else r.label
        lines.append(f"{name:>17} {r.rgbd_only_pct:>14.1f} {r.sfm_only_pct:>13.1f} {r.fused_pct:>10.1f}")
    return "\n".join(lines)
