"""Bring keyframe SfM depth into the camera of each tracked RGBD frame."""

from __future__ import annotations

import bisect
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics
from .errors import ConfigError, NoKeyframeError, PoseLookupError, ShapeError
from .geometry import DepthRaster, Pose, VarianceRaster, relative_pose, warp_depth

POSE_LOOKUP_TOL = 1e-4


@dataclass(eq=False)
class Keyframe:
    id: str
    timestamp: float
    pose: Pose
    sfm_depth: DepthRaster
    sfm_variance: VarianceRaster

    def __post_init__(self):
        if not np.array_equal(self.sfm_depth.valid, self.sfm_variance.valid):
            raise ShapeError(f"keyframe {self.id}: depth and variance masks differ")

    @property
    def density(self) -> float:
        """Fraction of pixels carrying an SfM estimate."""
        return self.sfm_depth.count / self.sfm_depth.valid.size


@dataclass(eq=False)
class TrackedFrame:
    timestamp: float
    pose: Pose
    rgbd_depth: DepthRaster
    keyframe_id: str | None = None


def select_keyframe(frame_ts: float, keyframes: Sequence[Keyframe]) -> Keyframe:
    """Most recent keyframe at or before ``frame_ts``.

    ``keyframes`` must be sorted by timestamp.
    """
    stamps = [kf.timestamp for kf in keyframes]
    i = bisect.bisect_right(stamps, frame_ts)
    if i == 0:
        raise NoKeyframeError(f"no keyframe at or before t={frame_ts:.6f}")
    return keyframes[i - 1]


def lookup_pose(trajectory: Mapping[float, Pose], timestamp: float, tol: float = POSE_LOOKUP_TOL) -> Pose:
    """Exact-match pose lookup within ``tol`` seconds; no interpolation."""
    pose = trajectory.get(timestamp)
    if pose is not None:
        return pose
    stamps = np.fromiter(trajectory.keys(), dtype=float, count=len(trajectory))
    if len(stamps):
        nearest = stamps[np.argmin(np.abs(stamps - timestamp))]
        if abs(nearest - timestamp) <= tol:
            return trajectory[float(nearest)]
    raise PoseLookupError(f"no trajectory pose within {tol:g} s of t={timestamp:.6f}")


def register_sfm_depth(
    kf: Keyframe, frame: TrackedFrame, intr: CameraIntrinsics, mode: str = "bilinear"
) -> tuple[DepthRaster, VarianceRaster]:
    """Keyframe SfM depth and variance as seen from ``frame``'s camera (SfM scale).

    A frame taken at the keyframe's own timestamp gets copies of the keyframe
    rasters without any resampling.
    """
    if frame.keyframe_id is not None and frame.keyframe_id != kf.id:
        raise ConfigError(f"frame governed by keyframe {frame.keyframe_id}, got {kf.id}")
    if frame.timestamp == kf.timestamp:
        # the frame is the keyframe: already co-registered
        return kf.sfm_depth.copy(), kf.sfm_variance.copy()
    rel = relative_pose(kf.pose, frame.pose)
    return warp_depth(intr, kf.sfm_depth, kf.sfm_variance, rel, mode)
