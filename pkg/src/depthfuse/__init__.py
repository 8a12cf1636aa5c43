"""Fusion of structured-light RGBD depth with semi-dense SfM depth.

Modules: ``camera`` (pinhole model), ``geometry`` (poses, rasters, warping),
``noise`` (RGBD depth noise), ``registration`` (keyframe to frame), ``scale``
(SfM scale recovery), ``fusion`` (per-pixel Gaussian update), ``dataio``
(file formats), ``sim`` (synthetic oracle), ``pipeline`` and ``cli``.
"""

from .camera import CameraIntrinsics, back_project, project
from .errors import DataError, DepthFuseError
from .fusion import FusedFrame, Provenance, fuse_frame, fuse_pixel
from .geometry import DepthRaster, PointCloud, Pose, VarianceRaster, warp_depth
from .noise import RgbdNoiseModel
from .pipeline import PipelineConfig, run_fusion
from .scale import ScaleEstimate, estimate_scale

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "DataError",
    "DepthFuseError",
    "DepthRaster",
    "FusedFrame",
    "PipelineConfig",
    "PointCloud",
    "Pose",
    "Provenance",
    "RgbdNoiseModel",
    "ScaleEstimate",
    "VarianceRaster",
    "back_project",
    "estimate_scale",
    "fuse_frame",
    "fuse_pixel",
    "project",
    "run_fusion",
    "warp_depth",
]
