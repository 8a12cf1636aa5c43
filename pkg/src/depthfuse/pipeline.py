"""Frame-by-frame RGBD + SfM fusion over an on-disk dataset."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from . import dataio
from .errors import ConfigError, NoKeyframeError, NoScaleError
from .fusion import DEFAULT_SIGMA_VIZ_MAX, FusedFrame, colorize_provenance, fuse_frame, sigma_image
from .geometry import MODES
from .noise import DEFAULT_DEPTH_COEFF, RgbdNoiseModel, variance_raster
from .registration import TrackedFrame, register_sfm_depth, select_keyframe
from .scale import DEFAULT_MIN_SUPPORT, SCALE_MODES, ScaleEstimate, apply_scale, estimate_scale

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    dataset: Path
    output: Path | None = None
    interpolation: str = "bilinear"
    scale_mode: str = "least_squares"
    scale_once: bool = False
    min_support: int = DEFAULT_MIN_SUPPORT
    noise_coeff: float = DEFAULT_DEPTH_COEFF
    fusion_gate: float | None = None  # k-sigma consistency gate, None = off
    sigma_viz_max: float = DEFAULT_SIGMA_VIZ_MAX

    def __post_init__(self):
        self.dataset = Path(self.dataset)
        self.output = Path(self.output) if self.output is not None else self.dataset / "fused"
        if self.interpolation not in MODES:
            raise ConfigError(f"interpolation must be one of {MODES}, got {self.interpolation!r}")
        if self.scale_mode not in SCALE_MODES:
            raise ConfigError(f"scale_mode must be one of {SCALE_MODES}, got {self.scale_mode!r}")
        if not (isinstance(self.min_support, int) and self.min_support > 0):
            raise ConfigError(f"min_support must be a positive integer, got {self.min_support!r}")
        for name in ("noise_coeff", "sigma_viz_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.fusion_gate is not None and not self.fusion_gate > 0:
            raise ConfigError(f"fusion_gate must be positive or off, got {self.fusion_gate!r}")


def output_paths(out: Path, ts: float) -> dict[str, Path]:
    stamp = dataio.format_timestamp(ts)
    return {
        "depth": out / f"{stamp}.depth.pfm",
        "variance": out / f"{stamp}.var.pfm",
        "provenance": out / f"{stamp}.provenance.png",
        "sigma": out / f"{stamp}.sigma.png",
    }


def run_fusion(cfg: PipelineConfig) -> list[FusedFrame]:
    """Fuse every RGBD frame of ``cfg.dataset`` in timestamp order and write outputs."""
    ds = dataio.load_dataset(cfg.dataset)
    intr = ds.intrinsics
    model = RgbdNoiseModel(cfg.noise_coeff)
    if not ds.keyframes:
        log.warning("dataset %s has no keyframes; every frame is RGBD-only", ds.root)
    if not ds.frame_stamps:
        raise dataio.ParseError(f"{ds.root / 'depth'}: no depth frames")
    cfg.output.mkdir(parents=True, exist_ok=True)

    prev: ScaleEstimate | None = None
    frozen: ScaleEstimate | None = None
    results = []
    for ts in ds.frame_stamps:
        rgbd = ds.read_depth(ts)
        sfm = sfm_var = est = None
        kf_id = "-"
        try:
            kf = select_keyframe(ts, ds.keyframes)
        except NoKeyframeError:
            kf = None
        if kf is not None:
            kf_id = kf.id
            frame = TrackedFrame(ts, ds.pose(ts), rgbd, kf.id)
            sfm_raw, var_raw = register_sfm_depth(kf, frame, intr, cfg.interpolation)
            try:
                est = frozen or estimate_scale(rgbd, sfm_raw, cfg.scale_mode, cfg.min_support, prev)
            except NoScaleError as exc:
                log.warning("t=%.6f: %s; frame treated as RGBD-only", ts, exc)
            if est is not None:
                prev = est
                if cfg.scale_once and frozen is None:
                    frozen = est
                sfm, sfm_var = apply_scale(sfm_raw, var_raw, est)
        fused = fuse_frame(rgbd, variance_raster(model, rgbd), sfm, sfm_var, est, cfg.fusion_gate, ts)
        paths = output_paths(cfg.output, ts)
        dataio.write_pfm(fused.depth, paths["depth"])
        dataio.write_pfm(fused.variance, paths["variance"])
        dataio.write_rgb_png(colorize_provenance(fused.provenance), paths["provenance"])
        dataio.write_gray_png(sigma_image(fused.variance, cfg.sigma_viz_max), paths["sigma"])
        s = fused.stats
        log.info(
            "t=%.6f kf=%s alpha=%s support=%s rgbd_only=%d sfm_only=%d fused=%d none=%d",
            ts,
            kf_id,
            f"{est.alpha:.6f}{'*' if est.fallback else ''}" if est else "-",
            est.support if est else 0,
            s.rgbd_only,
            s.sfm_only,
            s.fused,
            s.none,
        )
        results.append(fused)
    dataio.write_stats_csv([f.stats for f in results], cfg.output / "stats.csv")
    return results
