"""Synthetic scenes with exact ground-truth depth.

The world frame follows the optical convention of the first camera: x right,
y down, z forward. Primitives are intersected analytically; the RGBD and SfM
outputs are then degraded from the rendered truth with seeded noise, so every
dataset carries its own oracle.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import camera, dataio
from .camera import CameraIntrinsics
from .errors import ConfigError, ParseError
from .geometry import DepthRaster, Pose, VarianceRaster
from .noise import DEFAULT_DEPTH_COEFF

ALBEDOS = ("normal", "dark", "specular")
TEXTURES = ("textured", "flat")
_HIT_EPS = 1e-9

# RNG stream identifiers; each (seed, stream, frame) triple owns an independent generator
_STREAM_RGBD_DROP = 1
_STREAM_RGBD_NOISE = 2
_STREAM_SFM_MASK = 3
_STREAM_SFM_NOISE = 4
_STREAM_POSE = 5


# ------------------------------------------------------------------------ primitives


@dataclass(frozen=True)
class Plane:
    """Points ``X`` with ``normal . X + offset = 0``."""

    normal: tuple[float, float, float]
    offset: float
    albedo: str = "normal"
    texture: str = "textured"

    def intersect(self, origin, dirs):
        n = np.asarray(self.normal, dtype=float)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = -(origin @ n + self.offset) / denom
        return np.where(np.isfinite(lam) & (lam > _HIT_EPS), lam, np.inf)

    def params(self):
        return [*self.normal, self.offset]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box between corners ``lo`` and ``hi``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    albedo: str = "normal"
    texture: str = "textured"

    def intersect(self, origin, dirs):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        tnear = np.nanmax(np.minimum(t1, t2), axis=-1)
        tfar = np.nanmin(np.maximum(t1, t2), axis=-1)
        hit = (tfar >= tnear) & (tfar > _HIT_EPS)
        lam = np.where(tnear > _HIT_EPS, tnear, tfar)
        return np.where(hit, lam, np.inf)

    def params(self):
        return [*self.lo, *self.hi]


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    albedo: str = "normal"
    texture: str = "textured"

    def intersect(self, origin, dirs):
        oc = origin - np.asarray(self.center, dtype=float)
        a = np.einsum("ij,ij->i", dirs, dirs)
        b = 2.0 * (dirs @ oc)
        c = oc @ oc - self.radius**2
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.where(disc >= 0, disc, 0.0))
        near = (-b - root) / (2.0 * a)
        far = (-b + root) / (2.0 * a)
        lam = np.where(near > _HIT_EPS, near, far)
        return np.where((disc >= 0) & (lam > _HIT_EPS), lam, np.inf)

    def params(self):
        return [*self.center, self.radius]


_KINDS = {"plane": (Plane, 4), "box": (Box, 6), "sphere": (Sphere, 4)}


@dataclass
class Scene:
    primitives: list = field(default_factory=list)

    def albedo_codes(self) -> np.ndarray:
        return np.array([ALBEDOS.index(p.albedo) for p in self.primitives], dtype=np.int8)

    def texture_codes(self) -> np.ndarray:
        return np.array([TEXTURES.index(p.texture) for p in self.primitives], dtype=np.int8)


def parse_scene(text: str, source: str = "<scene>") -> Scene:
    """One primitive per line: ``type params... albedo texture``."""
    prims = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind not in _KINDS:
            raise ParseError(f"{source}:{lineno}: unknown primitive {kind!r}")
        cls, nparams = _KINDS[kind]
        if len(parts) != nparams + 3:
            raise ParseError(f"{source}:{lineno}: {kind} needs {nparams} numbers plus albedo and texture")
        try:
            nums = [float(x) for x in parts[1 : nparams + 1]]
        except ValueError:
            raise ParseError(f"{source}:{lineno}: non-numeric {kind} parameter") from None
        albedo, texture = parts[nparams + 1], parts[nparams + 2]
        if albedo not in ALBEDOS:
            raise ParseError(f"{source}:{lineno}: albedo {albedo!r} not in {ALBEDOS}")
        if texture not in TEXTURES:
            raise ParseError(f"{source}:{lineno}: texture {texture!r} not in {TEXTURES}")
        if kind == "plane":
            n = np.asarray(nums[:3])
            norm = np.linalg.norm(n)
            if norm == 0:
                raise ParseError(f"{source}:{lineno}: plane normal is zero")
            prims.append(Plane(tuple(n / norm), nums[3] / norm, albedo, texture))
        elif kind == "box":
            lo, hi = np.minimum(nums[:3], nums[3:]), np.maximum(nums[:3], nums[3:])
            if np.any(lo == hi):
                raise ParseError(f"{source}:{lineno}: degenerate box")
            prims.append(Box(tuple(lo), tuple(hi), albedo, texture))
        else:
            if nums[3] <= 0:
                raise ParseError(f"{source}:{lineno}: sphere radius must be positive")
            prims.append(Sphere(tuple(nums[:3]), nums[3], albedo, texture))
    if not prims:
        raise ParseError(f"{source}: scene has no primitives")
    return Scene(prims)


def read_scene(path) -> Scene:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: scene file not found")
    return parse_scene(path.read_text(), str(path))


def format_scene(scene: Scene) -> str:
    names = {Plane: "plane", Box: "box", Sphere: "sphere"}
    lines = []
    for p in scene.primitives:
        nums = " ".join(repr(float(v)) for v in p.params())
        lines.append(f"{names[type(p)]} {nums} {p.albedo} {p.texture}")
    return "\n".join(lines) + "\n"


DEMO_SCENE_TEXT = """\
# room, y down: floor, ceiling, dark left wall, right wall, far back wall
plane 0 1 0 -1.4 normal textured
plane 0 1 0 1.4 normal flat
plane 1 0 0 1.6 dark textured
plane 1 0 0 -1.6 normal textured
plane 0 0 1 -7.0 normal textured
box 0.3 0.6 2.5 1.1 1.4 3.3 normal textured
sphere -0.7 0.8 3.2 0.45 specular textured
"""


def demo_scene() -> Scene:
    """Room with one dark wall and a back wall beyond structured-light range."""
    return parse_scene(DEMO_SCENE_TEXT, "demo")


def demo_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(262.5, 262.5, 159.5, 119.5, 320, 240)


# ------------------------------------------------------------------------- rendering


def render(scene: Scene, intr: CameraIntrinsics, pose: Pose) -> tuple[DepthRaster, np.ndarray]:
    """Depth along the optical axis and the index of the hit primitive (-1 = none)."""
    rows, cols = np.indices(intr.shape)
    ax, ay = camera.pixel_rays(intr, cols.ravel(), rows.ravel())
    local = np.stack([ax, ay, np.ones_like(ax)], axis=-1)
    dirs = local @ pose.rotation.T  # unit optical-axis component
    origin = pose.translation
    best = np.full(len(dirs), np.inf)
    index = np.full(len(dirs), -1, dtype=np.int64)
    for i, prim in enumerate(scene.primitives):
        lam = prim.intersect(origin, dirs)
        closer = lam < best
        best[closer] = lam[closer]
        index[closer] = i
    hit = np.isfinite(best)
    depth = np.where(hit, best, np.nan).reshape(intr.shape)
    return DepthRaster(depth, hit.reshape(intr.shape)), index.reshape(intr.shape)


def render_depth(scene: Scene, intr: CameraIntrinsics, pose: Pose) -> DepthRaster:
    return render(scene, intr, pose)[0]


def tag_maps(scene: Scene, index: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel albedo and texture names ('' where nothing was hit)."""
    albedo = np.array([p.albedo for p in scene.primitives] + [""])[index]
    texture = np.array([p.texture for p in scene.primitives] + [""])[index]
    return albedo, texture


# ----------------------------------------------------------------------- degradation


@dataclass
class SimConfig:
    seed: int = 0
    depth_max: float = 5.0
    dropout: dict = field(default_factory=lambda: {"normal": 0.0, "dark": 1.0, "specular": 1.0})
    rgbd_noise: bool = True
    noise_coeff: float = DEFAULT_DEPTH_COEFF
    sfm_fraction: float = 0.3
    sfm_alpha: float = 1.0  # hidden scale: SfM depth = truth / alpha
    sfm_scale_drift: float = 0.0  # fractional change of the hidden scale over the sequence
    sfm_noise: bool = True
    sfm_noise_rel: float = 0.01  # SfM depth std as a fraction of depth
    sfm_var_floor: float = 1e-10  # SfM-scale m^2
    sfm_var_multiplier: float = 1.0  # >1 overstates, <1 understates the SfM variance
    pose_noise: float = 0.0  # uniform perturbation half-width, meters and radians


def rng_for(seed: int, stream: int, frame: int) -> np.random.Generator:
    """Counter-based generator owned by one (seed, stream, frame) triple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, frame])))


def degrade_rgbd(truth: DepthRaster, albedo: np.ndarray, cfg: SimConfig, frame: int = 0) -> DepthRaster:
    """Structured-light degradation: range limit, albedo dropouts, quadratic noise."""
    keep = truth.valid & (truth.filled(np.inf) <= cfg.depth_max)
    u = rng_for(cfg.seed, _STREAM_RGBD_DROP, frame).random(truth.shape)
    for tag, p in cfg.dropout.items():
        if p > 0:
            keep &= ~((albedo == tag) & (u < p))
    z = truth.filled(0.0)
    if cfg.rgbd_noise:
        e = rng_for(cfg.seed, _STREAM_RGBD_NOISE, frame).standard_normal(truth.shape)
        z = z + e * cfg.noise_coeff * z * z
    keep &= z > 0
    return DepthRaster(np.where(keep, z, np.nan), keep)


def semi_dense_mask(truth: DepthRaster, texture: np.ndarray, cfg: SimConfig, frame: int = 0) -> np.ndarray:
    u = rng_for(cfg.seed, _STREAM_SFM_MASK, frame).random(truth.shape)
    return truth.valid & (texture == "textured") & (u < cfg.sfm_fraction)


def degrade_sfm(
    truth: DepthRaster, texture: np.ndarray, cfg: SimConfig, frame: int = 0, alpha: float | None = None
) -> tuple[DepthRaster, VarianceRaster]:
    """Semi-dense keyframe depth in SfM scale, with its generating variance."""
    alpha = cfg.sfm_alpha if alpha is None else alpha
    mask = semi_dense_mask(truth, texture, cfg, frame)
    mu = truth.filled(0.0) / alpha
    sigma = cfg.sfm_noise_rel * mu
    if cfg.sfm_noise:
        e = rng_for(cfg.seed, _STREAM_SFM_NOISE, frame).standard_normal(truth.shape)
        mu = mu + e * sigma
    mask &= mu > 0
    var = np.maximum(sigma * sigma, cfg.sfm_var_floor) * cfg.sfm_var_multiplier
    return (
        DepthRaster(np.where(mask, mu, np.nan), mask),
        VarianceRaster(np.where(mask, var, np.nan), mask),
    )


# ----------------------------------------------------------------------- trajectories


def look_at(position, target, timestamp: float = 0.0) -> Pose:
    """Camera-to-world pose at ``position`` with its optical axis toward ``target``."""
    position = np.asarray(position, dtype=float)
    z = np.asarray(target, dtype=float) - position
    z /= np.linalg.norm(z)
    x = np.cross([0.0, 1.0, 0.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=1)
    # re-orthonormalize to stay inside the Pose tolerance
    u, _, vt = np.linalg.svd(R)
    return Pose(u @ vt, position, timestamp)


def line_trajectory(n: int, fps: float = 30.0, start=(-0.3, 0.0, 0.0), end=(0.3, -0.1, 0.6), target=(0.0, 0.2, 6.0)):
    starts = np.asarray(start, dtype=float)
    ends = np.asarray(end, dtype=float)
    out = []
    for i in range(n):
        s = i / (n - 1) if n > 1 else 0.0
        out.append(look_at(starts + s * (ends - starts), target, round(i / fps, 6)))
    return out


def orbit_trajectory(n: int, fps: float = 30.0, radius: float = 0.4, arc_deg: float = 30.0, target=(0.0, 0.2, 4.0)):
    """Arc of ``arc_deg`` degrees around ``target`` at the camera's starting distance."""
    target = np.asarray(target, dtype=float)
    dist = np.linalg.norm(target)
    out = []
    for i in range(n):
        s = i / (n - 1) if n > 1 else 0.0
        theta = np.deg2rad(arc_deg) * (s - 0.5)
        pos = target + dist * np.array([np.sin(theta), 0.0, -np.cos(theta)])
        pos[1] -= radius * np.sin(np.pi * s) * 0.25
        out.append(look_at(pos, target, round(i / fps, 6)))
    return out


def perturb_pose(pose: Pose, amount: float, rng: np.random.Generator) -> Pose:
    if amount <= 0:
        return pose
    dt = rng.uniform(-amount, amount, 3)
    dr = Rotation.from_rotvec(rng.uniform(-amount, amount, 3)).as_matrix()
    return Pose(pose.rotation @ dr, pose.translation + dt, pose.timestamp)


# --------------------------------------------------------------------------- datasets


@dataclass
class DatasetInfo:
    root: Path
    frames: int
    keyframes: int
    alphas: list  # hidden SfM scale per keyframe


def hidden_alpha(cfg: SimConfig, frame: int, n_frames: int) -> float:
    s = frame / (n_frames - 1) if n_frames > 1 else 0.0
    return cfg.sfm_alpha * (1.0 + cfg.sfm_scale_drift * s)


def generate_dataset(
    scene: Scene,
    trajectory: list[Pose],
    stride: int,
    cfg: SimConfig,
    root,
    intr: CameraIntrinsics | None = None,
    overwrite: bool = True,
) -> DatasetInfo:
    """Write a complete dataset with ground truth under ``root``.

    Every ``stride``-th frame (starting with the first) is a keyframe.
    """
    if not trajectory:
        raise ConfigError("trajectory must contain at least one pose")
    if stride < 1:
        raise ConfigError("keyframe stride must be >= 1")
    intr = intr or demo_intrinsics()
    root = Path(root)
    if overwrite and root.exists():
        for sub in ("depth", "keyframes", "truth", "fused"):
            if (root / sub).is_dir():
                shutil.rmtree(root / sub)
    for sub in ("depth", "keyframes", "truth"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    dataio.write_intrinsics(intr, root / "intrinsics.txt")
    (root / "scene.txt").write_text(format_scene(scene))
    tracked = [perturb_pose(p, cfg.pose_noise, rng_for(cfg.seed, _STREAM_POSE, i)) for i, p in enumerate(trajectory)]
    dataio.write_trajectory(tracked, root / "trajectory.txt")
    n = len(trajectory)
    alphas = []
    for i, pose in enumerate(trajectory):
        stamp = dataio.format_timestamp(pose.timestamp)
        truth, index = render(scene, intr, pose)
        albedo, texture = tag_maps(scene, index)
        dataio.write_pfm(truth, root / "truth" / f"{stamp}.pfm")
        dataio.write_depth_png(degrade_rgbd(truth, albedo, cfg, i), root / "depth" / f"{stamp}.png")
        if i % stride == 0:
            alpha = hidden_alpha(cfg, i, n)
            depth, var = degrade_sfm(truth, texture, cfg, i, alpha)
            dataio.write_pfm(depth, root / "keyframes" / f"{stamp}.depth.pfm")
            dataio.write_pfm(var, root / "keyframes" / f"{stamp}.var.pfm")
            alphas.append(alpha)
    return DatasetInfo(root, n, len(alphas), alphas)
