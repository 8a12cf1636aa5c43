"""Rigid poses, depth/variance rasters, point clouds and depth re-projection.

Poses are stored as rigid maps ``p_parent = R @ p + t`` (camera-to-world for
trajectory entries). A camera pose ``T`` expressed in a source camera's frame
induces the coordinate change ``p' = R.T @ (p - t)`` into that camera, which is
how :func:`transform_cloud` consumes it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from . import camera
from .camera import CameraIntrinsics
from .errors import ConfigError, InvalidDepthError, InvalidVarianceError, ShapeError

ORTHONORMAL_TOL = 1e-9
QUATERNION_TOL = 1e-9
MODES = ("nearest", "bilinear")
# Landing positions this close to a pixel centre are treated as exactly on it.
_SNAP_EPS = 1e-9
# Discontinuity guard: neighbourhood radius (px) and allowed depth change per px, relative.
_EDGE_RADIUS = 2
_EDGE_SLOPE = 0.02
# Allowed second difference of inverse depth, relative, on top of the noise term.
_CURV_REL_TOL = 1e-3
# Plane fit: minimum spread of landing offsets, largest candidate coefficient, residual slack.
_FIT_MIN_DET = 1e-4
_FIT_MAX_COEF = 2.0
_FIT_REL_TOL = 1e-4
# Candidates centred within this many px of the pixel may use the plain mean without noise cover.
_PLAIN_MAX_OFFSET = 0.1


# --------------------------------------------------------------------------- rasters


@dataclass(eq=False)
class _Raster:
    values: np.ndarray
    valid: np.ndarray

    _invalid = ValueError

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape != valid.shape:
            raise ShapeError(f"raster values {values.shape} and mask {valid.shape} must be equal 2-D shapes")
        bad = valid & ~(np.isfinite(values) & (values > 0))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise self._invalid(f"{type(self).__name__}: valid pixel ({c}, {r}) holds {values[r, c]!r}")
        values[~valid] = np.nan
        self.values = values
        self.valid = valid

    @classmethod
    def from_array(cls, values):
        """Build a raster treating NaN, non-finite and non-positive entries as invalid."""
        values = np.asarray(values, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            valid = np.isfinite(values) & (values > 0)
        return cls(values, valid)

    @classmethod
    def empty(cls, shape):
        return cls(np.full(shape, np.nan), np.zeros(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def count(self) -> int:
        return int(self.valid.sum())

    def copy(self):
        return type(self)(self.values.copy(), self.valid.copy())

    def filled(self, fill=0.0) -> np.ndarray:
        out = self.values.copy()
        out[~self.valid] = fill
        return out

    def equals(self, other) -> bool:
        """Bit-exact equality of masks and of values on the mask."""
        return (
            self.shape == other.shape
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values[self.valid], other.values[other.valid])
        )


class DepthRaster(_Raster):
    """Per-pixel depth in meters with a validity mask (invalid pixels hold NaN)."""

    _invalid = InvalidDepthError


class VarianceRaster(_Raster):
    """Per-pixel depth variance in square meters with a validity mask."""

    _invalid = InvalidVarianceError


def check_shape(intr: CameraIntrinsics, *rasters) -> None:
    for r in rasters:
        if r is not None and r.shape != intr.shape:
            raise ShapeError(f"raster shape {r.shape} does not match intrinsics {intr.shape}")


# ----------------------------------------------------------------------------- poses


@dataclass(eq=False)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if np.linalg.norm(R.T @ R - np.eye(3)) >= ORTHONORMAL_TOL or np.linalg.det(R) <= 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        self.rotation = R
        self.translation = t
        self.timestamp = float(self.timestamp)

    @classmethod
    def identity(cls, timestamp: float = 0.0) -> "Pose":
        return cls(np.eye(3), np.zeros(3), timestamp)

    @classmethod
    def from_quaternion(cls, quat_xyzw, translation, timestamp: float = 0.0) -> "Pose":
        q = np.asarray(quat_xyzw, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > QUATERNION_TOL:
            raise ValueError(f"quaternion {q} is not unit norm")
        return cls(Rotation.from_quat(q).as_matrix(), translation, timestamp)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion ``(qx, qy, qz, qw)`` with ``qw >= 0``."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation, self.timestamp)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            other.timestamp,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not self.translation.any())

    def coordinate_change(self) -> tuple[np.ndarray, np.ndarray]:
        """``(R, t)`` such that points map into this camera as ``R @ (p - t)``."""
        return self.rotation.T, self.translation.copy()


def relative_pose(source: Pose, target: Pose) -> Pose:
    """Pose of the ``target`` camera expressed in the ``source`` camera frame."""
    return source.inverse() @ target


# ------------------------------------------------------------------------ point clouds


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray  # (N, 3) meters
    pixels: np.ndarray  # (N, 2) integer source (col, row)
    variance: np.ndarray | None = None  # (N,) depth variance, m^2
    # d(point)/d(depth) along the source ray, normalized to unit z component
    rays: np.ndarray | None = None
    dropped: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.pixels = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        n = len(self.points)
        if len(self.pixels) != n:
            raise ShapeError("points and pixels differ in length")
        if self.variance is not None:
            self.variance = np.asarray(self.variance, dtype=np.float64).reshape(n)
        if self.rays is None:
            self.rays = self.points / self.points[:, 2:3] if n else np.zeros((0, 3))
        else:
            self.rays = np.asarray(self.rays, dtype=np.float64).reshape(n, 3)

    def __len__(self) -> int:
        return len(self.points)


def back_project_raster(
    intr: CameraIntrinsics, depth: DepthRaster, var: VarianceRaster | None = None
) -> PointCloud:
    """One point per valid depth pixel, in row-major pixel order."""
    check_shape(intr, depth, var)
    rows, cols = np.nonzero(depth.valid)
    z = depth.values[rows, cols]
    ax, ay = camera.pixel_rays(intr, cols, rows)
    rays = np.stack([ax, ay, np.ones_like(ax)], axis=-1)
    variance = None
    if var is not None:
        variance = var.values[rows, cols]
        if not np.all(var.valid[rows, cols]):
            raise ShapeError("variance raster is invalid at valid depth pixels")
    return PointCloud(rays * z[:, None], np.stack([cols, rows], axis=-1), variance, rays)


def transform_cloud(cloud: PointCloud, rel: Pose) -> PointCloud:
    """Move ``cloud`` into the camera whose pose in the cloud's frame is ``rel``.

    Depth variances are propagated to first order along each source ray.
    Points ending at ``z <= 0`` (or on rays grazing the new image plane) are
    dropped and added to ``dropped``.
    """
    R, t = rel.coordinate_change()
    pts = (cloud.points - t) @ R.T
    rays = cloud.rays @ R.T
    jac = rays[:, 2]
    keep = (pts[:, 2] > 0) & (np.abs(jac) > 1e-12)
    variance = None
    if cloud.variance is not None:
        variance = (cloud.variance * jac * jac)[keep]
    return PointCloud(
        pts[keep],
        cloud.pixels[keep],
        variance,
        rays[keep] / jac[keep, None],
        cloud.dropped + int((~keep).sum()),
    )


def _splat_candidates(intr, col, row, mode):
    """Candidate (point, pixel, weight) triples for each landing position.

    Also flags the candidate on the landing position's nearest pixel.
    """
    n = len(col)
    if mode == "nearest":
        c = np.floor(col + 0.5).astype(np.int64)
        r = np.floor(row + 0.5).astype(np.int64)
        return np.arange(n), r * intr.width + c, np.ones(n), np.ones(n, dtype=bool)
    col = np.where(np.abs(col - np.rint(col)) < _SNAP_EPS, np.rint(col), col)
    row = np.where(np.abs(row - np.rint(row)) < _SNAP_EPS, np.rint(row), row)
    c0 = np.floor(col).astype(np.int64)
    r0 = np.floor(row).astype(np.int64)
    fc = col - c0
    fr = row - r0
    near_c = fc >= 0.5
    near_r = fr >= 0.5
    src, pix, wts, own = [], [], [], []
    for dc, dr, w in (
        (0, 0, (1 - fc) * (1 - fr)),
        (1, 0, fc * (1 - fr)),
        (0, 1, (1 - fc) * fr),
        (1, 1, fc * fr),
    ):
        cc, rr = c0 + dc, r0 + dr
        ok = (w > 0) & (cc >= 0) & (cc < intr.width) & (rr >= 0) & (rr < intr.height)
        src.append(np.nonzero(ok)[0])
        pix.append(rr[ok] * intr.width + cc[ok])
        wts.append(w[ok])
        own.append(((near_c == bool(dc)) & (near_r == bool(dr)))[ok])
    return np.concatenate(src), np.concatenate(pix), np.concatenate(wts), np.concatenate(own)


def _group_first(pix, *keys):
    """Sort order by (pix, *keys) and a mask of each pixel group's first entry."""
    order = np.lexsort(tuple(reversed(keys)) + (pix,))
    p = pix[order]
    first = np.ones(len(p), dtype=bool)
    first[1:] = p[1:] != p[:-1]
    return order, first


def _depth_edges(depth, var, k, radius=_EDGE_RADIUS, slope=_EDGE_SLOPE):
    """Mask of valid pixels disagreeing with a valid neighbour within ``radius``.

    Two depths agree when they differ by at most ``k`` combined standard
    deviations plus ``slope`` of the nearer depth per pixel of separation,
    which leaves room for steeply slanted surfaces. Pixels where inverse
    depth bends across their immediate neighbours are flagged as well.
    """
    z = depth.values
    h, w = z.shape
    zp = np.pad(z, radius, constant_values=np.nan)
    vp = np.pad(var if var is not None else np.zeros_like(z), radius, constant_values=np.nan)
    v = var if var is not None else np.zeros_like(z)
    edge = np.zeros(z.shape, dtype=bool)
    with np.errstate(invalid="ignore"):
        for dr in range(-radius, radius + 1):
            for dc in range(-radius, radius + 1):
                if dr == dc == 0:
                    continue
                zn = zp[radius + dr : radius + dr + h, radius + dc : radius + dc + w]
                vn = vp[radius + dr : radius + dr + h, radius + dc : radius + dc + w]
                tol = k * np.sqrt(v + vn) + slope * np.hypot(dr, dc) * np.fmin(z, zn)
                edge |= np.abs(z - zn) > tol
        # inverse depth is affine on planes, so its second difference flags creases
        q, qv = 1.0 / z, v / z**4
        qp, qvp = np.pad(q, 1, constant_values=np.nan), np.pad(qv, 1, constant_values=np.nan)
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            sl_a = (slice(1 + dr, 1 + dr + h), slice(1 + dc, 1 + dc + w))
            sl_b = (slice(1 - dr, 1 - dr + h), slice(1 - dc, 1 - dc + w))
            curv = np.abs(2 * q - qp[sl_a] - qp[sl_b])
            tol = k * np.sqrt(4 * qv + qvp[sl_a] + qvp[sl_b]) + _CURV_REL_TOL * q
            edge |= curv > tol
    return edge & depth.valid


def _accumulate(pix, dx, dy, z, var, w, npix, k):
    """Per-pixel depth and variance from weighted candidates.

    Where a pixel's candidates are spread enough, inverse depth is fitted by
    weighted least squares as a plane over the landing offsets ``(dx, dy)``
    and evaluated at the pixel centre. Inverse depth is affine in the image
    for planar surfaces, so this removes the bias a plain weighted mean has
    on slanted surfaces when the candidates are not centred on the pixel.
    A fit whose residual exceeds ``k`` standard deviations straddles a crease
    or silhouette and leaves the pixel empty.

    Elsewhere the weighted mean ``sum(w z) / sum(w)`` is used. Its bias is
    bounded by the slope allowance times the offset of the candidates'
    centroid; the bound is added to the variance, and the pixel is kept only
    if the bound is below one standard deviation or the centroid is within
    ``_PLAIN_MAX_OFFSET`` of the centre.
    """
    q = 1.0 / z
    qvar = var / z**4

    def acc(x):
        return np.bincount(pix, weights=x, minlength=npix)

    sw, sx, sy = acc(w), acc(w * dx), acc(w * dy)
    sxx, sxy, syy = acc(w * dx * dx), acc(w * dx * dy), acc(w * dy * dy)
    n = np.bincount(pix, minlength=npix)
    hit = sw > 0
    safe = np.where(hit, sw, 1.0)
    mx, my = sx / safe, sy / safe
    cxx, cxy, cyy = sxx / safe - mx * mx, sxy / safe - mx * my, syy / safe - my * my
    det = cxx * cyy - cxy * cxy
    fit = hit & (n >= 3) & (det > _FIT_MIN_DET)

    # coefficient of candidate i in the intercept: w_i (g0 + g1 dx_i + g2 dy_i) / sw
    dsafe = np.where(fit, det, 1.0)
    g1 = np.where(fit, (-cyy * mx + cxy * my) / dsafe, 0.0)
    g2 = np.where(fit, (cxy * mx - cxx * my) / dsafe, 0.0)
    g0 = 1.0 - g1 * mx - g2 * my
    coef = w * (g0[pix] + g1[pix] * dx + g2[pix] * dy) / safe[pix]
    # a fit leaning hard on extrapolation is no better than the mean
    wild = acc((np.abs(coef) > _FIT_MAX_COEF).astype(float)) > 0
    fit &= ~wild

    # plane slopes, then the weighted residual against the noise level
    mq = acc(w * q) / safe
    cxq, cyq = acc(w * dx * q) / safe - mx * mq, acc(w * dy * q) / safe - my * mq
    bx = np.where(fit, (cyy * cxq - cxy * cyq) / dsafe, 0.0)
    by = np.where(fit, (cxx * cyq - cxy * cxq) / dsafe, 0.0)
    resid = q - mq[pix] - bx[pix] * (dx - mx[pix]) - by[pix] * (dy - my[pix])
    rms = np.sqrt(acc(w * resid * resid) / safe)
    tol = k * np.sqrt(acc(w * qvar) / safe) + _FIT_REL_TOL * mq
    straddle = fit & (rms > tol)
    fit &= ~straddle
    use = fit[pix]

    depth = np.full(npix, np.nan)
    out_var = np.full(npix, np.nan)
    mean_z = acc(np.where(use, 0.0, w * z)) / safe
    mean_v = acc(np.where(use, 0.0, w * w * var)) / (safe * safe)
    offset = np.hypot(mx, my)
    bias = _EDGE_SLOPE * mean_z * offset
    plain = hit & ~fit & ~straddle & ((offset <= _PLAIN_MAX_OFFSET) | (bias * bias <= mean_v))
    depth[plain] = mean_z[plain]
    out_var[plain] = mean_v[plain] + bias[plain] ** 2
    qf = acc(np.where(use, coef * q, 0.0))
    qv = acc(np.where(use, coef * coef * qvar, 0.0))
    ok = fit & (qf > 0)
    depth[ok] = 1.0 / qf[ok]
    out_var[ok] = qv[ok] * depth[ok] ** 4
    return depth, out_var


def reproject_to_depth(
    cloud: PointCloud,
    intr: CameraIntrinsics,
    mode: str = "bilinear",
    occlusion_k: float = 3.0,
    edge_guard: bool = True,
) -> tuple[DepthRaster, VarianceRaster | None]:
    """Render ``cloud`` into a depth (and variance) raster with a z-buffer.

    ``nearest`` keeps the closest point per nearest pixel; depth ties go to
    the smaller row-major source pixel, so the result does not depend on
    point order.

    ``bilinear`` splats each point onto its four neighbours with bilinear
    weights. A pixel's visible surface is the closest point landing nearest
    to it (or, failing that, the closest candidate at all); candidates more
    than ``occlusion_k`` standard deviations behind it are rejected. Pixels
    with no such nearest point whose candidates disagree are left empty. The
    survivors are combined by :func:`_accumulate`. With ``edge_guard``,
    pixels at a depth step or crease relative to their neighbours are dropped
    too, as a one-pixel sample there mixes two surfaces.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown interpolation mode {mode!r}; expected one of {MODES}")
    shape = intr.shape
    npix = shape[0] * shape[1]
    has_var = cloud.variance is not None
    out_var = VarianceRaster.empty(shape) if has_var else None
    if len(cloud) == 0:
        return DepthRaster.empty(shape), out_var

    front = cloud.points[:, 2] > 0
    col, row, z = camera.project(intr, cloud.points[front])
    inside = intr.in_bounds(col, row)
    idx = np.nonzero(front)[0][inside]
    col, row, z = col[inside], row[inside], z[inside]
    var = cloud.variance[idx] if has_var else np.zeros(len(idx))
    src_col, src_row = cloud.pixels[idx, 0], cloud.pixels[idx, 1]

    src, pix, w, own = _splat_candidates(intr, col, row, mode)
    cz, cvar, cr, cc = z[src], var[src], src_row[src], src_col[src]
    # ownerless candidates sort after owned ones, so each group's first entry is the reference
    order, first = _group_first(pix, ~own, cz, cr, cc)
    pix, cz, cvar, w, own, cr, cc = (a[order] for a in (pix, cz, cvar, w, own, cr, cc))
    lc, lr = col[src][order], row[src][order]
    group = np.cumsum(first) - 1
    zref = cz[first][group]

    if mode == "nearest":
        keep = first
    else:
        # noise term plus room for the surface slope between the two landing positions
        sep = np.hypot(lc - lc[first][group], lr - lr[first][group])
        tol = occlusion_k * np.sqrt(cvar[first][group] + cvar) + _EDGE_SLOPE * sep * zref
        keep = np.abs(cz - zref) <= tol
        owned = own[first][group]
        conflict = np.bincount(group[~keep], minlength=group[-1] + 1) > 0
        keep &= owned | ~conflict[group]

    pix, cz, cvar, w, cr, cc = pix[keep], cz[keep], cvar[keep], w[keep], cr[keep], cc[keep]
    ccol, crow = lc[keep], lr[keep]
    order = np.lexsort((cc, cr, pix))
    pix, cz, cvar, w, ccol, crow = (a[order] for a in (pix, cz, cvar, w, ccol, crow))

    if mode == "nearest":
        depth = np.full(npix, np.nan)
        depth[pix] = cz
        hit = ~np.isnan(depth)
        v = np.full(npix, np.nan)
        v[pix] = cvar
    else:
        dx = ccol - pix % intr.width
        dy = crow - pix // intr.width
        depth, v = _accumulate(pix, dx, dy, cz, cvar, w, npix, occlusion_k)
        hit = ~np.isnan(depth)
    v = v.reshape(shape) if has_var else None
    out_depth = DepthRaster(depth.reshape(shape), hit.reshape(shape))
    if mode == "bilinear" and edge_guard:
        edge = _depth_edges(out_depth, v, occlusion_k)
        hit = out_depth.valid & ~edge
        out_depth = DepthRaster(out_depth.values, hit)
    else:
        hit = out_depth.valid
    if has_var:
        out_var = VarianceRaster(v, hit)
    return out_depth, out_var


def warp_depth(
    intr: CameraIntrinsics,
    depth: DepthRaster,
    var: VarianceRaster | None,
    rel: Pose,
    mode: str = "bilinear",
    occlusion_k: float = 3.0,
) -> tuple[DepthRaster, VarianceRaster | None]:
    """Re-render ``depth`` (and ``var``) as seen by the camera at ``rel``.

    ``rel`` is the target camera's pose in the source camera frame. An
    identity pose short-circuits to an exact copy; warping never fills holes.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown interpolation mode {mode!r}; expected one of {MODES}")
    check_shape(intr, depth, var)
    if rel.is_identity():
        return depth.copy(), (var.copy() if var is not None else None)
    cloud = transform_cloud(back_project_raster(intr, depth, var), rel)
    return reproject_to_depth(cloud, intr, mode, occlusion_k)
