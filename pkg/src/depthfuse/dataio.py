"""File formats and the on-disk dataset layout.

Dataset root::

    intrinsics.txt                  key value lines: fx fy cx cy width height [k1 k2 p1 p2]
    trajectory.txt                  timestamp tx ty tz qx qy qz qw (camera-to-world)
    depth/<ts>.png                  RGBD depth, 16-bit grayscale, millimeters, 0 = invalid
    keyframes/<ts>.depth.pfm        SfM depth (SfM scale), NaN = invalid
    keyframes/<ts>.var.pfm          SfM variance (SfM scale squared)
    truth/<ts>.pfm                  optional ground-truth depth
    fused/                          pipeline outputs

``<ts>`` is the timestamp in seconds with exactly six decimals.
"""

from __future__ import annotations

import csv
import io
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.spatial.transform import Rotation

from .camera import CameraIntrinsics
from .errors import ConfigError, EmptyInputError, FormatError, OrderingError, ParseError, PoseLookupError
from .fusion import StatsRow, sequence_stats
from .geometry import DepthRaster, Pose, VarianceRaster
from .registration import POSE_LOOKUP_TOL, Keyframe

INTRINSICS_REQUIRED = ("fx", "fy", "cx", "cy", "width", "height")
INTRINSICS_OPTIONAL = ("k1", "k2", "p1", "p2")
QUAT_NORM_TOL = 1e-3
PNG_MAX_MM = 65535
STATS_HEADER = ["timestamp", "rgbd_only_pct", "sfm_only_pct", "fused_pct", "total_measured"]
_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_STAMP_RE = re.compile(r"^-?\d+\.\d{6}$")


def format_timestamp(ts: float) -> str:
    return f"{ts:.6f}"


def parse_timestamp(text: str, path=None) -> float:
    if not _STAMP_RE.match(text):
        raise ParseError(f"{path or text}: timestamp {text!r} is not fixed-point with 6 decimals")
    return float(text)


# ------------------------------------------------------------------ key/value files


def read_keyvalue(path) -> dict[str, tuple[str, int]]:
    """Parse ``key value`` lines into ``{key: (value, line_number)}``.

    ``#`` starts a comment. Duplicate keys are an error.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: file not found")
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'key value', got {raw!r}")
        key, value = parts
        if key in out:
            raise ParseError(f"{path}:{lineno}: duplicate key {key!r} (first on line {out[key][1]})")
        out[key] = (value, lineno)
    return out


def read_intrinsics(path) -> CameraIntrinsics:
    path = Path(path)
    kv = read_keyvalue(path)
    fields: dict[str, float] = {}
    for key, (value, lineno) in kv.items():
        if key not in INTRINSICS_REQUIRED + INTRINSICS_OPTIONAL:
            raise ParseError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            fields[key] = float(value)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: {key} value {value!r} is not numeric") from None
        if not np.isfinite(fields[key]):
            raise ParseError(f"{path}:{lineno}: {key} value {value!r} is not finite")
    for key in INTRINSICS_REQUIRED:
        if key not in fields:
            raise ParseError(f"{path}: missing required key {key!r}")
    for key in ("width", "height"):
        if not fields[key].is_integer():
            raise ParseError(f"{path}:{kv[key][1]}: {key} must be an integer, got {kv[key][0]!r}")
    try:
        return CameraIntrinsics(
            fields["fx"],
            fields["fy"],
            fields["cx"],
            fields["cy"],
            int(fields["width"]),
            int(fields["height"]),
            tuple(fields.get(k, 0.0) for k in INTRINSICS_OPTIONAL),
        )
    except ConfigError as exc:
        msg = str(exc)
        if "principal point" in msg:
            bad = "cx" if not 0 <= fields["cx"] < fields["width"] else "cy"
        else:
            bad = next((k for k in ("fx", "fy", "width", "height") if k in msg), "fx")
        raise ParseError(f"{path}:{kv[bad][1]}: {bad}: {msg}") from None


def write_intrinsics(intr: CameraIntrinsics, path) -> None:
    lines = [
        f"fx {intr.fx!r}",
        f"fy {intr.fy!r}",
        f"cx {intr.cx!r}",
        f"cy {intr.cy!r}",
        f"width {intr.width}",
        f"height {intr.height}",
    ]
    if intr.has_distortion:
        lines += [f"{k} {v!r}" for k, v in zip(INTRINSICS_OPTIONAL, intr.distortion)]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------- trajectories


def read_trajectory(path) -> dict[float, Pose]:
    """Timestamp-ordered map of camera-to-world poses."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: file not found")
    stamps, vals, linenos = [], [], []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ParseError(f"{path}:{lineno}: expected 8 fields 'timestamp tx ty tz qx qy qz qw', got {len(parts)}")
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field in {raw!r}") from None
        if not all(np.isfinite(nums)):
            raise ParseError(f"{path}:{lineno}: non-finite field in {raw!r}")
        if stamps and nums[0] <= stamps[-1]:
            raise OrderingError(f"{path}:{lineno}: timestamp {parts[0]} does not increase (previous {stamps[-1]:.6f})")
        stamps.append(nums[0])
        vals.append(nums[1:])
        linenos.append(lineno)
    if not vals:
        return {}
    arr = np.asarray(vals)
    quats = arr[:, 3:7]
    norms = np.linalg.norm(quats, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > QUAT_NORM_TOL)[0]
    if len(bad):
        i = bad[0]
        raise ParseError(f"{path}:{linenos[i]}: quaternion norm {norms[i]:.6g} is not within {QUAT_NORM_TOL} of 1")
    mats = Rotation.from_quat(quats / norms[:, None]).as_matrix()
    return {ts: Pose(R, arr[i, :3], ts) for i, (ts, R) in enumerate(zip(stamps, mats))}


def write_trajectory(poses, path) -> None:
    lines = []
    for p in poses:
        q = p.quaternion()
        t = p.translation
        lines.append(
            f"{format_timestamp(p.timestamp)} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
            f"{q[0]:.12f} {q[1]:.12f} {q[2]:.12f} {q[3]:.12f}"
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ------------------------------------------------------------------------ PNG16 depth


def _png_header(data: bytes, path) -> tuple[int, int, int, int]:
    if data[:8] != _PNG_SIGNATURE:
        raise FormatError(f"{path}: not a PNG file (bad signature)")
    if len(data) < 33 or data[12:16] != b"IHDR":
        raise FormatError(f"{path}: PNG missing IHDR chunk")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", data[16:26])
    if zlib.crc32(data[12:29]) != struct.unpack(">I", data[29:33])[0]:
        raise FormatError(f"{path}: PNG IHDR checksum mismatch")
    return width, height, bit_depth, color_type


def read_depth_png(path) -> DepthRaster:
    """Millimeter PNG16 to meters; 0 is invalid."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: file not found")
    data = path.read_bytes()
    _, _, bit_depth, color_type = _png_header(data, path)
    if color_type != 0:
        raise FormatError(f"{path}: depth PNG must be single-channel grayscale (color type {color_type})")
    if bit_depth != 16:
        raise FormatError(f"{path}: depth PNG must be 16-bit, got {bit_depth}-bit")
    try:
        with Image.open(io.BytesIO(data)) as im:
            mm = np.array(im, dtype=np.uint16)
    except Exception as exc:
        raise FormatError(f"{path}: corrupt PNG data ({exc})") from None
    valid = mm > 0
    return DepthRaster(np.where(valid, mm / 1000.0, np.nan), valid)


def depth_to_mm(depth: DepthRaster) -> np.ndarray:
    """Quantize to uint16 millimeters. Depths above 65.535 m saturate to 0 (invalid)."""
    mm = np.rint(depth.filled(0.0) * 1000.0)
    mm[(mm > PNG_MAX_MM) | ~depth.valid] = 0
    return mm.astype(np.uint16)


def write_depth_png(depth: DepthRaster, path) -> None:
    Image.fromarray(depth_to_mm(depth)).save(path, format="PNG")


def write_rgb_png(image: np.ndarray, path) -> None:
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def write_gray_png(image: np.ndarray, path) -> None:
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="L").save(path, format="PNG")


# ------------------------------------------------------------------------------- PFM


def _pfm_header_line(f, path, what):
    line = f.readline()
    if not line.endswith(b"\n"):
        raise FormatError(f"{path}: truncated PFM header (missing {what})")
    try:
        return line.decode("ascii").strip()
    except UnicodeDecodeError:
        raise FormatError(f"{path}: non-ASCII PFM header ({what})") from None


def read_pfm_array(path) -> np.ndarray:
    """Raw float32 PFM contents, top row first."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: file not found")
    with open(path, "rb") as f:
        magic = _pfm_header_line(f, path, "magic")
        if magic == "PF":
            raise FormatError(f"{path}: three-channel PFM ('PF') not supported, expected 'Pf'")
        if magic != "Pf":
            raise FormatError(f"{path}: bad PFM magic {magic!r}, expected 'Pf'")
        dims = _pfm_header_line(f, path, "dimensions").split()
        if len(dims) != 2 or not all(d.isdigit() for d in dims) or min(int(d) for d in dims) < 1:
            raise FormatError(f"{path}: bad PFM dimensions line {' '.join(dims)!r}")
        width, height = int(dims[0]), int(dims[1])
        try:
            scale = float(_pfm_header_line(f, path, "scale"))
        except ValueError:
            raise FormatError(f"{path}: PFM scale is not numeric") from None
        if scale > 0:
            raise FormatError(f"{path}: big-endian PFM (positive scale {scale}) rejected; only little-endian is supported")
        if not scale < 0:
            raise FormatError(f"{path}: PFM scale must be negative (little-endian), got {scale}")
        payload = f.read()
    expected = width * height * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: PFM payload is {len(payload)} bytes, expected {expected} for {width}x{height}")
    # rows are stored bottom-to-top
    return np.frombuffer(payload, dtype="<f4").reshape(height, width)[::-1].copy()


def _read_pfm_raster(path, cls):
    arr = read_pfm_array(path).astype(np.float64)
    valid = ~np.isnan(arr)
    bad = valid & ~(np.isfinite(arr) & (arr > 0))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise FormatError(f"{path}: pixel ({c}, {r}) holds {arr[r, c]!r}; valid samples must be positive and finite")
    return cls(arr, valid)


def read_pfm(path) -> DepthRaster:
    return _read_pfm_raster(path, DepthRaster)


def read_pfm_variance(path) -> VarianceRaster:
    return _read_pfm_raster(path, VarianceRaster)


def write_pfm(raster, path) -> None:
    """Write a raster (NaN for invalid) as little-endian single-channel PFM."""
    values = raster.values.astype("<f4")
    if raster.valid.any():
        v = values[raster.valid]
        if not np.all(np.isfinite(v) & (v > 0)):
            raise FormatError(f"{path}: raster values not representable as positive float32")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(values[::-1]).tobytes())


# ---------------------------------------------------------------------------- stats


def round_percentages(pcts, decimals: int = 1) -> list[int]:
    """Round to ``decimals`` places (as integer units) keeping the total.

    Largest-remainder rounding: a triple summing to 100 stays at exactly 100
    after rounding instead of drifting by up to 1.5 units.
    """
    scaled = np.asarray(pcts, dtype=float) * 10**decimals
    units = np.floor(scaled + 1e-9).astype(int)
    short = int(round(scaled.sum())) - int(units.sum())
    if short > 0:
        # stable order so ties resolve the same way every run
        order = np.argsort(-(scaled - units), kind="stable")
        units[order[:short]] += 1
    return units.tolist()


def _stats_line(row: StatsRow, label: str, total: str) -> list[str]:
    units = round_percentages([row.rgbd_only_pct, row.sfm_only_pct, row.fused_pct])
    return [label, *(f"{u // 10}.{u % 10}" for u in units), total]


def write_stats_csv(stats, path) -> None:
    """Write per-frame provenance ratios plus a final ``average`` row."""
    rows = sequence_stats(list(stats))  # raises before touching the file
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(STATS_HEADER)
    for r in rows[:-1]:
        writer.writerow(_stats_line(r, r.label, f"{int(r.total_measured)}"))
    avg = rows[-1]
    writer.writerow(_stats_line(avg, "average", f"{int(round(avg.total_measured))}"))
    Path(path).write_text(buf.getvalue())


def read_stats_csv(path) -> tuple[list[StatsRow], StatsRow | None]:
    """Per-frame rows and the average row (``None`` if the file has none)."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: file not found")
    lines = path.read_text().splitlines()
    if not lines or lines[0].split(",") != STATS_HEADER:
        raise ParseError(f"{path}:1: expected header {','.join(STATS_HEADER)!r}")
    rows, average = [], None
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        if average is not None:
            raise ParseError(f"{path}:{lineno}: data after the average row")
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        label = parts[0]
        if label != "average":
            parse_timestamp(label, f"{path}:{lineno}")
        try:
            pcts = [float(p) for p in parts[1:4]]
            total = float(parts[4])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
        if any(not 0.0 <= p <= 100.0 for p in pcts) or total < 0:
            raise ParseError(f"{path}:{lineno}: percentages must lie in [0, 100] and counts be >= 0")
        row = StatsRow(label, *pcts, total)
        if label == "average":
            average = row
        else:
            rows.append(row)
    if not rows:
        raise EmptyInputError(f"{path}: no frame rows")
    return rows, average


# --------------------------------------------------------------------------- dataset


def _stamp_files(directory: Path, suffix: str) -> dict[float, Path]:
    out = {}
    if not directory.is_dir():
        return out
    for p in sorted(directory.iterdir()):
        if not p.name.endswith(suffix):
            continue
        stem = p.name[: -len(suffix)]
        out[parse_timestamp(stem, p)] = p
    return dict(sorted(out.items()))


def _match_stamp(trajectory: dict[float, Pose], ts: float, what: Path) -> Pose:
    pose = trajectory.get(ts)
    if pose is None:
        stamps = np.fromiter(trajectory, dtype=float, count=len(trajectory))
        if len(stamps) and np.min(np.abs(stamps - ts)) <= POSE_LOOKUP_TOL:
            pose = trajectory[float(stamps[np.argmin(np.abs(stamps - ts))])]
    if pose is None:
        raise PoseLookupError(f"{what}: timestamp {format_timestamp(ts)} has no trajectory.txt entry")
    return pose


@dataclass
class Dataset:
    root: Path
    intrinsics: CameraIntrinsics
    trajectory: dict[float, Pose]
    depth_files: dict[float, Path]
    keyframes: list[Keyframe] = field(default_factory=list)
    truth_files: dict[float, Path] = field(default_factory=dict)

    @property
    def frame_stamps(self) -> list[float]:
        return list(self.depth_files)

    def pose(self, ts: float) -> Pose:
        return _match_stamp(self.trajectory, ts, self.root / "trajectory.txt")

    def read_depth(self, ts: float) -> DepthRaster:
        depth = read_depth_png(self.depth_files[ts])
        if depth.shape != self.intrinsics.shape:
            raise FormatError(f"{self.depth_files[ts]}: size {depth.shape[::-1]} differs from intrinsics")
        return depth

    def read_truth(self, ts: float) -> DepthRaster | None:
        p = self.truth_files.get(ts)
        return read_pfm(p) if p is not None else None


def load_dataset(root) -> Dataset:
    """Open and validate a dataset directory. Keyframes are loaded eagerly."""
    root = Path(root)
    if not root.is_dir():
        raise ParseError(f"{root}: dataset directory not found")
    intr = read_intrinsics(root / "intrinsics.txt")
    traj = read_trajectory(root / "trajectory.txt")
    depth_files = _stamp_files(root / "depth", ".png")
    for ts, p in depth_files.items():
        _match_stamp(traj, ts, p)
    keyframes = []
    kf_depth = _stamp_files(root / "keyframes", ".depth.pfm")
    kf_var = _stamp_files(root / "keyframes", ".var.pfm")
    if set(kf_depth) != set(kf_var):
        missing = sorted(set(kf_depth) ^ set(kf_var))[0]
        raise FormatError(f"{root / 'keyframes'}: keyframe {format_timestamp(missing)} lacks its depth/var pair")
    for ts, p in kf_depth.items():
        pose = _match_stamp(traj, ts, p)
        depth = read_pfm(p)
        var = read_pfm_variance(kf_var[ts])
        for what, r in ((p, depth), (kf_var[ts], var)):
            if r.shape != intr.shape:
                raise FormatError(f"{what}: size {r.shape[::-1]} differs from intrinsics")
        if not np.array_equal(depth.valid, var.valid):
            raise FormatError(f"{kf_var[ts]}: valid mask differs from {p.name}")
        keyframes.append(Keyframe(format_timestamp(ts), ts, pose, depth, var))
    truth = _stamp_files(root / "truth", ".pfm")
    return Dataset(root, intr, traj, depth_files, keyframes, truth)
