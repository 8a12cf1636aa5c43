"""Regenerate the format-fixture corpus under tests/fixtures/.

Each reader gets one golden file (written by the matching writer, so a
write-back must reproduce it byte for byte) and a set of malformed variants.
``manifest.json`` records, per malformed file, the exception class the reader
must raise and a fragment its message must contain.

    python scripts/make_fixtures.py [--out tests/fixtures]
"""

from __future__ import annotations

import argparse
import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image

from depthfuse import dataio
from depthfuse.camera import CameraIntrinsics
from depthfuse.fusion import FrameStats
from depthfuse.geometry import DepthRaster, Pose

INTRINSICS_GOLDEN = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480, (0.1, -0.05, 0.001, 0.002))

INTRINSICS_BAD = {
    "negative_fx.txt": ("fx -1\nfy 525\ncx 319.5\ncy 239.5\nwidth 640\nheight 480\n", "ParseError", "fx"),
    "missing_key.txt": ("fx 525\nfy 525\ncx 319.5\nwidth 640\nheight 480\n", "ParseError", "missing required key 'cy'"),
    "duplicate_key.txt": ("fx 525\nfx 526\nfy 525\ncx 319.5\ncy 239.5\nwidth 640\nheight 480\n", "ParseError", "duplicate key"),
    "non_numeric.txt": ("fx 525\nfy abc\ncx 319.5\ncy 239.5\nwidth 640\nheight 480\n", "ParseError", ":2: fy value"),
    "principal_out_of_image.txt": ("fx 525\nfy 525\ncx 700\ncy 239.5\nwidth 640\nheight 480\n", "ParseError", "cx"),
    "three_fields.txt": ("fx 525 526\nfy 525\ncx 319.5\ncy 239.5\nwidth 640\nheight 480\n", "ParseError", ":1: expected 'key value'"),
    "fractional_width.txt": ("fx 525\nfy 525\ncx 319.5\ncy 239.5\nwidth 640.5\nheight 480\n", "ParseError", "width must be an integer"),
    "unknown_key.txt": ("fx 525\nfy 525\ncx 319.5\ncy 239.5\nwidth 640\nheight 480\nk3 0.1\n", "ParseError", "unknown key 'k3'"),
}

_PNG_SIG = b"\x89PNG\r\n\x1a\n"

TRAJ_BAD = {
    "seven_fields.txt": ("0.000000 0 0 0 0 0 0 1\n0.033333 0 0 0 0 0 1\n", "ParseError", ":2: expected 8 fields"),
    "non_numeric.txt": ("0.000000 0 0 x 0 0 0 1\n", "ParseError", ":1: non-numeric"),
    "quaternion_half_norm.txt": ("0.000000 0 0 0 0 0 0 0.5\n", "ParseError", ":1: quaternion norm 0.5"),
    "decreasing_time.txt": ("0.100000 0 0 0 0 0 0 1\n0.050000 0 0 0 0 0 0 1\n", "OrderingError", ":2: timestamp"),
    "repeated_time.txt": ("0.100000 0 0 0 0 0 0 1\n0.100000 0.1 0 0 0 0 0 1\n", "OrderingError", "does not increase"),
    "nan_translation.txt": ("0.000000 nan 0 0 0 0 0 1\n", "ParseError", ":1: non-finite"),
}


def _png_chunk(tag: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", zlib.crc32(tag + body))


def _golden_depth() -> DepthRaster:
    mm = np.arange(12 * 8, dtype=np.uint16).reshape(8, 12) * 37
    mm[0, 0] = 0
    mm[3, 5] = 0
    valid = mm > 0
    return DepthRaster(np.where(valid, mm / 1000.0, np.nan), valid)


def _golden_pfm() -> DepthRaster:
    v = (np.arange(7 * 5, dtype=np.float32).reshape(5, 7) * np.float32(0.125) + np.float32(0.5)).astype(float)
    v[0, 0] = np.nan
    v[4, 6] = np.nan
    return DepthRaster.from_array(v)


def _image_bytes(arr, mode=None) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def write_corpus(out: Path) -> dict:
    manifest = {}

    def section(name, golden, bad):
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        for old in d.iterdir():
            old.unlink()
        manifest[name] = {"golden": golden, "malformed": {}}
        for fname, (payload, exc, fragment) in bad.items():
            data = payload.encode() if isinstance(payload, str) else payload
            (d / fname).write_bytes(data)
            manifest[name]["malformed"][fname] = [exc, fragment]
        return d

    d = section("intrinsics", "golden.txt", INTRINSICS_BAD)
    dataio.write_intrinsics(INTRINSICS_GOLDEN, d / "golden.txt")

    d = section("trajectory", "golden.txt", TRAJ_BAD)
    poses = [
        Pose.identity(0.0),
        Pose.from_quaternion([0.0, 0.0, np.sin(0.05), np.cos(0.05)], [0.1, -0.2, 0.3], 0.033333),
        Pose.from_quaternion([0.1, 0.2, 0.3, 0.9] / np.linalg.norm([0.1, 0.2, 0.3, 0.9]), [1.0, 2.0, 3.0], 0.066667),
    ]
    dataio.write_trajectory(poses, d / "golden.txt")

    good = _image_bytes(dataio.depth_to_mm(_golden_depth()))
    bad_crc = bytearray(good)
    bad_crc[30] ^= 0xFF
    rgb16_ihdr = _PNG_SIG + _png_chunk(b"IHDR", struct.pack(">IIBBBBB", 4, 4, 16, 2, 0, 0, 0)) + _png_chunk(b"IEND", b"")
    ga16 = _PNG_SIG + _png_chunk(b"IHDR", struct.pack(">IIBBBBB", 4, 4, 16, 4, 0, 0, 0)) + _png_chunk(b"IEND", b"")
    png_bad = {
        "eight_bit.png": (_image_bytes(np.full((4, 4), 200, dtype=np.uint8), "L"), "FormatError", "must be 16-bit"),
        "rgb.png": (_image_bytes(np.zeros((4, 4, 3), dtype=np.uint8), "RGB"), "FormatError", "single-channel"),
        "rgb16_header.png": (rgb16_ihdr, "FormatError", "color type 2"),
        "gray_alpha16_header.png": (ga16, "FormatError", "color type 4"),
        "bad_signature.png": (b"\x89PNX" + good[4:], "FormatError", "bad signature"),
        "ihdr_crc.png": (bytes(bad_crc), "FormatError", "checksum mismatch"),
        "truncated_data.png": (good[:60], "FormatError", "corrupt PNG data"),
        "no_ihdr.png": (_PNG_SIG + _png_chunk(b"IEND", b""), "FormatError", "missing IHDR"),
    }
    d = section("depth_png", "golden.png", png_bad)
    (d / "golden.png").write_bytes(good)

    raster = _golden_pfm()
    header = b"Pf\n7 5\n-1.0\n"
    body = np.ascontiguousarray(raster.values.astype("<f4")[::-1]).tobytes()
    negative = raster.values.copy()
    negative[2, 2] = -1.0
    pfm_bad = {
        "big_endian.pfm": (b"Pf\n7 5\n1.0\n" + body, "FormatError", "big-endian"),
        "color.pfm": (b"PF\n7 5\n-1.0\n" + body * 3, "FormatError", "three-channel"),
        "bad_magic.pfm": (b"P5\n7 5\n-1.0\n" + body, "FormatError", "bad PFM magic"),
        "short_payload.pfm": (header + body[:-4], "FormatError", "payload is 136 bytes, expected 140"),
        "long_payload.pfm": (header + body + b"\0\0\0\0", "FormatError", "payload is 144 bytes"),
        "bad_dimensions.pfm": (b"Pf\n7 x\n-1.0\n" + body, "FormatError", "bad PFM dimensions"),
        "zero_scale.pfm": (b"Pf\n7 5\n0.0\n" + body, "FormatError", "must be negative"),
        "truncated_header.pfm": (b"Pf\n7 5", "FormatError", "truncated PFM header"),
        "negative_sample.pfm": (
            header + np.ascontiguousarray(negative.astype("<f4")[::-1]).tobytes(),
            "FormatError",
            "pixel (2, 2)",
        ),
    }
    d = section("pfm", "golden.pfm", pfm_bad)
    dataio.write_pfm(raster, d / "golden.pfm")

    head = ",".join(dataio.STATS_HEADER) + "\n"
    stats_bad = {
        "bad_header.csv": ("time,a,b,c,d\n0.000000,50.0,25.0,25.0,100\n", "ParseError", ":1: expected header"),
        "four_fields.csv": (head + "0.000000,50.0,25.0,25.0\n", "ParseError", ":2: expected 5 fields"),
        "non_numeric.csv": (head + "0.000000,50.0,abc,25.0,100\n", "ParseError", ":2: non-numeric"),
        "percent_over_100.csv": (head + "0.000000,150.0,0.0,0.0,100\n", "ParseError", ":2: percentages"),
        "row_after_average.csv": (
            head + "0.000000,50.0,25.0,25.0,100\naverage,50.0,25.0,25.0,100\n0.033333,50.0,25.0,25.0,100\n",
            "ParseError",
            ":4: data after the average row",
        ),
        "bad_timestamp.csv": (head + "0.5,50.0,25.0,25.0,100\n", "ParseError", ":2:"),
        "header_only.csv": (head, "EmptyInputError", "no frame rows"),
    }
    d = section("stats_csv", "golden.csv", stats_bad)
    frames = [FrameStats(0.0, 677, 67, 255, 1), FrameStats(0.033333, 600, 100, 300, 0), FrameStats(0.066667, 1, 1, 1, 997)]
    dataio.write_stats_csv(frames, d / "golden.csv")

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "tests" / "fixtures")
    args = ap.parse_args()
    manifest = write_corpus(args.out)
    for name, entry in manifest.items():
        print(f"{name}: golden + {len(entry['malformed'])} malformed")


if __name__ == "__main__":
    main()
