import json
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthfuse import dataio, errors, sim
from depthfuse.fusion import FrameStats
from depthfuse.geometry import DepthRaster, Pose, VarianceRaster

FIXTURES = Path(__file__).parent / "fixtures"
MANIFEST = json.loads((FIXTURES / "manifest.json").read_text())

READERS = {
    "intrinsics": dataio.read_intrinsics,
    "trajectory": dataio.read_trajectory,
    "depth_png": dataio.read_depth_png,
    "pfm": dataio.read_pfm,
    "stats_csv": dataio.read_stats_csv,
}

WRITERS = {
    "intrinsics": dataio.write_intrinsics,
    "trajectory": lambda poses, p: dataio.write_trajectory(poses.values(), p),
    "depth_png": dataio.write_depth_png,
    "pfm": dataio.write_pfm,
    "stats_csv": lambda parsed, p: dataio.write_stats_csv(parsed[0], p),
}

MALFORMED = [(sec, name, *want) for sec, entry in MANIFEST.items() for name, want in entry["malformed"].items()]


@pytest.mark.parametrize("section", sorted(MANIFEST))
def test_golden_round_trip(section, tmp_path):
    golden = FIXTURES / section / MANIFEST[section]["golden"]
    parsed = READERS[section](golden)
    out = tmp_path / golden.name
    WRITERS[section](parsed, out)
    assert out.read_bytes() == golden.read_bytes()


@pytest.mark.parametrize("section", sorted(MANIFEST))
def test_corpus_size(section):
    assert len(MANIFEST[section]["malformed"]) >= 5


@pytest.mark.parametrize("section, name, exc, fragment", MALFORMED)
def test_malformed_rejected(section, name, exc, fragment):
    path = FIXTURES / section / name
    with pytest.raises(getattr(errors, exc)) as info:
        READERS[section](path)
    msg = str(info.value)
    assert fragment in msg
    assert name in msg  # names the file


def test_intrinsics_example(tmp_path):
    p = tmp_path / "intrinsics.txt"
    p.write_text("fx 525\nfy 525\ncx 319.5\ncy 239.5\nwidth 640\nheight 480\n")
    intr = dataio.read_intrinsics(p)
    assert (intr.fx, intr.cx, intr.width, intr.height) == (525.0, 319.5, 640, 480)
    assert tuple(intr.distortion) == (0.0, 0.0, 0.0, 0.0)


def test_missing_files(tmp_path):
    for reader in READERS.values():
        with pytest.raises(errors.ParseError, match="not found"):
            reader(tmp_path / "absent")


def test_trajectory_identity(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("# ts tx ty tz qx qy qz qw\n0.0 0 0 0 0 0 0 1\n")
    poses = dataio.read_trajectory(p)
    pose = poses[0.0]
    np.testing.assert_array_equal(pose.rotation, np.eye(3))
    np.testing.assert_array_equal(pose.translation, 0.0)


def test_trajectory_1800_lines_fast(tmp_path):
    poses = sim.line_trajectory(1800)
    p = tmp_path / "t.txt"
    dataio.write_trajectory(poses, p)
    dataio.read_trajectory(p)  # warm caches
    t0 = time.perf_counter()
    out = dataio.read_trajectory(p)
    assert time.perf_counter() - t0 < 0.1
    assert len(out) == 1800
    ts = list(out)
    assert ts == sorted(ts)


@given(st.integers(0, 2**32 - 1))
def test_trajectory_round_trip(seed):
    import tempfile

    g = np.random.default_rng(seed)
    poses = []
    for i in range(5):
        q = g.standard_normal(4)
        poses.append(Pose.from_quaternion(q / np.linalg.norm(q), g.uniform(-5, 5, 3), round(i * 0.033333, 6)))
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "t.txt"
        dataio.write_trajectory(poses, p)
        back = list(dataio.read_trajectory(p).values())
    for a, b in zip(poses, back):
        assert a.timestamp == b.timestamp
        np.testing.assert_allclose(b.rotation, a.rotation, atol=1e-9)
        np.testing.assert_allclose(b.translation, a.translation, atol=1e-9)


def test_png_quantization(tmp_path):
    d = DepthRaster(np.array([[2.0, np.nan], [1.23456, 65.535]]), np.array([[True, False], [True, True]]))
    np.testing.assert_array_equal(dataio.depth_to_mm(d), [[2000, 0], [1235, 65535]])
    p = tmp_path / "d.png"
    dataio.write_depth_png(d, p)
    back = dataio.read_depth_png(p)
    np.testing.assert_array_equal(back.valid, d.valid)
    assert np.max(np.abs(back.values[d.valid] - d.values[d.valid])) <= 0.5e-3


@given(st.integers(0, 2**32 - 1))
def test_png_round_trip_bound(seed):
    import tempfile

    g = np.random.default_rng(seed)
    v = g.uniform(0.3, 60.0, (6, 9))
    m = g.random((6, 9)) < 0.8
    d = DepthRaster(np.where(m, v, np.nan), m)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "d.png"
        dataio.write_depth_png(d, p)
        back = dataio.read_depth_png(p)
    np.testing.assert_array_equal(back.valid, m)
    assert np.max(np.abs(back.values[m] - v[m])) <= 0.5e-3 + 1e-12


def test_png_saturates_to_invalid():
    np.testing.assert_array_equal(dataio.depth_to_mm(DepthRaster.from_array(np.full((2, 2), 70.0))), 0)


def test_pfm_round_trip(tmp_path):
    g = np.random.default_rng(1)
    v = g.uniform(0.1, 9.0, (480, 640)).astype(np.float32).astype(float)
    v[0, 0] = np.nan
    d = DepthRaster.from_array(v)
    p = tmp_path / "x.pfm"
    dataio.write_pfm(d, p)
    back = dataio.read_pfm(p)
    assert not back.valid[0, 0]
    assert back.equals(d)
    var = VarianceRaster.from_array(v * 1e-6)
    dataio.write_pfm(var, p)
    assert isinstance(dataio.read_pfm_variance(p), VarianceRaster)


def test_stats_csv_examples(tmp_path):
    p = tmp_path / "s.csv"
    dataio.write_stats_csv([FrameStats(0.0, 1200, 0, 0, 0)], p)
    lines = p.read_text().splitlines()
    assert lines[1] == "0.000000,100.0,0.0,0.0,1200"
    assert lines[-1].startswith("average,100.0,0.0,0.0")
    frames = [FrameStats(i / 30, 600 + i, 70, 250, 0) for i in range(3)]
    dataio.write_stats_csv(frames, p)
    rows, avg = dataio.read_stats_csv(p)
    assert len(rows) == 3 and avg is not None
    q = tmp_path / "empty.csv"
    with pytest.raises(errors.EmptyInputError):
        dataio.write_stats_csv([], q)
    assert not q.exists()


def test_timestamps():
    assert dataio.format_timestamp(1.5) == "1.500000"
    assert dataio.parse_timestamp("0.033333") == 0.033333
    with pytest.raises(errors.ParseError):
        dataio.parse_timestamp("0.5")


def test_load_dataset(small_dataset):
    ds = dataio.load_dataset(small_dataset.root)
    assert len(ds.frame_stamps) == 12 and len(ds.keyframes) == 3
    assert ds.read_depth(ds.frame_stamps[0]).shape == ds.intrinsics.shape
    assert ds.read_truth(ds.frame_stamps[-1]) is not None
    kf = ds.keyframes[1]
    np.testing.assert_array_equal(kf.sfm_depth.valid, kf.sfm_variance.valid)


def _copy(src: Path, dst: Path) -> Path:
    import shutil

    shutil.copytree(src, dst, ignore=shutil.ignore_patterns("fused"))
    return dst


def test_dataset_missing_pose(small_dataset, tmp_path):
    root = _copy(small_dataset.root, tmp_path / "ds")
    traj = root / "trajectory.txt"
    lines = traj.read_text().splitlines()
    traj.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(errors.PoseLookupError, match="trajectory.txt"):
        dataio.load_dataset(root)


def test_dataset_unpaired_keyframe(small_dataset, tmp_path):
    root = _copy(small_dataset.root, tmp_path / "ds")
    next(iter(sorted((root / "keyframes").glob("*.var.pfm")))).unlink()
    with pytest.raises(errors.FormatError, match="pair"):
        dataio.load_dataset(root)


def test_dataset_not_found(tmp_path):
    with pytest.raises(errors.ParseError, match="not found"):
        dataio.load_dataset(tmp_path / "missing")
