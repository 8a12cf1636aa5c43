import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthfuse import camera
from depthfuse.camera import CameraIntrinsics, Point3, back_project_pixel, project_point
from depthfuse.errors import BehindCameraError, BoundsError, ConfigError, InvalidDepthError

INTR = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)
DIST = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480, (0.08, -0.02, 0.001, -0.0015))

cols = st.floats(-0.5, 639.49, allow_nan=False)
rows = st.floats(-0.5, 479.49, allow_nan=False)
depths = st.floats(0.1, 100.0, allow_nan=False)


def test_principal_point_lies_on_axis():
    p = back_project_pixel(INTR, 319.5, 239.5, 2.0)
    assert (p.x, p.y, p.z) == (0.0, 0.0, 2.0)


def test_back_project_offset_pixel():
    p = back_project_pixel(INTR, 419.5, 239.5, 1.0)
    assert p.x == pytest.approx(100.0 / 525.0, abs=1e-15)
    assert p.y == 0.0 and p.z == 1.0
    assert p.x == pytest.approx(0.190476190476, abs=1e-12)


@pytest.mark.parametrize("depth", [0.0, -1.0, math.nan, math.inf])
def test_bad_depth_rejected(depth):
    with pytest.raises(InvalidDepthError):
        back_project_pixel(INTR, 10, 10, depth)


def test_out_of_bounds_pixel_rejected():
    with pytest.raises(BoundsError):
        back_project_pixel(INTR, 639.5, 10, 1.0)
    with pytest.raises(BoundsError):
        back_project_pixel(INTR, -0.51, 10, 1.0)
    # the lower edge of the first pixel is inside
    back_project_pixel(INTR, -0.5, -0.5, 1.0)


def test_on_axis_point_projects_to_principal_point():
    assert project_point(INTR, Point3(0, 0, 3.7)) == (319.5, 239.5, 3.7)


@pytest.mark.parametrize("z", [-0.5, 0.0])
def test_behind_camera_rejected(z):
    with pytest.raises(BehindCameraError):
        project_point(INTR, Point3(1, 1, z))


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point3(0, math.nan, 1)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(fx=0),
        dict(fy=-1),
        dict(cx=0),
        dict(cx=640),
        dict(cy=480),
        dict(width=0, cx=0.5),
        dict(distortion=(0.1, 0.2)),
    ],
)
def test_intrinsics_invariants(kwargs):
    base = dict(fx=525.0, fy=525.0, cx=319.5, cy=239.5, width=640, height=480)
    base.update(kwargs)
    with pytest.raises(ConfigError):
        CameraIntrinsics(**base)


@given(cols, rows, depths)
def test_round_trip_zero_distortion(c, r, z):
    col, row, depth = project_point(INTR, back_project_pixel(INTR, c, r, z))
    assert abs(col - c) < 1e-9 and abs(row - r) < 1e-9 and abs(depth - z) < 1e-9


@given(cols, rows, depths)
def test_round_trip_with_distortion(c, r, z):
    col, row, _ = project_point(DIST, back_project_pixel(DIST, c, r, z))
    assert abs(col - c) < 1e-6 and abs(row - r) < 1e-6


@given(cols, rows, depths, st.floats(0.01, 100.0))
def test_linear_in_depth(c, r, z, s):
    a = back_project_pixel(INTR, c, r, z).as_array()
    b = back_project_pixel(INTR, c, r, s * z).as_array()
    np.testing.assert_allclose(b, s * a, rtol=1e-12, atol=1e-12)


@given(st.floats(-0.6, 0.6), st.floats(-0.45, 0.45))
def test_undistort_inverts_distort(xn, yn):
    xd, yd = camera.distort_normalized(DIST, xn, yn)
    xu, yu = camera.undistort_normalized(DIST, xd, yd)
    assert abs(xu - xn) < 1e-12 and abs(yu - yn) < 1e-12


def test_distortion_offsets_vanish_without_coefficients():
    dx, dy = camera.pixel_offsets(INTR, np.array([0.0, 600.0]), np.array([0.0, 400.0]))
    assert np.all(dx == 0) and np.all(dy == 0)


def test_vectorized_matches_scalar():
    g = np.random.default_rng(1)
    c = g.uniform(-0.5, 639, 50)
    r = g.uniform(-0.5, 479, 50)
    z = g.uniform(0.2, 8, 50)
    pts = camera.back_project(DIST, c, r, z)
    for i in range(50):
        np.testing.assert_array_equal(pts[i], back_project_pixel(DIST, c[i], r[i], z[i]).as_array())
    col, row, depth = camera.project(DIST, pts)
    np.testing.assert_allclose(col, c, atol=1e-6)
    np.testing.assert_allclose(row, r, atol=1e-6)
    np.testing.assert_array_equal(depth, z)


def test_in_bounds_half_open():
    m = INTR.in_bounds(np.array([-0.5, 639.4999, 639.5, 0]), np.array([0, 0, 0, 479.5]))
    assert m.tolist() == [True, True, False, False]
