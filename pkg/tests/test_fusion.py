import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthfuse.errors import EmptyInputError, InvalidVarianceError, ShapeError
from depthfuse.fusion import (
    PROVENANCE_COLORS,
    FrameStats,
    Provenance,
    StatsRow,
    _fuse,
    colorize_provenance,
    format_table,
    fuse_frame,
    fuse_pixel,
    sequence_stats,
    sigma_image,
)
from depthfuse.geometry import DepthRaster, VarianceRaster
from depthfuse.noise import RgbdNoiseModel, depth_sigma

depths = st.floats(0.1, 20.0)
variances = st.floats(1e-8, 10.0)


def test_equal_variances_average():
    z, v, lab = fuse_pixel(2.0, 0.01, 3.0, 0.01)
    assert z == pytest.approx(2.5, rel=1e-15) and v == pytest.approx(0.005, rel=1e-15)
    assert lab is Provenance.FUSED


def test_pass_through():
    assert fuse_pixel(2.0, 0.01) == (2.0, 0.01, Provenance.RGBD_ONLY)
    assert fuse_pixel(mu_sfm=4.0, var_sfm=0.2) == (4.0, 0.2, Provenance.SFM_ONLY)
    z, v, lab = fuse_pixel()
    assert np.isnan(z) and np.isnan(v) and lab is Provenance.NONE


def test_unequal_variances():
    z, v, lab = fuse_pixel(2.0, 1e-4, 5.0, 1.0)
    # direct evaluation: (2*1 + 5*1e-4) / (1 + 1e-4), 1e-4 / (1 + 1e-4)
    assert z == pytest.approx(2.0005 / 1.0001, rel=1e-14)
    assert str(z).startswith("2.0002999")
    assert v == pytest.approx(9.999e-5, rel=1e-4)
    assert lab is Provenance.FUSED


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan, None])
def test_bad_variance(bad):
    with pytest.raises(InvalidVarianceError):
        fuse_pixel(2.0, bad)
    with pytest.raises(InvalidVarianceError):
        fuse_pixel(mu_sfm=2.0, var_sfm=bad)


@given(depths, variances, depths, variances)
def test_fusion_laws(a, va, b, vb):
    z, v, _ = fuse_pixel(a, va, b, vb)
    assert min(a, b) * (1 - 1e-15) <= z <= max(a, b) * (1 + 1e-15)
    assert v < min(va, vb)
    z2, v2, _ = fuse_pixel(b, vb, a, va)
    assert z2 == z and v2 == v
    direct_z = (a * vb + b * va) / (vb + va)
    direct_v = va * vb / (va + vb)
    assert z == pytest.approx(direct_z, rel=1e-12)
    assert v == pytest.approx(direct_v, rel=1e-12)


@given(depths, variances, depths)
def test_dominance_limit(a, va, b):
    # the exact gap is (b - a) * va / (va + 1e12)
    z, _, _ = fuse_pixel(a, va, b, 1e12)
    assert z - a == pytest.approx((b - a) * va / (va + 1e12), rel=1e-4, abs=8 * np.finfo(float).eps * max(a, b))


@given(depths, depths)
def test_dominance_limit_sensor_variance(a, b):
    va = depth_sigma(RgbdNoiseModel(), a) ** 2
    z, _, _ = fuse_pixel(a, va, b, 1e12)
    assert z == pytest.approx(a, rel=1e-9)


def test_gate():
    # 3-sigma gate on 2.0 vs 3.0 with sigma_sum 0.1: rejected, keeps lower variance source
    z, v, lab = fuse_pixel(2.0, 0.002, 3.0, 0.008, gate=3.0)
    assert (z, v, lab) == (2.0, 0.002, Provenance.RGBD_ONLY)
    z, v, lab = fuse_pixel(2.0, 0.008, 3.0, 0.002, gate=3.0)
    assert (z, v, lab) == (3.0, 0.002, Provenance.SFM_ONLY)
    # consistent pair is fused as usual
    assert fuse_pixel(2.0, 0.01, 2.1, 0.01, gate=3.0)[2] is Provenance.FUSED


def _frame(shape, rgbd_mask, sfm_mask):
    g = np.random.default_rng(0)
    d = DepthRaster(np.where(rgbd_mask, g.uniform(1, 3, shape), np.nan), rgbd_mask)
    vd = VarianceRaster(np.where(rgbd_mask, 1e-4, np.nan), rgbd_mask)
    s = DepthRaster(np.where(sfm_mask, g.uniform(1, 3, shape), np.nan), sfm_mask)
    vs = VarianceRaster(np.where(sfm_mask, 1e-3, np.nan), sfm_mask)
    return d, vd, s, vs


def test_frame_rgbd_only():
    shape = (6, 8)
    d, vd, s, vs = _frame(shape, np.ones(shape, bool), np.zeros(shape, bool))
    f = fuse_frame(d, vd, s, vs)
    assert f.stats.rgbd_only_pct == 100.0 and f.stats.fused == 0
    no_sfm = fuse_frame(d, vd)
    assert np.all(no_sfm.provenance == Provenance.RGBD_ONLY)
    assert no_sfm.depth.equals(d)


def test_frame_disjoint_halves():
    shape = (6, 8)
    left = np.zeros(shape, bool)
    left[:, :4] = True
    d, vd, s, vs = _frame(shape, left, ~left)
    st_ = fuse_frame(d, vd, s, vs).stats
    assert (st_.rgbd_only_pct, st_.sfm_only_pct, st_.fused_pct) == (50.0, 50.0, 0.0)


@given(st.integers(0, 2**32 - 1))
def test_frame_partition(seed):
    g = np.random.default_rng(seed)
    shape = (7, 9)
    m1, m2 = g.random(shape) < 0.5, g.random(shape) < 0.5
    d, vd, s, vs = _frame(shape, m1, m2)
    f = fuse_frame(d, vd, s, vs)
    lab = f.provenance
    np.testing.assert_array_equal(lab == Provenance.FUSED, m1 & m2)
    np.testing.assert_array_equal(lab == Provenance.RGBD_ONLY, m1 & ~m2)
    np.testing.assert_array_equal(lab == Provenance.SFM_ONLY, ~m1 & m2)
    np.testing.assert_array_equal(f.depth.valid, lab != Provenance.NONE)
    s_ = f.stats
    assert s_.rgbd_only + s_.sfm_only + s_.fused + s_.none == lab.size
    if s_.total_measured:
        assert abs(s_.rgbd_only_pct + s_.sfm_only_pct + s_.fused_pct - 100.0) < 1e-9
    both = m1 & m2
    assert np.all(f.variance.values[both] < np.minimum(vd.values, vs.values)[both])


def test_frame_errors():
    shape = (4, 4)
    d, vd, s, vs = _frame(shape, np.ones(shape, bool), np.ones(shape, bool))
    with pytest.raises(ShapeError):
        fuse_frame(d, vd, DepthRaster.empty((3, 4)), VarianceRaster.empty((3, 4)))
    with pytest.raises(InvalidVarianceError):
        fuse_frame(d, vd, s, None)
    with pytest.raises(InvalidVarianceError):
        VarianceRaster(np.where(vs.valid, -1.0, np.nan), vs.valid)
    holes = VarianceRaster(np.where(np.eye(4, dtype=bool), np.nan, 1e-3), ~np.eye(4, dtype=bool))
    with pytest.raises(InvalidVarianceError):
        fuse_frame(d, holes, s, vs)


def test_million_pairs_vectorized():
    g = np.random.default_rng(5)
    n = 10**6
    a, b = g.uniform(0.1, 20, n), g.uniform(0.1, 20, n)
    va, vb = 10 ** g.uniform(-8, 1, n), 10 ** g.uniform(-8, 1, n)
    yes = np.ones(n, bool)
    z, v, _ = _fuse(a, va, yes, b, vb, yes, None)
    zs, vs, _ = _fuse(b, vb, yes, a, va, yes, None)
    np.testing.assert_array_equal(z, zs)
    np.testing.assert_array_equal(v, vs)
    assert np.all(v < np.minimum(va, vb))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    assert np.all((z >= lo * (1 - 1e-15)) & (z <= hi * (1 + 1e-15)))
    np.testing.assert_allclose(z, (a * vb + b * va) / (va + vb), rtol=1e-12)
    np.testing.assert_allclose(v, va * vb / (va + vb), rtol=1e-12)


def test_colorize():
    assert np.all(colorize_provenance(np.zeros((3, 4), np.uint8)) == 0)
    lab = np.zeros((3, 4), np.uint8)
    lab[1, 2] = Provenance.FUSED
    img = colorize_provenance(lab)
    assert tuple(img[1, 2]) == (255, 0, 0)
    assert np.sum(np.all(img == (255, 0, 0), axis=-1)) == 1


@given(st.integers(0, 2**32 - 1))
def test_colorize_bijection(seed):
    lab = np.random.default_rng(seed).integers(0, 4, (10, 10)).astype(np.uint8)
    img = colorize_provenance(lab)
    for p, rgb in PROVENANCE_COLORS.items():
        assert np.sum(np.all(img == rgb, axis=-1)) == np.sum(lab == p)


def test_sigma_image():
    m = np.array([[True, True, True, False]])
    v = VarianceRaster(np.array([[0.0025, 0.04, 1.0, np.nan]]), m)
    img = sigma_image(v, 0.1)
    assert img.dtype == np.uint8
    np.testing.assert_array_equal(img, [[128, 255, 255, 0]])


def test_sequence_stats():
    one = FrameStats(1.0, 60, 10, 30, 0)
    rows = sequence_stats([one])
    assert rows[-1].fused_pct == rows[0].fused_pct == 30.0
    two = sequence_stats([FrameStats(0.0, 80, 0, 20, 0), FrameStats(1.0, 70, 0, 30, 0)])
    assert two[-1].label == "average" and two[-1].fused_pct == pytest.approx(25.0)
    with pytest.raises(EmptyInputError):
        sequence_stats([])


def test_table_shape():
    exps = [StatsRow(f"exp{i}", 60.0 + i, 10.0, 30.0 - i, 1000) for i in range(3)]
    text = format_table(sequence_stats(exps), "experiment")
    lines = text.splitlines()
    assert len(lines) == 2 + 4
    assert lines[-1].split()[0] == "Average"
    assert "RGBD-only (%)" in lines[0] and "Fused (%)" in lines[0]
