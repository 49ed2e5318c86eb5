"""Synthetic scenes, metrics, and benchmark data plumbing."""

import json

import numpy as np
import pytest

from hlfstereo import bench, model
from hlfstereo.model import DisparityMap


# ---------------------------------------------------------------------------
# scene generator


def test_scene_band_assignment(tiny_scene, full_grid_scene):
    # 30-view grids get the 10nm ladder, other grids an even spread
    assert full_grid_scene.hlf.bands == list(bench.DEFAULT_BANDS)
    assert np.allclose(tiny_scene.hlf.bands, np.linspace(410, 700, 9))


def test_scene_ground_truth_planes(tiny_scene):
    gt = tiny_scene.gt[tiny_scene.hlf.central]
    expect = np.where(tiny_scene.fg_mask, tiny_scene.d_fg, tiny_scene.d_bg)
    assert np.array_equal(gt.values, expect.astype(np.float32))
    assert gt.valid.all()
    assert tiny_scene.fg_mask.any() and not tiny_scene.fg_mask.all()


def test_scene_views_photo_consistent(plane_scene):
    # single plane at integer disparity: every view is an exact shift of
    # the central render of the same band
    from hlfstereo.stereo import sample_shifted
    hlf = plane_scene.hlf
    s0, t0 = hlf.central
    lam = hlf.bands[0]
    central = plane_scene.band_render(s0, t0, lam)
    d = plane_scene.d_bg
    for (s, t) in ((0, 0), (2, 1), (1, 2)):
        view = plane_scene.band_render(s, t, lam)
        samp, inb = sample_shifted(view, d * (s - s0), d * (t - t0))
        err = np.abs(samp - central)[inb].max()
        assert err <= 1e-6, f"view ({s},{t}) deviates {err}"


def test_native_views_match_cube_layers(tiny_scene):
    cube = tiny_scene.ground_truth_cube()
    for key in cube.views:
        band = cube.native[key]
        assert np.array_equal(cube.layers[key][band],
                              tiny_scene.hlf.view(*key).data)


def test_nonoccluded_mask_flags_covered_pixels(tiny_scene):
    hlf = tiny_scene.hlf
    mask = tiny_scene.nonoccluded_mask(hlf.central, (0, 0))
    assert mask.mean() > 0.5
    assert not mask.all()          # the ellipse edge occludes something


# ---------------------------------------------------------------------------
# band filtering


def _checker_rgb(shape=(6, 8)):
    rgb = np.zeros(shape + (3,))
    rgb[:, :, 0] = 0.8
    rgb[:, :, 1] = 0.5
    rgb[:, :, 2] = 0.2
    return rgb


def test_synth_hlf_requires_full_grid():
    views = {(0, 0): _checker_rgb(), (0, 1): _checker_rgb()}
    with pytest.raises(ValueError):
        bench.synth_hlf(views, [500.0])          # band count mismatch
    views = {(0, 0): _checker_rgb()}
    with pytest.raises(ValueError):
        bench.synth_hlf(views, [500.0, 600.0])


def test_synth_hlf_rejects_bad_weights():
    views = {(0, 0): _checker_rgb(), (0, 1): _checker_rgb()}
    bands = [450.0, 650.0]
    with pytest.raises(ValueError):
        bench.synth_hlf(views, bands, weights=[[1, 0, 0]])
    with pytest.raises(ValueError):
        bench.synth_hlf(views, bands, weights=[[1, 0, 0], [-1, 1, 0]])
    with pytest.raises(ValueError):
        bench.synth_hlf(views, bands, weights=[[1, 0, 0], [0, 0, 0]])


def test_synth_hlf_renormalizes_weights():
    views = {(0, 0): _checker_rgb(), (0, 1): _checker_rgb()}
    bands = [450.0, 650.0]
    a = bench.synth_hlf(views, bands, weights=[[2, 0, 0], [0, 4, 4]])
    b = bench.synth_hlf(views, bands, weights=[[1, 0, 0], [0, 0.5, 0.5]])
    for key in views:
        assert np.array_equal(a.views[key].data, b.views[key].data)
    assert a.views[(0, 0)].data.max() <= 1.0


def test_pseudo_pair_channels():
    left = _checker_rgb()
    right = _checker_rgb() * 0.5
    l, r = bench.pseudo_pair(left, right)
    assert np.array_equal(l.data, left[:, :, 0].astype(np.float32))
    assert np.array_equal(r.data, right[:, :, 2].astype(np.float32))
    assert l.center_nm == 650.0 and r.center_nm == 450.0
    with pytest.raises(ValueError):
        bench.pseudo_pair(left[:, :, 0], right)


# ---------------------------------------------------------------------------
# metrics


def _dm(vals, valid=None):
    vals = np.asarray(vals, dtype=np.float32)
    return DisparityMap(vals, np.ones_like(vals, bool)
                        if valid is None else np.asarray(valid, bool))


def test_bad_n_known_values():
    est = _dm([[0.0, 1.0, 2.0, 3.0]])
    gt = _dm([[0.0, 0.0, 0.0, 0.0]])
    assert bench.bad_n(est, gt, 1.0) == pytest.approx(50.0)
    assert bench.bad_n(est, gt, 5.0) == pytest.approx(0.0)
    # masking off the worst pixel drops the rate to one in three
    mask = np.array([[True, True, True, False]])
    assert bench.bad_n(est, gt, 1.0, mask=mask) == pytest.approx(100.0 / 3)


def test_bad_n_respects_validity():
    est = _dm([[0.0, 9.0]], valid=[[True, False]])
    gt = _dm([[0.0, 0.0]])
    assert bench.bad_n(est, gt, 1.0) == pytest.approx(0.0)
    gt_none = _dm([[0.0, 0.0]], valid=[[False, False]])
    assert np.isnan(bench.bad_n(est, gt_none, 1.0))


def test_rmse_known_value():
    est = _dm([[0.0, 1.0, 2.0, 3.0]])
    gt = _dm([[0.0, 0.0, 0.0, 0.0]])
    assert bench.rmse(est, gt) == pytest.approx(np.sqrt(3.5))


def test_psnr_known_values():
    a = np.full((4, 4), 0.5)
    b = np.zeros((4, 4))
    assert bench.psnr(a, a) == 99.0
    assert bench.psnr(a, b) == pytest.approx(10 * np.log10(1 / 0.25))
    mask = np.zeros((4, 4), bool)
    mask[0, 0] = True
    c = a.copy()
    c[0, 0] = 0.5
    assert bench.psnr(c, a, mask=mask) == 99.0


def test_interior_mask_counts():
    m = bench.interior_mask((4, 5), 1)
    assert m.sum() == 2 * 3
    assert m[1:3, 1:4].all()
    assert not bench.interior_mask((4, 5), 2).any()


# ---------------------------------------------------------------------------
# benchmark pair loading


def test_load_cross_spectral_pair_layout(tmp_path):
    d = str(tmp_path)
    rng = np.random.default_rng(12)
    left = rng.uniform(0, 1, (10, 12, 3))
    right = rng.uniform(0, 1, (10, 12, 3))
    from PIL import Image
    Image.fromarray((left * 255).round().astype(np.uint8)).save(
        f"{d}/left.png")
    Image.fromarray((right * 255).round().astype(np.uint8)).save(
        f"{d}/right.png")
    gt = np.full((10, 12), 32 / 255.0)       # raw 32 -> disparity 2 at /16
    model.write_image(f"{d}/gt.pgm", gt, depth=8)
    with open(f"{d}/meta.json", "w") as f:
        json.dump({"gt_scale": 16.0, "disparity_range": [0, 16]}, f)
    l, r, gtm, rng_out = bench.load_cross_spectral_pair(d)
    assert l.shape == (10, 12, 3) and r.shape == (10, 12, 3)
    assert np.abs(l - left).max() <= 0.5 / 255 + 1e-9
    assert rng_out == (0, 16)
    assert gtm.valid.all()
    assert np.allclose(gtm.values, 2.0)
