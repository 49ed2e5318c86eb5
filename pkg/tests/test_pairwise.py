"""Two-view cross-channel matcher: recovery, uniqueness, occlusion."""

import numpy as np
import pytest

from hlfstereo import bench, pairwise
from hlfstereo.config import Params
from hlfstereo.model import DisparityMap


@pytest.fixture(scope="module")
def shifted_pair():
    """Cross-spectral pair from one scene: right view sits one grid step
    left of the reference, so x_right = x_left - d with d = scene GT."""
    scene = bench.two_plane_scene(seed=5, height=48, width=56, grid=(3, 3),
                                  d_bg=2.0, d_fg=5.0,
                                  disparity_range=(0.0, 6.0), foreground=True)
    s0, t0 = scene.hlf.central
    left = scene.rgb[(s0, t0)][:, :, 0]     # red channel
    right = scene.rgb[(s0, t0 - 1)][:, :, 2]  # blue channel
    return left, right, scene.gt[(s0, t0)], scene


def test_nearest_label_snaps_and_breaks_ties_down():
    d = np.arange(0, 5, dtype=np.float64)
    vals = np.array([[0.2, 0.6, 2.5, 4.9, -3.0]])
    snapped = pairwise.nearest_label(vals, d)
    assert snapped.tolist() == [[0.0, 1.0, 2.0, 5.0 - 1.0, 0.0]]


def test_cost_volume_marks_out_of_frame_worst(params, rng):
    r = rng(30)
    left = r.uniform(0, 1, (12, 14)).astype(np.float32)
    right = r.uniform(0, 1, (12, 14)).astype(np.float32)
    disp = np.array([0.0, 5.0])
    vol = pairwise.pair_cost_volume(left, right, disp, params)
    worst = -np.log(params.clamp_floor)
    assert vol.shape == (12, 14, 2)
    # d=5: x-5 < 0 for the left 5 columns
    assert np.allclose(vol[:, :5, 1], worst)
    assert np.all(vol <= worst + 1e-6)
    assert np.all(vol >= -1e-6)


def test_match_pair_recovers_disparity(shifted_pair, params):
    left, right, gt, scene = shifted_pair
    dm = pairwise.match_pair(left, right, (0, 6), params)
    m = dm.valid & gt.valid & bench.interior_mask(gt.values.shape, 6)
    err = np.abs(dm.values - gt.values)[m]
    assert (err > 1.0).mean() <= 0.01
    assert dm.valid.mean() > 0.5


def test_uniqueness_no_two_valid_pixels_share_a_target(shifted_pair, params):
    left, right, gt, scene = shifted_pair
    dm = pairwise.match_pair(left, right, (0, 6), params)
    H, W = dm.values.shape
    ys, xs = np.nonzero(dm.valid)
    tx = xs - np.round(dm.values[ys, xs]).astype(int)
    keep = (tx >= 0) & (tx < W)
    targets = ys[keep] * W + tx[keep]
    assert targets.size == np.unique(targets).size, \
        "two valid pixels claim one target"


def test_occluded_region_invalidated(params, rng):
    # a bright bar at high disparity hides background next to it
    r = rng(31)
    H, W = 40, 64
    base = r.uniform(0.2, 0.8, (H, W + 12)).astype(np.float64)
    left = base[:, 12:].copy()
    right = base[:, 12:].copy()
    # paste a d=8 foreground strip into both images
    strip = r.uniform(0.3, 1.0, (H, 10))
    left[:, 30:40] = strip
    right[:, 22:32] = strip
    dm = pairwise.match_pair(left, right, (0, 10), params)
    occluded = dm.valid[:, 40:48]
    # pixels right of the strip are covered in the right image; most must
    # be flagged invalid rather than given confident wrong matches
    assert (~occluded).mean() > 0.5


def test_vertical_matches_transposed_horizontal(shifted_pair, params):
    left, right, gt, scene = shifted_pair
    dm_h = pairwise.match_pair(left, right, (0, 6), params)
    dm_v = pairwise.match_pair_vertical(left.T.copy(), right.T.copy(),
                                        (0, 6), params)
    assert np.array_equal(dm_v.values, dm_h.values.T)
    assert np.array_equal(dm_v.valid, dm_h.valid.T)


def test_prior_steers_the_data_term(params, rng):
    r = rng(32)
    left = r.uniform(0, 1, (20, 30))
    right = np.roll(left, -2, axis=1)
    prior = DisparityMap(np.full((20, 30), 2.0, np.float32),
                         np.ones((20, 30), bool))
    dm = pairwise.match_pair(left, right, (0, 4), params, prior=prior)
    inner = dm.values[:, 4:-4]
    valid = dm.valid[:, 4:-4]
    assert (inner[valid] == 2.0).mean() > 0.95
