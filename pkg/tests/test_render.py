"""Color emulation and synthetic refocusing from a completed cube."""

import warnings

import numpy as np
import pytest

from hlfstereo import bench, render


@pytest.fixture(scope="module")
def plane_cube(plane_scene):
    return plane_scene.ground_truth_cube()


def test_flat_spectrum_is_neutral_gray():
    cam = bench.reference_camera_response()
    bands = np.linspace(410, 700, 30)
    profile = np.full((30, 4, 5), 0.37)
    rgb = render.profile_to_rgb(profile, bands, cam)
    assert rgb.shape == (4, 5, 3)
    assert np.abs(rgb - 0.37).max() <= 1e-12


def test_monochromatic_profile_keeps_camera_ratios():
    cam = bench.reference_camera_response()
    bands = np.linspace(410, 700, 30)
    profile = np.zeros((30, 1, 1))
    profile[12] = 0.8                      # single active band
    rgb = render.profile_to_rgb(profile, bands, cam)[0, 0]
    resp = cam.sample(bands)
    expect = 0.8 * resp[12] / resp.sum(axis=0)
    assert np.allclose(rgb, expect, atol=1e-12)


def test_profile_to_rgb_linear_and_clipped():
    cam = bench.reference_camera_response()
    bands = np.linspace(410, 700, 10)
    profile = np.full((10, 1, 1), 0.2)
    one = render.profile_to_rgb(profile, bands, cam)
    two = render.profile_to_rgb(2 * profile, bands, cam)
    assert np.allclose(two, 2 * one, atol=1e-12)
    huge = render.profile_to_rgb(50 * profile, bands, cam)
    assert huge.max() <= 1.0


def test_emulate_color_matches_profile_mapping(plane_scene, plane_cube):
    cam = plane_scene.camera
    central = plane_scene.hlf.central
    rgb = render.emulate_color(plane_cube, central, cam)
    profile = np.stack([plane_cube.layers[central][b]
                        for b in plane_cube.bands])
    expect = render.profile_to_rgb(profile, plane_cube.bands, cam)
    assert np.allclose(rgb, expect)
    assert rgb.min() >= 0.0 and rgb.max() <= 1.0


def test_emulate_color_rejects_incomplete_cube(plane_scene, plane_cube):
    import copy
    cube = copy.deepcopy(plane_cube)
    central = plane_scene.hlf.central
    del cube.layers[(0, 0)][cube.bands[3]]
    with pytest.raises(ValueError):
        render.emulate_color(cube, (0, 0), plane_scene.camera)
    with pytest.raises(KeyError):
        render.emulate_color(cube, (9, 9), plane_scene.camera)


def test_refocus_at_true_plane_recovers_central_band(plane_scene, plane_cube):
    # single plane at d=2: every view offset is an integer shift, so the
    # averaged stack must reproduce the central view's own band exactly
    rgb, stack = render.refocus(plane_cube, 2.0, plane_scene.camera)
    hlf = plane_scene.hlf
    ci = hlf.central[0] * hlf.grid_cols + hlf.central[1]
    central_band = stack[ci]
    ref = hlf.central_view().data.astype(np.float64)
    rms = float(np.sqrt(np.mean((central_band - ref) ** 2)))
    print(f"refocus rms at true plane: {rms:.2e}")
    assert rms <= 1e-3
    assert stack.shape == (len(plane_cube.bands),) + hlf.shape
    assert stack.dtype == np.float32
    assert rgb.shape == hlf.shape + (3,)


def test_sharpness_peaks_at_true_focus(plane_scene, plane_cube):
    cam = plane_scene.camera
    labels = plane_scene.hlf.labels()
    step = float(labels[1] - labels[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")   # +-5 labels may leave the range
        sharp = {}
        for off in (-5, 0, 5):
            rgb, _ = render.refocus(plane_cube, 2.0 + off * step, cam)
            sharp[off] = render.sharpness(rgb.mean(axis=2))
    print(f"sharpness: {sharp}")
    assert sharp[0] > sharp[-5]
    assert sharp[0] > sharp[5]


def test_refocus_warns_outside_range(plane_scene, plane_cube):
    with pytest.warns(UserWarning, match="outside"):
        render.refocus(plane_cube, 99.0, plane_scene.camera)


def test_sharpness_prefers_texture_over_blur(rng):
    img = rng(9).uniform(0, 1, (40, 40))
    from scipy import ndimage
    blurred = ndimage.gaussian_filter(img, 2.0)
    assert render.sharpness(img) > render.sharpness(blurred)
