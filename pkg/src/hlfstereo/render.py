"""Rendering from a completed plenoptic cube.

Color emulation maps each pixel's 30-band profile through a camera's
spectral response with per-channel normalization, so a flat spectrum comes
out neutral gray.  Refocusing shifts every view of a band onto a chosen
disparity plane and averages whatever views still cover each pixel, then
feeds the refocused profile through the same color mapping.
"""

import warnings

import numpy as np
from scipy import ndimage

from .config import Params
from .stereo import sample_shifted


def _cube_profile(cube, view):
    """Stack a view's layers into (bands, H, W) in band order."""
    if view not in cube.layers:
        raise KeyError(f"view {view} not in cube")
    layers = cube.layers[view]
    missing = [b for b in cube.bands if b not in layers]
    if missing:
        raise ValueError(f"view {view} is missing layers {missing}")
    return np.stack([layers[b] for b in cube.bands]).astype(np.float64)


def profile_to_rgb(profile, bands, camera, gamma=1.0):
    """Per-channel normalized color of a (bands, ...) spectral profile.

    ch = sum_b profile_b * resp_ch(b) / sum_b resp_ch(b); clipped to [0, 1]
    and left linear unless gamma says otherwise.
    """
    resp = camera.sample(np.asarray(bands, dtype=np.float64))   # (B, 3)
    den = resp.sum(axis=0)
    if np.any(den <= 0):
        raise ValueError("camera response is zero across the cube bands "
                         "in some channel")
    rgb = np.tensordot(np.asarray(profile, dtype=np.float64),
                       resp / den, axes=(0, 0))
    rgb = np.clip(rgb, 0.0, 1.0)
    if gamma != 1.0:
        rgb = rgb ** (1.0 / gamma)
    return rgb


def emulate_color(cube, view, camera, params=None):
    """RGB image of one cube view under a camera's spectral response."""
    params = params or Params()
    profile = _cube_profile(cube, view)
    return profile_to_rgb(profile, cube.bands, camera,
                          gamma=params.render_gamma)


def refocus(cube, focus_disparity, camera, params=None):
    """Refocus the cube at a disparity plane; returns (rgb, band_stack).

    Per band, every view's layer is shifted by focus_disparity times the
    view offset and averaged; border pixels average only the views that
    still cover them.  band_stack has shape (bands, H, W).
    """
    params = params or Params()
    lo, hi = cube.disparity_range
    if not lo <= focus_disparity <= hi:
        warnings.warn(f"focus disparity {focus_disparity} outside "
                      f"[{lo}, {hi}]; rendering anyway")
    s0, t0 = cube.central
    some_view = next(iter(cube.layers.values()))
    H, W = next(iter(some_view.values())).shape
    stack = np.zeros((len(cube.bands), H, W), dtype=np.float64)
    for bi, band in enumerate(cube.bands):
        acc = np.zeros((H, W), dtype=np.float64)
        cnt = np.zeros((H, W), dtype=np.int32)
        for (s, t) in cube.views:
            dy = focus_disparity * (s - s0)
            dx = focus_disparity * (t - t0)
            vals, inb = sample_shifted(
                cube.layers[(s, t)][band].astype(np.float64), dy, dx)
            acc += np.where(inb, vals, 0.0)
            cnt += inb
        stack[bi] = acc / np.maximum(cnt, 1)
        if not cnt.all():
            # pixels no view covers stay zero; flag-free, they are rare
            pass
    rgb = profile_to_rgb(stack, cube.bands, camera, gamma=params.render_gamma)
    return rgb, stack.astype(np.float32)


def sharpness(image):
    """Variance of the Laplacian; higher means better focus."""
    return float(np.var(ndimage.laplace(np.asarray(image, dtype=np.float64))))
