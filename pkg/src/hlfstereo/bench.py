"""Benchmark utilities: synthetic scenes, cross-spectral pairs, metrics.

The bundled scene is two fronto-parallel textured planes seen from an M x N
grid of views, one narrow band per view.  Textures are band-limited noise
with luminance structure shared across channels and slowly varying chroma,
so different spectral bands see the same edges at different gains, which is
exactly the regime the descriptor is built for.  Ground truth (per-view
disparity and per-view, per-band renders) comes from the same geometry, so
every stage of the pipeline has an oracle.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from PIL import Image

from .model import (CameraSpectralResponse, DisparityMap,
                    HyperspectralLightField, SpectralImage, ViewIndex)

DEFAULT_BANDS = tuple(float(b) for b in range(410, 701, 10))


def reference_camera_response(step=5.0):
    """Smooth synthetic RGB responsivity covering 400-710 nm.

    Stands in for a measured camera curve: three Gaussians placed like
    typical silicon-sensor dyes.  Used as the default tunable-filter
    transmittance and for hue tables when no CSV is supplied.
    """
    lam = np.arange(400.0, 710.0 + step / 2, step)
    r = 0.95 * np.exp(-((lam - 605.0) ** 2) / (2.0 * 45.0 ** 2))
    g = 1.00 * np.exp(-((lam - 540.0) ** 2) / (2.0 * 42.0 ** 2))
    b = 0.95 * np.exp(-((lam - 460.0) ** 2) / (2.0 * 38.0 ** 2))
    return CameraSpectralResponse(lam, np.stack([r, g, b], axis=1))


def band_filter_weights(bands, camera=None):
    """Per-band RGB mixing weights: responsivities renormalized per band."""
    camera = camera or reference_camera_response()
    w = camera.sample(np.asarray(bands, dtype=np.float64))
    return w / w.sum(axis=1, keepdims=True)


def synth_hlf(rgb_views, bands, camera=None, weights=None,
              disparity_range=(0.0, 4.0), label_count=64, central=None,
              baseline_mm=36.0):
    """Filter an RGB light field into single-band views.

    rgb_views: dict (s, t) -> (H, W, 3) float in [0, 1], a full M x N grid.
    bands are assigned in grid scan order (s major), so the grid size must
    equal the band count.  Filter weights are renormalized to sum 1 per
    band, which keeps every rendered view inside [0, 1].
    """
    ss = sorted({k[0] for k in rgb_views})
    ts = sorted({k[1] for k in rgb_views})
    rows, cols = len(ss), len(ts)
    if rows * cols != len(bands) or len(rgb_views) != rows * cols:
        raise ValueError("need a full grid with one band per view")
    if weights is None:
        weights = band_filter_weights(bands, camera)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(bands), 3) or np.any(weights < 0) \
                or np.any(weights.sum(axis=1) <= 0):
            raise ValueError("filter needs a nonnegative RGB triple with a "
                             "nonzero channel for every band")
        weights = weights / weights.sum(axis=1, keepdims=True)
    hlf = HyperspectralLightField(
        grid_rows=rows, grid_cols=cols, baseline_mm=baseline_mm,
        disparity_range=tuple(disparity_range), label_count=label_count,
        central=central)
    for i, (s, t) in enumerate((s, t) for s in range(rows) for t in range(cols)):
        rgb = np.asarray(rgb_views[(s, t)], dtype=np.float64)
        gray = rgb @ weights[i]
        hlf.views[(s, t)] = SpectralImage(gray.astype(np.float32),
                                          float(bands[i]), ViewIndex(s, t))
    return hlf


def _textured(rng, shape, lum_sigma=1.0, chroma_sigma=22.0,
              lum_range=(0.22, 0.95), chroma_range=(0.45, 1.0)):
    """Random RGB texture: shared luminance edges, slowly varying chroma."""
    lum = ndimage.gaussian_filter(rng.random(shape), lum_sigma)
    lo, hi = lum.min(), lum.max()
    lum = lum_range[0] + (lum - lo) / (hi - lo) * (lum_range[1] - lum_range[0])
    rgb = np.empty(shape + (3,), dtype=np.float64)
    for c in range(3):
        ch = ndimage.gaussian_filter(rng.random(shape), chroma_sigma)
        lo, hi = ch.min(), ch.max()
        ch = (chroma_range[0]
              + (ch - lo) / (hi - lo) * (chroma_range[1] - chroma_range[0]))
        rgb[:, :, c] = lum * ch
    return rgb


@dataclass
class TwoPlaneScene:
    hlf: HyperspectralLightField
    rgb: dict                      # (s, t) -> (H, W, 3) float64
    gt: dict                       # (s, t) -> DisparityMap
    camera: CameraSpectralResponse
    filter_weights: np.ndarray     # (bands, 3)
    d_bg: float
    d_fg: float
    fg_mask: np.ndarray            # central-view foreground mask (may be empty)
    _tex: dict = field(default_factory=dict, repr=False)

    def band_render(self, s, t, lam):
        """Ground-truth single-band image of view (s, t) at wavelength lam."""
        bands = list(self.hlf.bands)
        w = band_filter_weights([lam], self.camera)[0] if lam not in bands \
            else self.filter_weights[bands.index(lam)]
        return (self.rgb[(s, t)] @ w).astype(np.float32)

    def ground_truth_cube(self):
        """Exact plenoptic cube from the analytic scene (all confidences 1)."""
        from .completion import PlenopticCube
        hlf = self.hlf
        cube = PlenopticCube(
            grid_rows=hlf.grid_rows, grid_cols=hlf.grid_cols,
            central=hlf.central, bands=tuple(hlf.bands),
            native={}, disparity_range=tuple(hlf.disparity_range))
        H, W = hlf.shape
        for s in range(hlf.grid_rows):
            for t in range(hlf.grid_cols):
                cube.native[(s, t)] = hlf.view(s, t).center_nm
                cube.layers[(s, t)] = {
                    b: self.band_render(s, t, b) for b in hlf.bands}
                cube.confidence[(s, t)] = {
                    b: np.ones((H, W), dtype=np.float32) for b in hlf.bands}
        return cube

    def nonoccluded_mask(self, view_a, view_b, erode=1):
        """Pixels of view_a whose surface is also visible in view_b."""
        gt_a = self.gt[view_a]
        gt_b = self.gt[view_b]
        H, W = gt_a.values.shape
        s0, t0 = self.hlf.central
        da = (view_a[0] - s0, view_a[1] - t0)
        db = (view_b[0] - s0, view_b[1] - t0)
        yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
        d = gt_a.values.astype(np.float64)
        qy = yy + d * (db[0] - da[0])
        qx = xx + d * (db[1] - da[1])
        inside = (qy >= 0) & (qy <= H - 1) & (qx >= 0) & (qx <= W - 1)
        qyr = np.clip(np.round(qy).astype(int), 0, H - 1)
        qxr = np.clip(np.round(qx).astype(int), 0, W - 1)
        same = np.abs(gt_b.values[qyr, qxr] - gt_a.values) < 0.25
        mask = inside & same
        if erode:
            mask = ndimage.binary_erosion(mask, iterations=erode)
        return mask


def two_plane_scene(seed=0, height=256, width=256, grid=(5, 6),
                    d_bg=1.0, d_fg=3.0, disparity_range=(0.0, 4.0),
                    label_count=9, bands=None, camera=None,
                    foreground=True, fg_axes=None):
    """Procedural two-plane light field with full ground truth.

    The foreground plane is an ellipse at disparity d_fg occluding a
    background plane at d_bg; foreground=False gives a single plane (useful
    for refocusing oracles).  Every view/band render is derived from two
    padded textures, so no external data is involved.  bands defaults to
    the 10 nm ladder for a 30-view grid, else an even spread over the same
    410-700 nm span.
    """
    rows, cols = grid
    if bands is None:
        bands = DEFAULT_BANDS if rows * cols == len(DEFAULT_BANDS) \
            else tuple(np.linspace(410.0, 700.0, rows * cols))
    if rows * cols != len(bands):
        raise ValueError("grid size must match band count")
    camera = camera or reference_camera_response()
    rng = np.random.default_rng(seed)
    s0, t0 = rows // 2, cols // 2
    max_off = max(max(abs(s - s0) for s in range(rows)),
                  max(abs(t - t0) for t in range(cols)))
    pad = int(np.ceil(max(abs(d_bg), abs(d_fg)) * max_off)) + 2
    pshape = (height + 2 * pad, width + 2 * pad)

    tex_bg = _textured(rng, pshape)
    tex_fg = _textured(rng, pshape, lum_range=(0.3, 1.0),
                       chroma_range=(0.35, 1.0))
    fg_mask_pad = np.zeros(pshape, dtype=bool)
    if foreground:
        if fg_axes is None:
            fg_axes = (float(rng.uniform(24, 34)), float(rng.uniform(30, 42)))
        cy = pad + height / 2 + float(rng.uniform(-20, 20))
        cx = pad + width / 2 + float(rng.uniform(-24, 24))
        yy, xx = np.mgrid[0:pshape[0], 0:pshape[1]].astype(np.float64)
        fg_mask_pad = (((yy - cy) / fg_axes[0]) ** 2
                       + ((xx - cx) / fg_axes[1]) ** 2) <= 1.0

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    rgb_views, gt = {}, {}
    for s in range(rows):
        for t in range(cols):
            ds, dt = s - s0, t - t0
            # view pixel (y, x) sees central-frame point (y - d*ds, x - d*dt)
            by = yy - d_bg * ds + pad
            bx = xx - d_bg * dt + pad
            fy = yy - d_fg * ds + pad
            fx = xx - d_fg * dt + pad
            vis = ndimage.map_coordinates(
                fg_mask_pad.astype(np.float64), [fy, fx],
                order=0, mode="constant") > 0.5
            view = np.empty((height, width, 3))
            for c in range(3):
                bg = ndimage.map_coordinates(tex_bg[:, :, c], [by, bx],
                                             order=1, mode="nearest")
                fg = ndimage.map_coordinates(tex_fg[:, :, c], [fy, fx],
                                             order=1, mode="nearest")
                view[:, :, c] = np.where(vis, fg, bg)
            rgb_views[(s, t)] = view
            gtv = np.where(vis, d_fg, d_bg).astype(np.float32)
            gt[(s, t)] = DisparityMap(gtv, np.ones_like(gtv, dtype=bool))

    weights = band_filter_weights(bands, camera)
    hlf = synth_hlf(rgb_views, bands, camera=camera, weights=weights,
                    disparity_range=disparity_range, label_count=label_count,
                    central=(s0, t0))
    fg_central = ndimage.map_coordinates(
        fg_mask_pad.astype(np.float64),
        [yy + pad, xx + pad], order=0, mode="constant") > 0.5
    return TwoPlaneScene(hlf=hlf, rgb=rgb_views, gt=gt, camera=camera,
                         filter_weights=weights, d_bg=d_bg, d_fg=d_fg,
                         fg_mask=fg_central)


def pseudo_pair(left_rgb, right_rgb, red_nm=650.0, blue_nm=450.0):
    """Cross-spectral stereo pair: left red channel vs right blue channel."""
    left = np.asarray(left_rgb, dtype=np.float64)
    right = np.asarray(right_rgb, dtype=np.float64)
    if left.ndim != 3 or right.ndim != 3:
        raise ValueError("expected RGB images")
    return (SpectralImage(left[:, :, 0].astype(np.float32), red_nm),
            SpectralImage(right[:, :, 2].astype(np.float32), blue_nm))


def read_rgb(path):
    with Image.open(path) as im:
        arr = np.array(im.convert("RGB"))
    return arr.astype(np.float64) / 255.0


def load_cross_spectral_pair(directory):
    """Load a prepared benchmark pair: left/right RGB + ground truth.

    Expects left.(png|ppm), right.(png|ppm), gt.pgm or gt.pfm, and meta.json
    with {"gt_scale": s, "disparity_range": [lo, hi]} (see
    scripts/fetch_middlebury.py for the converter that writes this layout).
    """
    import json
    from . import model
    meta_path = os.path.join(directory, "meta.json")
    with open(meta_path) as f:
        meta = json.load(f)

    def find(stem):
        for ext in (".png", ".ppm", ".pgm"):
            p = os.path.join(directory, stem + ext)
            if os.path.exists(p):
                return p
        raise FileNotFoundError(f"{stem}.* not found in {directory}")

    left = read_rgb(find("left"))
    right = read_rgb(find("right"))
    gt_path = (os.path.join(directory, "gt.pfm")
               if os.path.exists(os.path.join(directory, "gt.pfm"))
               else find("gt"))
    gt = model.read_disparity(gt_path, scale=meta.get("gt_scale"))
    return left, right, gt, tuple(meta["disparity_range"])


# ---------------------------------------------------------------------------
# metrics


def _joint_mask(est, gt, mask=None):
    m = est.valid & gt.valid
    if mask is not None:
        m &= mask
    return m


def bad_n(est, gt, thresh, mask=None):
    """Percent of mutually valid pixels with |est - gt| > thresh."""
    m = _joint_mask(est, gt, mask)
    n = int(m.sum())
    if n == 0:
        return float("nan")
    bad = np.abs(est.values[m] - gt.values[m]) > thresh
    return 100.0 * float(bad.sum()) / n


def rmse(est, gt, mask=None):
    m = _joint_mask(est, gt, mask)
    if not m.any():
        return float("nan")
    d = est.values[m].astype(np.float64) - gt.values[m]
    return float(np.sqrt(np.mean(d * d)))


def psnr(img, ref, peak=1.0, mask=None):
    """Peak SNR in dB against a reference, capped at 99 dB."""
    a = np.asarray(img, dtype=np.float64)
    b = np.asarray(ref, dtype=np.float64)
    if mask is not None:
        a, b = a[mask], b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return 99.0
    return float(min(99.0, 10.0 * np.log10(peak * peak / mse)))


def interior_mask(shape, margin):
    m = np.zeros(shape, dtype=bool)
    if shape[0] > 2 * margin and shape[1] > 2 * margin:
        m[margin:shape[0] - margin, margin:shape[1] - margin] = True
    return m
