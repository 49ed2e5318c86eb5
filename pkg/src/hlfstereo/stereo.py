"""Central-view disparity from a hyperspectral light field.

Two complementary per-pixel, per-label costs are fused in an MRF:

 - a correspondence cost: mean -log matching score between the central
   view's descriptor and each selected view's descriptor at the shifted
   position, with a local view-selection rule (edge pixels trust views
   that also look like edges there) and an occluder/occluded split near
   strong edges;
 - a defocus cost: the spectral profile gathered across views at the
   hypothesized correspondences is compared (KL divergence) against a
   Gaussian prior centered at the wavelength suggested by the profile's
   hue under the camera response.

Memory scales with label count x image area; views are processed one at a
time so descriptor fields never coexist.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import descriptor, metric, mrf
from .config import Params
from .model import (CameraSpectralResponse, DisparityMap,
                    HyperspectralLightField, ViewIndex)


def sample_shifted(img, dy, dx):
    """Bilinearly sample img at (y + dy, x + dx) for every pixel.

    Returns (values, inframe): outside the bilinear domain values are 0 and
    inframe is False.  Corner indices are clamped only where their weight
    vanishes, so the interior is plain bilinear interpolation.
    """
    img = np.asarray(img)
    H, W = img.shape
    out = np.zeros((H, W), dtype=img.dtype)
    mask = np.zeros((H, W), dtype=bool)
    rect = metric.shift_rect((H, W), float(dy), float(dx))
    if rect is None:
        return out, mask
    y0, y1, x0, x1 = rect
    iy, ix = int(np.floor(dy)), int(np.floor(dx))
    fy, fx = float(dy) - iy, float(dx) - ix
    ys = np.arange(y0, y1 + 1) + iy
    xs = np.arange(x0, x1 + 1) + ix
    ys1 = np.minimum(ys + 1, H - 1)
    xs1 = np.minimum(xs + 1, W - 1)
    vals = (img[np.ix_(ys, xs)] * ((1 - fy) * (1 - fx))
            + img[np.ix_(ys, xs1)] * ((1 - fy) * fx)
            + img[np.ix_(ys1, xs)] * (fy * (1 - fx))
            + img[np.ix_(ys1, xs1)] * (fy * fx))
    out[y0:y1 + 1, x0:x1 + 1] = vals
    mask[y0:y1 + 1, x0:x1 + 1] = True
    return out, mask


@dataclass
class PreparedLightField:
    """Per-view arrays shared by the cost passes (descriptors excluded)."""
    views: list                  # ViewIndex in scan order
    offsets: np.ndarray          # (V, 2) float64, (s - s0, t - t0)
    bands: np.ndarray            # (V,) float64 nm
    raw: np.ndarray              # (V, H, W) float32 original intensities
    mag: np.ndarray              # (V, H, W) float32 gradient magnitudes
    central_index: int
    central_features: object     # ImageFeatures of the central view
    occlusion_candidates: np.ndarray   # (H, W) bool
    side_one: np.ndarray         # (V, H, W) bool half-plane membership

    @property
    def shape(self):
        return self.raw.shape[1:]


def prepare(hlf, params=None):
    """Precompute magnitudes, profiles and edge geometry for all passes."""
    params = params or Params()
    rows, cols = hlf.grid_rows, hlf.grid_cols
    s0, t0 = hlf.central
    views, offsets, bands, raw, mags = [], [], [], [], []
    central_feats = None
    for s in range(rows):
        for t in range(cols):
            view = hlf.view(s, t)
            feats = descriptor.preprocess(view.data, params)
            views.append(ViewIndex(s, t))
            offsets.append((s - s0, t - t0))
            bands.append(view.center_nm)
            raw.append(np.asarray(view.data, dtype=np.float32))
            mags.append(feats.mag.astype(np.float32))
            if (s, t) == (s0, t0):
                central_feats = feats
    offsets = np.asarray(offsets, dtype=np.float64)
    bands = np.asarray(bands, dtype=np.float64)
    raw = np.stack(raw)
    mag = np.stack(mags)
    central_index = s0 * cols + t0

    magc = mag[central_index]
    thr = np.percentile(magc, params.edge_mag_percentile)
    strong = magc > thr
    r = params.occl_radius_px
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = (yy * yy + xx * xx) <= r * r
    occl = ndimage.binary_dilation(strong, structure=disk)

    theta = central_feats.theta
    g = np.stack([np.sin(theta), np.cos(theta)])           # (2, H, W), (y, x)
    dots = np.tensordot(offsets, g, axes=(1, 0))           # (V, H, W)
    side_one = dots >= 0

    return PreparedLightField(views=views, offsets=offsets, bands=bands,
                              raw=raw, mag=mag, central_index=central_index,
                              central_features=central_feats,
                              occlusion_candidates=occl, side_one=side_one)


def selection_mask(mag_p, mag_q, inframe):
    """Local view selection rule on sampled magnitudes.

    mag_p: (H, W) central magnitudes; mag_q, inframe: (V, H, W) per-view
    sampled magnitudes and their in-frame masks.  Views out of frame are
    excluded before the mean; edge pixels (M(p) >= mean) keep views with
    M(q) >= mean, others keep M(q) < mean; an empty pick falls back to all
    in-frame views.
    """
    counts = inframe.sum(axis=0)
    msum = np.where(inframe, mag_q, 0).astype(np.float64).sum(axis=0)
    mean = (msum / np.maximum(counts, 1)).astype(np.float32)
    edge = mag_p >= mean
    sel = inframe & np.where(edge[None], mag_q >= mean[None],
                             mag_q < mean[None])
    empty = ~sel.any(axis=0)
    sel = np.where(empty[None], inframe, sel)
    return sel, edge


@dataclass
class ViewSubset:
    selected: set
    mode: str                    # "edge" or "non-edge"
    partition: tuple = None      # (side one views, side two views) or None


def select_views(hlf_or_prep, p, d, params=None):
    """View subset for pixel p at disparity d (single-pixel variant)."""
    params = params or Params()
    prep = (hlf_or_prep if isinstance(hlf_or_prep, PreparedLightField)
            else prepare(hlf_or_prep, params))
    y, x = p
    V = len(prep.views)
    mq = np.empty((V, 1, 1), dtype=np.float32)
    inb = np.empty((V, 1, 1), dtype=bool)
    H, W = prep.shape
    for i in range(V):
        qy = y + d * prep.offsets[i, 0]
        qx = x + d * prep.offsets[i, 1]
        if 0 <= qy <= H - 1 and 0 <= qx <= W - 1:
            samp, _ = sample_shifted(prep.mag[i], qy - y, qx - x)
            mq[i] = samp[y, x]
            inb[i] = True
        else:
            mq[i], inb[i] = 0, False
    mp = prep.mag[prep.central_index][y, x][None, None]
    sel, edge = selection_mask(mp, mq, inb)
    chosen = {prep.views[i] for i in range(V) if sel[i, 0, 0]}
    mode = "edge" if edge[0, 0] else "non-edge"
    part = None
    if prep.occlusion_candidates[y, x]:
        one = {prep.views[i] for i in range(V)
               if sel[i, 0, 0] and prep.side_one[i, y, x]}
        two = chosen - one
        part = (one, two)
    return ViewSubset(selected=chosen, mode=mode, partition=part)


def correspondence_volume(hlf, params=None, prep=None, verbose=False):
    """Correspondence cost C for every pixel and label, shape (H, W, L).

    Streams one view's descriptor field at a time; per label it accumulates
    the clamped -log score over the selected views, with the occluder and
    occluded half-planes kept separate so occlusion candidates can take the
    better of the two sides.
    """
    params = params or Params()
    prep = prep or prepare(hlf, params)
    labels = hlf.labels()
    H, W = prep.shape
    V, L = len(prep.views), len(labels)
    ci = prep.central_index
    magc = prep.mag[ci]

    # per-label mean sampled magnitude over in-frame views (selection pass)
    means = np.zeros((L, H, W), dtype=np.float32)
    for li, d in enumerate(labels):
        csum = np.zeros((H, W), dtype=np.float64)
        cnt = np.zeros((H, W), dtype=np.int16)
        for v in range(V):
            dy, dx = d * prep.offsets[v]
            mq, inb = sample_shifted(prep.mag[v], dy, dx)
            csum += np.where(inb, mq, 0)
            cnt += inb
        means[li] = (csum / np.maximum(cnt, 1)).astype(np.float32)
    edge_mode = magc[None] >= means                       # (L, H, W)

    # groups: selected, selected by side, in-frame, in-frame by side
    sums = np.zeros((6, L, H, W), dtype=np.float64)
    cnts = np.zeros((6, L, H, W), dtype=np.int16)
    stack_c = metric.as_stack(descriptor.describe_field(
        prep.central_features, params))
    for v in range(V):
        if v == ci:
            stack_v = stack_c
        else:
            feats = descriptor.preprocess(prep.raw[v].astype(np.float64),
                                          params)
            stack_v = metric.as_stack(descriptor.describe_field(feats, params))
        active = metric.active_elements(stack_c, stack_v)
        s1 = prep.side_one[v]
        for li, d in enumerate(labels):
            dy, dx = d * prep.offsets[v]
            if v == ci:
                cost = np.zeros((H, W), dtype=np.float64)
                inb = np.ones((H, W), dtype=bool)
            else:
                score, inb = metric.score_map_stacks(stack_c, stack_v,
                                                     (dy, dx), params, active)
                cost = -np.log(metric.clamp_score(score, params))
            mq, _ = sample_shifted(prep.mag[v], dy, dx)
            sel = inb & np.where(edge_mode[li], mq >= means[li],
                                 mq < means[li])
            groups = (sel, sel & s1, sel & ~s1, inb, inb & s1, inb & ~s1)
            for gi, gmask in enumerate(groups):
                sums[gi, li] += np.where(gmask, cost, 0)
                cnts[gi, li] += gmask
        if verbose:
            print(f"  correspondence: view {v + 1}/{V} done", flush=True)

    # empty selection falls back to all in-frame views, split included
    empty = cnts[0] == 0
    eff = [(np.where(empty, sums[gi + 3], sums[gi]),
            np.where(empty, cnts[gi + 3], cnts[gi])) for gi in range(3)]

    def mean_cost(gi):
        s, c = eff[gi]
        return np.where(c > 0, s / np.maximum(c, 1), np.inf)

    c_sel = mean_cost(0)
    c_split = np.minimum(mean_cost(1), mean_cost(2))
    c_split = np.where(np.isfinite(c_split), c_split, c_sel)
    occl = prep.occlusion_candidates[None]
    vol = np.where(occl, c_split, c_sel)
    return np.ascontiguousarray(np.transpose(vol, (1, 2, 0))
                                .astype(np.float32)), labels


def correspondence_cost(hlf, fields, p, d, params=None, prep=None):
    """Single-pixel correspondence cost via the pointwise score (oracle).

    fields: dict ViewIndex -> descriptor field.  Follows the same selection
    and occlusion-split rules as the dense pass.
    """
    params = params or Params()
    prep = prep or prepare(hlf, params)
    subset = select_views(prep, p, d, params)
    y, x = p
    ci = prep.central_index
    field_c = fields[prep.views[ci]]

    def cost_over(views):
        total = 0.0
        for i, vi in enumerate(prep.views):
            if vi not in views:
                continue
            q = (y + d * prep.offsets[i, 0], x + d * prep.offsets[i, 1])
            xi = metric.bwncc(field_c, fields[vi], p, q, params)
            total += -np.log(metric.clamp_score(xi, params))
        return total / len(views)

    if subset.partition is not None:
        one, two = subset.partition
        costs = [cost_over(s) for s in (one, two) if s]
        return min(costs)
    return cost_over(subset.selected)


# ---------------------------------------------------------------------------
# defocus cost


@dataclass
class HueWavelengthTable:
    """Inverse map from hue angle to monochromatic wavelength.

    Built by sweeping 410..700nm stimuli through the camera response; the
    largest monotone hue segment is inverted by interpolation, hues outside
    it (the purple gap) clamp to whichever spectrum end is circularly
    nearer, and achromatic inputs fall back to a declared wavelength with a
    low-confidence flag.
    """
    wavelengths: np.ndarray
    hues: np.ndarray
    seg_lo: int
    seg_hi: int
    achromatic_nm: float = 550.0
    achromatic_eps: float = 1e-6

    def lookup_hue(self, hue):
        hue = np.asarray(hue, dtype=np.float64)
        hs = self.hues[self.seg_lo:self.seg_hi + 1]
        ls = self.wavelengths[self.seg_lo:self.seg_hi + 1]
        if hs[0] > hs[-1]:
            hs, ls = hs[::-1], ls[::-1]
        lam = np.interp(hue, hs, ls)
        inside = (hue >= hs[0]) & (hue <= hs[-1])
        d_lo = _circ_dist(hue, self.hues[0])
        d_hi = _circ_dist(hue, self.hues[-1])
        clamp = np.where(d_lo <= d_hi, self.wavelengths[0],
                         self.wavelengths[-1])
        return np.where(inside, lam, clamp)

    def lookup(self, rgb):
        """RGB -> (wavelength, low_confidence flag); rgb is (..., 3) >= 0."""
        rgb = np.asarray(rgb, dtype=np.float64)
        hue, sat = _hue_sat(rgb)
        flagged = sat < self.achromatic_eps
        lam = self.lookup_hue(hue)
        return np.where(flagged, self.achromatic_nm, lam), flagged


def _circ_dist(a, b):
    d = np.abs(a - b) % 360.0
    return np.minimum(d, 360.0 - d)


def _hue_sat(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    c = mx - mn
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(mx == r, ((g - b) / safe_c) % 6.0,
                 np.where(mx == g, (b - r) / safe_c + 2.0,
                          (r - g) / safe_c + 4.0))
    hue = 60.0 * h
    sat = np.where(mx > 0, c / np.where(mx > 0, mx, 1.0), 0.0)
    return np.where(c > 0, hue, 0.0), sat


def build_hue_wavelength_table(camera, params=None):
    """Hue -> wavelength lookup for a camera response covering 410-700nm."""
    params = params or Params()
    lo, hi = params.hue_table_range
    lams = np.arange(lo, hi + params.hue_table_step / 2, params.hue_table_step)
    rgb = camera.sample(lams)
    if np.any(rgb.max(axis=0) <= 0):
        raise ValueError("camera response has a channel that is zero "
                         "across the table range")
    hue, sat = _hue_sat(rgb)
    if np.any(sat < params.achromatic_eps):
        raise ValueError("camera response is achromatic somewhere in range")
    # longest run of single-signed hue steps, inverted by interpolation
    diffs = np.diff(hue)
    best = (0, 0)
    i = 0
    n = len(hue)
    while i < n - 1:
        j = i
        sign = 0
        while j < n - 1:
            s = np.sign(diffs[j])
            if s != 0:
                if sign == 0:
                    sign = s
                elif s != sign:
                    break
            j += 1
        if j - i > best[1] - best[0]:
            best = (i, j)
        i = max(j, i + 1)
    return HueWavelengthTable(wavelengths=lams, hues=hue,
                              seg_lo=best[0], seg_hi=best[1],
                              achromatic_nm=params.achromatic_nm,
                              achromatic_eps=params.achromatic_eps)


def _profile_rgb(profile, inframe, response):
    """Per-channel normalized camera response to a spectral profile.

    profile, inframe: (V, ...) samples and their validity; response: (V, 3).
    Channels are normalized by the summed response over surviving views so
    a flat spectrum maps to neutral gray.
    """
    num = np.einsum("v...,vc->...c", np.where(inframe, profile, 0), response)
    den = np.einsum("v...,vc->...c", inframe.astype(np.float64), response)
    return num / np.where(den > 0, den, 1.0)


def spectral_prior(bands, lam_r, inframe=None, params=None, axis=0):
    """Gaussian prior over bands centered at lam_r, width params.sigma_d.

    Normalized over the in-frame entries along `axis`; out-of-frame entries
    are zero.  Shapes broadcast, so this serves both the scalar path and
    the full (views, H, W) volume path.
    """
    params = params or Params()
    bands = np.asarray(bands, dtype=np.float64)
    lam_r = np.asarray(lam_r, dtype=np.float64)
    if inframe is None:
        inframe = np.ones(np.broadcast(bands, lam_r).shape, dtype=bool)
    prior = np.where(inframe,
                     np.exp(-((bands - lam_r) ** 2)
                            / (2.0 * params.sigma_d ** 2)), 0.0)
    den = np.maximum(prior.sum(axis=axis, keepdims=True), 1e-300)
    return prior / den


def defocus_volume(hlf, camera, params=None, prep=None, table=None,
                   verbose=False):
    """Defocus cost D for every pixel and label, shape (H, W, L).

    Returns (volume, flags): flags marks pixels whose profile was all zero
    (cost pinned at the declared maximum) or whose hue was achromatic.
    """
    params = params or Params()
    prep = prep or prepare(hlf, params)
    table = table or build_hue_wavelength_table(camera, params)
    labels = hlf.labels()
    H, W = prep.shape
    V, L = len(prep.views), len(labels)
    response = camera.sample(prep.bands)                   # (V, 3)
    lam_v = prep.bands[:, None, None]
    vol = np.zeros((H, W, L), dtype=np.float32)
    flags = np.zeros((H, W, L), dtype=bool)
    for li, d in enumerate(labels):
        prof = np.empty((V, H, W), dtype=np.float64)
        inb = np.empty((V, H, W), dtype=bool)
        for v in range(V):
            dy, dx = d * prep.offsets[v]
            samp, m = sample_shifted(prep.raw[v], dy, dx)
            prof[v] = samp
            inb[v] = m
        rgb = _profile_rgb(prof, inb, response)
        lam_r, achrom = table.lookup(rgb)
        prior = spectral_prior(lam_v, lam_r[None], inb, params)
        floored = np.where(inb, np.maximum(prof, params.kl_floor), 0)
        psum = floored.sum(axis=0)
        pstar = floored / np.where(psum > 0, psum, 1.0)[None]
        kl = np.where(inb & (prior > 0),
                      prior * np.log(np.where(prior > 0, prior, 1.0)
                                     / np.where(pstar > 0, pstar, 1.0)),
                      0.0).sum(axis=0)
        dead = np.where(inb, prof, 0).sum(axis=0) <= 0
        vol[:, :, li] = np.where(dead, params.defocus_max_cost,
                                 np.maximum(kl, 0.0))
        flags[:, :, li] = dead | achrom
        if verbose:
            print(f"  defocus: label {li + 1}/{L} done", flush=True)
    return vol, flags


def defocus_cost(hlf, camera, p, d, params=None, prep=None, table=None):
    """Single-pixel defocus cost (oracle path); returns (cost, flagged)."""
    params = params or Params()
    prep = prep or prepare(hlf, params)
    table = table or build_hue_wavelength_table(camera, params)
    y, x = p
    H, W = prep.shape
    V = len(prep.views)
    prof = np.zeros((V,), dtype=np.float64)
    inb = np.zeros((V,), dtype=bool)
    for v in range(V):
        qy = y + d * prep.offsets[v, 0]
        qx = x + d * prep.offsets[v, 1]
        if 0 <= qy <= H - 1 and 0 <= qx <= W - 1:
            samp, _ = sample_shifted(prep.raw[v], qy - y, qx - x)
            prof[v] = samp[y, x]
            inb[v] = True
    if not prof[inb].sum() > 0:
        return float(params.defocus_max_cost), True
    response = camera.sample(prep.bands)
    rgb = _profile_rgb(prof, inb, response)
    lam_r, achrom = table.lookup(rgb)
    prior = spectral_prior(prep.bands, float(lam_r), inb, params)
    floored = np.where(inb, np.maximum(prof, params.kl_floor), 0)
    pstar = floored / floored.sum()
    m = inb & (prior > 0)
    kl = float(np.sum(prior[m] * np.log(prior[m] / pstar[m])))
    return max(kl, 0.0), bool(achrom)


# ---------------------------------------------------------------------------
# fusion


@dataclass
class DisparityResult:
    fused: DisparityMap
    correspondence: DisparityMap
    defocus: DisparityMap
    labels: np.ndarray
    c_volume: np.ndarray = None
    d_volume: np.ndarray = None
    flags: np.ndarray = None


def estimate_disparity(hlf, camera=None, params=None, keep_volumes=False,
                       verbose=False):
    """Fused central-view disparity plus the two single-cue estimates.

    The fusion unary is gamma_c |C - C(f*_c)| + |D - D(f*_d)| where f*_c
    and f*_d are the per-pixel argmins of the two volumes; expansion starts
    from whichever single-cue labeling has lower total energy, so the fused
    energy never exceeds either.
    """
    params = params or Params()
    if camera is None:
        from .bench import reference_camera_response
        camera = reference_camera_response()
    prep = prepare(hlf, params)
    if verbose:
        print("computing correspondence volume", flush=True)
    cvol, labels = correspondence_volume(hlf, params, prep, verbose=verbose)
    if verbose:
        print("computing defocus volume", flush=True)
    dvol, flags = defocus_volume(hlf, camera, params, prep, verbose=verbose)
    H, W, L = cvol.shape
    fc = np.argmin(cvol, axis=2)
    fd = np.argmin(dvol, axis=2)
    gamma = params.resolve_gamma_c()
    cbase = np.take_along_axis(cvol, fc[:, :, None], axis=2)
    dbase = np.take_along_axis(dvol, fd[:, :, None], axis=2)
    unary = (gamma * np.abs(cvol.astype(np.float64) - cbase)
             + np.abs(dvol.astype(np.float64) - dbase)).reshape(H * W, L)

    ei, ej = mrf.grid_edges(H, W)
    lam = mrf.auto_lambda_s(unary, params)
    norm_c = prep.central_features.norm
    wts = mrf.contrast_weights(norm_c, ei, ej, params, lambda_s=lam)
    prob = mrf.MrfProblem(unary, ei, ej, wts, tau=params.tau)
    e_c = mrf.mrf_energy(prob, fc.ravel())
    e_d = mrf.mrf_energy(prob, fd.ravel())
    init = fc.ravel() if e_c <= e_d else fd.ravel()
    if verbose:
        print(f"fusing: init energy {min(e_c, e_d):.1f} "
              f"(corr {e_c:.1f}, defocus {e_d:.1f})", flush=True)
    fused_idx = mrf.alpha_expansion(prob, init=init.copy(),
                                    params=params).reshape(H, W)

    def to_map(idx):
        vals = labels[idx].astype(np.float32)
        return DisparityMap(vals, np.ones((H, W), dtype=bool))

    res = DisparityResult(fused=to_map(fused_idx), correspondence=to_map(fc),
                          defocus=to_map(fd), labels=labels, flags=flags)
    if keep_volumes:
        res.c_volume, res.d_volume = cvol, dvol
    return res


def dump_cost_volume(path, volume):
    """Write an (H, W, L) float32 volume: uint32 dims then flat data."""
    vol = np.ascontiguousarray(volume, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(struct.pack("<III", *vol.shape))
        f.write(vol.tobytes())


def load_cost_volume(path):
    with open(path, "rb") as f:
        h, w, l = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(h * w * l * 4), dtype="<f4")
    return data.reshape(h, w, l).copy()
