"""Two-view cross-spectral stereo on rectified pairs.

Matches a left image against a right image taken through a different
spectral filter, using the gradient-histogram descriptor and the
element-weighted correlation score.  Convention: the match for left pixel
(y, x) at disparity d sits at (y, x - d) in the right image, one label per
integer disparity step.
"""

import numpy as np

from . import descriptor, metric, mrf
from .config import Params
from .model import DisparityMap, SpectralImage


def _image_array(img):
    if isinstance(img, SpectralImage):
        return np.asarray(img.data, dtype=np.float64)
    return np.asarray(img, dtype=np.float64)


def pair_cost_volume(left, right, disparities, params=None, verbose=False):
    """Matching cost volume, shape (H, W, len(disparities)), float32.

    Cost is -log of the clamped score; a position whose match would leave
    the frame gets the worst possible cost (score at the clamp floor), so
    it can never look better than a real match.
    """
    params = params or Params()
    la, ra = _image_array(left), _image_array(right)
    if la.shape != ra.shape:
        raise ValueError("pair images must share a shape")
    sa = metric.as_stack(descriptor.describe_field(la, params))
    sb = metric.as_stack(descriptor.describe_field(ra, params))
    active = metric.active_elements(sa, sb)
    H, W = la.shape
    worst = float(-np.log(params.clamp_floor))
    vol = np.full((H, W, len(disparities)), worst, dtype=np.float32)
    for i, d in enumerate(disparities):
        score, valid = metric.score_map_stacks(sa, sb, (0.0, -float(d)),
                                               params, active)
        cost = -np.log(metric.clamp_score(score, params))
        vol[:, :, i] = np.where(valid, cost, worst).astype(np.float32)
        if verbose:
            print(f"  pair volume {i + 1}/{len(disparities)}", flush=True)
    return vol


def nearest_label(values, disparities):
    """Snap values to the nearest entry of an ascending label grid.

    Exact midpoints take the lower label.
    """
    idx = np.searchsorted(disparities, values)
    idx = np.clip(idx, 1, len(disparities) - 1)
    lower = disparities[idx - 1]
    upper = disparities[idx]
    idx = np.where(np.abs(values - lower) <= np.abs(upper - values),
                   idx - 1, idx)
    return idx.astype(np.int64)


def _uniqueness_filter(disp, valid):
    """Keep one claimant per right-image pixel; the larger disparity wins."""
    H, W = disp.shape
    ys, xs = np.nonzero(valid)
    if ys.size == 0:
        return valid
    tx = np.round(xs - disp[ys, xs]).astype(np.int64)
    inb = (tx >= 0) & (tx < W)
    ys, xs, tx = ys[inb], xs[inb], tx[inb]
    dv = disp[ys, xs]
    order = np.argsort(dv, kind="stable")  # larger d written last wins
    winner = np.full(H * W, -1, dtype=np.int64)
    winner[ys[order] * W + tx[order]] = ys[order] * W + xs[order]
    is_winner = np.zeros(H * W, dtype=bool)
    claimed = winner[winner >= 0]
    is_winner[claimed] = True
    keep = valid.copy()
    keep[ys, xs] = is_winner[ys * W + xs]
    return keep


def solve_pair_volume(vol, left_image, disparities, params=None, prior=None):
    """Label a pair cost volume and invalidate occluded/ambiguous pixels.

    Data term is the cost difference against a reference labeling (the
    prior where valid, winner-take-all elsewhere); the solver starts from
    that reference, so its energy can only improve on it.
    """
    params = params or Params()
    disparities = np.asarray(disparities, dtype=np.float64)
    H, W, L = vol.shape
    wta = np.argmin(vol, axis=2)
    star = wta
    if prior is not None:
        snapped = nearest_label(prior.values.astype(np.float64).ravel(),
                                 disparities).reshape(H, W)
        star = np.where(prior.valid, snapped, wta)
    base = np.take_along_axis(vol, star[:, :, None], axis=2)[:, :, 0]
    unary = np.abs(vol.astype(np.float64) - base[:, :, None])
    norm = descriptor.normalize(_image_array(left_image))
    labels, _ = mrf.solve_grid(unary, norm, params, init=star)
    sol_cost = np.take_along_axis(vol, labels[:, :, None], axis=2)[:, :, 0]
    best = vol.min(axis=2)
    thr = params.occlusion_factor * float(np.median(best))
    valid = sol_cost <= thr
    disp = disparities[labels].astype(np.float32)
    valid = _uniqueness_filter(disp, valid)
    return DisparityMap(disp, valid)


def match_pair(left, right, disparity_range, params=None, prior=None,
               verbose=False):
    """Disparity of left against right with x_right = x_left - d.

    disparity_range is inclusive; labels are the integers it contains.
    Returns a DisparityMap in left-image coordinates.
    """
    params = params or Params()
    lo = int(np.floor(disparity_range[0]))
    hi = int(np.ceil(disparity_range[1]))
    disparities = np.arange(lo, hi + 1, dtype=np.float64)
    la = _image_array(left)
    vol = pair_cost_volume(la, right, disparities, params, verbose=verbose)
    return solve_pair_volume(vol, la, disparities, params, prior=prior)


def match_pair_vertical(top, bottom, disparity_range, params=None,
                        prior=None, verbose=False):
    """Vertical-baseline variant with y_bottom = y_top - d.

    Runs the horizontal matcher on transposed images, which keeps both
    descriptors in one consistent frame, then maps the result back.
    """
    ta = np.ascontiguousarray(_image_array(top).T)
    ba = np.ascontiguousarray(_image_array(bottom).T)
    prior_t = None
    if prior is not None:
        prior_t = DisparityMap(np.ascontiguousarray(prior.values.T),
                               np.ascontiguousarray(prior.valid.T))
    res = match_pair(ta, ba, disparity_range, params, prior=prior_t,
                     verbose=verbose)
    return DisparityMap(np.ascontiguousarray(res.values.T),
                        np.ascontiguousarray(res.valid.T))
