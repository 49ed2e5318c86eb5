"""Plenoptic cube completion: give every view every spectral band.

Starting from the fused central-view disparity, the pipeline (1) forward
warps that map to every view as a prior, (2) re-matches all adjacent view
pairs with the prior and merges each view's neighbor estimates by median,
(3) refines each merged map with an edge-aware weighted least squares
solve, and (4) propagates band layers between neighboring views by
backward warping with a depth consistency test until no layer grows,
leaving any residual holes to a nearest-valid fill.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg

from . import descriptor, mrf, pairwise
from .config import Params
from .model import DisparityMap, write_image, read_image


def warp_disparity(dmap, offset):
    """Forward-splat a disparity map to the view at the given offset.

    offset is (rows, cols) relative to the map's own view.  Each valid
    source pixel lands at round(p + d * offset) carrying value d; when two
    sources collide the larger disparity (nearer surface) wins; unhit
    pixels come back invalid.
    """
    H, W = dmap.values.shape
    out = np.zeros((H, W), dtype=np.float32)
    hit = np.zeros((H, W), dtype=bool)
    ys, xs = np.nonzero(dmap.valid)
    if ys.size:
        d = dmap.values[ys, xs].astype(np.float64)
        ty = np.rint(ys + d * offset[0]).astype(np.int64)
        tx = np.rint(xs + d * offset[1]).astype(np.int64)
        inb = (ty >= 0) & (ty < H) & (tx >= 0) & (tx < W)
        order = np.argsort(d[inb], kind="stable")   # larger d written last
        ti = ty[inb][order] * W + tx[inb][order]
        flat = out.ravel()
        flat[ti] = d[inb][order]
        hit.ravel()[ti] = True
    return DisparityMap(out, hit)


def _flip(dmap, axis):
    sl = (slice(None, None, -1), slice(None)) if axis == 0 \
        else (slice(None), slice(None, None, -1))
    return DisparityMap(np.ascontiguousarray(dmap.values[sl]),
                        np.ascontiguousarray(dmap.valid[sl]))


def neighbor_estimate(img_a, img_b, step, disparity_range, params=None,
                      prior=None, verbose=False):
    """Disparity of view A against neighbor B one grid step away.

    step is (ds, dt) = B - A with exactly one unit component.  All four
    directions reduce to the canonical matcher by flipping the offending
    axis of both images, which preserves the nearer-surface conventions.
    """
    ds, dt = step
    if abs(ds) + abs(dt) != 1:
        raise ValueError("neighbor step must be a single grid hop")
    if dt == -1:
        return pairwise.match_pair(img_a, img_b, disparity_range, params,
                                   prior=prior, verbose=verbose)
    if dt == 1:
        res = pairwise.match_pair(img_a[:, ::-1], img_b[:, ::-1],
                                  disparity_range, params,
                                  prior=None if prior is None
                                  else _flip(prior, 1), verbose=verbose)
        return _flip(res, 1)
    if ds == -1:
        return pairwise.match_pair_vertical(img_a, img_b, disparity_range,
                                            params, prior=prior,
                                            verbose=verbose)
    res = pairwise.match_pair_vertical(img_a[::-1], img_b[::-1],
                                       disparity_range, params,
                                       prior=None if prior is None
                                       else _flip(prior, 0), verbose=verbose)
    return _flip(res, 0)


def _median_merge(estimates, labels):
    """Per-pixel median of valid estimates, snapped to the label grid.

    Even counts average the middle two; exact midpoints between labels
    snap down.  Pixels with no valid estimate come back invalid.
    """
    vals = np.stack([e.values for e in estimates]).astype(np.float64)
    valid = np.stack([e.valid for e in estimates])
    n = valid.sum(axis=0)
    vals = np.where(valid, vals, np.inf)
    vals.sort(axis=0)
    hw = vals.shape[1:]
    lo = np.take_along_axis(vals, np.maximum((n - 1) // 2, 0)[None], 0)[0]
    hi = np.take_along_axis(vals, np.minimum(n // 2, len(estimates) - 1)[None],
                            0)[0]
    med = np.where(n > 0, (lo + hi) / 2.0, 0.0)
    idx = pairwise.nearest_label(med.ravel(), labels).reshape(hw)
    return DisparityMap(labels[idx].astype(np.float32), n > 0)


def grid_neighbors(rows, cols, s, t):
    for ds, dt in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        if 0 <= s + ds < rows and 0 <= t + dt < cols:
            yield s + ds, t + dt


def pairwise_sweep(hlf, priors, params=None, verbose=False):
    """Merged per-view disparity from all adjacent view pairs.

    priors: dict (s, t) -> DisparityMap (typically warped from the central
    estimate).  Every directed adjacent pair contributes an estimate for
    its left view; each view's estimates merge by median.
    """
    params = params or Params()
    labels = hlf.labels()
    rng = hlf.disparity_range
    merged = {}
    done = 0
    total = sum(1 for s in range(hlf.grid_rows) for t in range(hlf.grid_cols)
                for _ in grid_neighbors(hlf.grid_rows, hlf.grid_cols, s, t))
    for s in range(hlf.grid_rows):
        for t in range(hlf.grid_cols):
            img_a = hlf.view(s, t).data
            ests = []
            for sb, tb in grid_neighbors(hlf.grid_rows, hlf.grid_cols, s, t):
                est = neighbor_estimate(img_a, hlf.view(sb, tb).data,
                                        (sb - s, tb - t), rng, params,
                                        prior=priors.get((s, t)))
                ests.append(est)
                done += 1
                if verbose:
                    print(f"  pair {done}/{total} "
                          f"({s},{t})->({sb},{tb})", flush=True)
            merged[(s, t)] = _median_merge(ests, labels)
    return merged


def refine_disparity(merged, prior, image, params=None):
    """Edge-aware weighted least squares refinement of a sparse map.

    Sources are the merged estimate where valid, the warped prior where
    only it is valid; smoothness weights fall on similar-intensity,
    low-gradient neighbor pairs.  Output is fully valid.
    """
    params = params or Params()
    H, W = merged.values.shape
    src = np.where(merged.valid, merged.values, prior.values).astype(np.float64)
    w_d = np.where(merged.valid, params.data_weight,
                   np.where(prior.valid, params.prior_weight, 0.0)).ravel()
    if not (w_d > 0).any():
        raise ValueError("unrefinable view: no valid source pixels")
    feats = descriptor.preprocess(np.asarray(image, dtype=np.float64), params)
    ei, ej = mrf.grid_edges(H, W)
    ni, nj = feats.norm.ravel(), feats.mag.ravel()
    dint = ni[ei] - ni[ej]
    gmax = np.maximum(nj[ei], nj[ej])
    w_pq = (np.exp(-(dint * dint) / (2.0 * params.sigma_c ** 2))
            * np.exp(-(gmax * gmax) / (2.0 * params.sigma_e ** 2)))
    n = H * W
    lam = params.lambda_r
    deg = np.zeros(n)
    np.add.at(deg, ei, w_pq)
    np.add.at(deg, ej, w_pq)
    A = (sparse.diags(w_d + lam * deg)
         - lam * sparse.coo_matrix((np.concatenate([w_pq, w_pq]),
                                    (np.concatenate([ei, ej]),
                                     np.concatenate([ej, ei]))),
                                   shape=(n, n)).tocsr())
    b = w_d * src.ravel()
    x0 = src.ravel().copy()
    # Jacobi preconditioner: anchored and fill-only rows differ by orders
    # of magnitude, and unpreconditioned CG stalls on the weak rows
    precond = sparse.diags(1.0 / A.diagonal())
    try:
        x, info = cg(A, b, x0=x0, M=precond, rtol=params.wls_tol, atol=0.0)
    except TypeError:
        x, info = cg(A, b, x0=x0, M=precond, tol=params.wls_tol, atol=0.0)
    if info != 0:
        raise RuntimeError(f"refinement solve did not converge (info={info})")
    return DisparityMap(x.reshape(H, W).astype(np.float32),
                        np.ones((H, W), dtype=bool))


def complete_views_disparity(hlf, fused_central, params=None, verbose=False):
    """Refined disparity for every view, seeded by the central estimate.

    The central view keeps the fused estimate as its merged source (the
    multiview estimator outranks two-view re-matching there); all other
    views go through warp, pairwise sweep, and refinement.
    """
    params = params or Params()
    s0, t0 = hlf.central
    priors = {}
    for s in range(hlf.grid_rows):
        for t in range(hlf.grid_cols):
            priors[(s, t)] = warp_disparity(fused_central, (s - s0, t - t0))
    if verbose:
        print("pairwise sweep over adjacent views", flush=True)
    merged = pairwise_sweep(hlf, priors, params, verbose=verbose)
    merged[(s0, t0)] = fused_central
    refined = {}
    for key, m in merged.items():
        refined[key] = refine_disparity(m, priors[key],
                                        hlf.view(*key).data, params)
        if verbose:
            print(f"  refined view {key}", flush=True)
    return refined


# ---------------------------------------------------------------------------
# cube


@dataclass
class PlenopticCube:
    """Every view of the grid holding every spectral band.

    layers/confidence: dict (s, t) -> dict band_nm -> (H, W) float32.
    The native band of each view keeps confidence 1 everywhere; propagated
    pixels carry 0.9 per hop; hole-filled pixels carry 0.
    """
    grid_rows: int
    grid_cols: int
    central: tuple
    bands: tuple
    native: dict
    disparity_range: tuple
    layers: dict = field(default_factory=dict)
    confidence: dict = field(default_factory=dict)

    @property
    def views(self):
        return [(s, t) for s in range(self.grid_rows)
                for t in range(self.grid_cols)]

    def layer(self, s, t, band):
        return self.layers[(s, t)][band]

    def layer_count(self):
        return sum(len(v) for v in self.layers.values())


def _gather_bilinear(img, qy, qx):
    H, W = img.shape
    iy = np.floor(qy).astype(np.int64)
    ix = np.floor(qx).astype(np.int64)
    fy, fx = qy - iy, qx - ix
    iy0 = np.clip(iy, 0, H - 1)
    ix0 = np.clip(ix, 0, W - 1)
    iy1 = np.clip(iy + 1, 0, H - 1)
    ix1 = np.clip(ix + 1, 0, W - 1)
    return (img[iy0, ix0] * (1 - fy) * (1 - fx)
            + img[iy0, ix1] * (1 - fy) * fx
            + img[iy1, ix0] * fy * (1 - fx)
            + img[iy1, ix1] * fy * fx)


def complete_cube(hlf, refined, params=None, verbose=False):
    """Propagate every band to every view using per-view disparities.

    refined: dict (s, t) -> fully valid DisparityMap.  Sweeps move layers
    one grid hop at a time: view A fills its missing band pixels by looking
    up q = p + f_A(p) * (B - A) in neighbor B, accepting only where B's
    disparity agrees within the depth tolerance and where B's layer is
    fully defined around q.  Valid sets only ever grow; leftover holes get
    the nearest valid value at confidence 0.
    """
    params = params or Params()
    rows, cols = hlf.grid_rows, hlf.grid_cols
    for key in [(s, t) for s in range(rows) for t in range(cols)]:
        if key not in refined or not refined[key].valid.all():
            raise ValueError("complete_cube needs a fully valid disparity "
                             f"for view {key}")
    labels = hlf.labels()
    step = float(labels[1] - labels[0]) if len(labels) > 1 else 1.0
    tol = params.ztest_tol_steps * step
    H, W = hlf.shape
    cube = PlenopticCube(grid_rows=rows, grid_cols=cols, central=hlf.central,
                         bands=tuple(hlf.bands), native={},
                         disparity_range=tuple(hlf.disparity_range))
    valid = {}
    for key in cube.views:
        view = hlf.view(*key)
        band = view.center_nm
        cube.native[key] = band
        cube.layers[key] = {band: np.asarray(view.data, dtype=np.float32)}
        cube.confidence[key] = {band: np.ones((H, W), dtype=np.float32)}
        valid[key] = {band: np.ones((H, W), dtype=bool)}

    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    max_sweeps = 2 * (rows + cols)
    for sweep in range(max_sweeps):
        gained = 0
        for a in cube.views:
            fa = refined[a].values.astype(np.float64)
            for b in grid_neighbors(rows, cols, *a):
                ds, dt = b[0] - a[0], b[1] - a[1]
                qy = yy + fa * ds
                qx = xx + fa * dt
                inb = (qy >= 0) & (qy <= H - 1) & (qx >= 0) & (qx <= W - 1)
                qyc, qxc = np.clip(qy, 0, H - 1), np.clip(qx, 0, W - 1)
                zb = refined[b].values[np.rint(qyc).astype(np.int64),
                                       np.rint(qxc).astype(np.int64)]
                zok = inb & (np.abs(zb - fa) <= tol)
                for band in list(cube.layers[b].keys()):
                    have = valid[a].get(band)
                    if have is not None and have.all():
                        continue
                    cover = _gather_bilinear(
                        valid[b][band].astype(np.float32), qyc, qxc)
                    fill = zok & (cover >= 0.999)
                    if have is None:
                        cube.layers[a][band] = np.zeros((H, W), np.float32)
                        cube.confidence[a][band] = np.zeros((H, W),
                                                            np.float32)
                        valid[a][band] = np.zeros((H, W), dtype=bool)
                        have = valid[a][band]
                    fill &= ~have
                    if not fill.any():
                        continue
                    vals = _gather_bilinear(cube.layers[b][band], qyc, qxc)
                    conf = _gather_bilinear(cube.confidence[b][band],
                                            qyc, qxc) * params.conf_decay
                    cube.layers[a][band][fill] = vals[fill]
                    cube.confidence[a][band][fill] = conf[fill]
                    have[fill] = True
                    gained += int(fill.sum())
        if verbose:
            print(f"  cube sweep {sweep + 1}: gained {gained} px", flush=True)
        if gained == 0:
            break

    # nearest-valid fill for anything no warp could reach
    for a in cube.views:
        for band in cube.bands:
            if band not in cube.layers[a]:
                cube.layers[a][band] = np.zeros((H, W), np.float32)
                cube.confidence[a][band] = np.zeros((H, W), np.float32)
                valid[a][band] = np.zeros((H, W), dtype=bool)
            holes = ~valid[a][band]
            if holes.any():
                if not (~holes).any():
                    raise ValueError(f"band {band} never reached view {a}")
                iy, ix = ndimage.distance_transform_edt(
                    holes, return_indices=True)[1]
                layer = cube.layers[a][band]
                layer[holes] = layer[iy[holes], ix[holes]]
                cube.confidence[a][band][holes] = 0.0
    return cube


def run_completion(hlf, fused_central, params=None, verbose=False):
    """Full pipeline from a central disparity to a completed cube."""
    refined = complete_views_disparity(hlf, fused_central, params,
                                       verbose=verbose)
    cube = complete_cube(hlf, refined, params, verbose=verbose)
    return cube, refined


# ---------------------------------------------------------------------------
# cube io


def _band_name(band):
    return f"{band:g}"


def save_cube(cube, directory):
    """Write the cube as view_s_t/band_<nm>.png 16-bit + confidence PNGs."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "grid_rows": cube.grid_rows, "grid_cols": cube.grid_cols,
        "central": list(cube.central),
        "bands": [float(b) for b in cube.bands],
        "disparity_range": list(cube.disparity_range),
        "native": {f"{s}_{t}": float(b)
                   for (s, t), b in cube.native.items()},
    }
    for (s, t) in cube.views:
        vdir = os.path.join(directory, f"view_{s}_{t}")
        os.makedirs(vdir, exist_ok=True)
        for band in cube.bands:
            name = _band_name(band)
            write_image(os.path.join(vdir, f"band_{name}.png"),
                        np.clip(cube.layers[(s, t)][band], 0, 1), depth=16)
            write_image(os.path.join(vdir, f"conf_{name}.png"),
                        cube.confidence[(s, t)][band], depth=8)
    with open(os.path.join(directory, "cube.json"), "w") as f:
        json.dump(manifest, f, indent=1)


def load_cube(directory):
    with open(os.path.join(directory, "cube.json")) as f:
        manifest = json.load(f)
    cube = PlenopticCube(
        grid_rows=manifest["grid_rows"], grid_cols=manifest["grid_cols"],
        central=tuple(manifest["central"]),
        bands=tuple(manifest["bands"]),
        native={tuple(int(x) for x in k.split("_")): v
                for k, v in manifest["native"].items()},
        disparity_range=tuple(manifest["disparity_range"]))
    for (s, t) in cube.views:
        vdir = os.path.join(directory, f"view_{s}_{t}")
        cube.layers[(s, t)] = {}
        cube.confidence[(s, t)] = {}
        for band in cube.bands:
            name = _band_name(band)
            cube.layers[(s, t)][band] = read_image(
                os.path.join(vdir, f"band_{name}.png")).astype(np.float32)
            cube.confidence[(s, t)][band] = read_image(
                os.path.join(vdir, f"conf_{name}.png")).astype(np.float32)
    return cube
