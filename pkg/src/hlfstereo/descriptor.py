"""Spectral-invariant pixel descriptor.

Narrow-band views of one scene differ by a smooth per-band gain, so raw
intensities do not match across views.  Dividing each image by its mean
cancels global gain, and local gradient statistics survive the remaining
smooth variation.  Each pixel gets a pyramid of overlapping-bin histograms:

  h1  gradient-magnitude histogram        (spatial Gaussian weight)
  h2  gradient-direction histogram        (spatial Gaussian weight)
  h3  direction histogram, magnitude-weighted

computed over square windows of widths 3, 5, 9 and blended per level with
weights that favor h1/h2 on flat pixels and the magnitude-weighted h3 near
edges.  68 bins per histogram, 3 kinds, 3 levels: 612 elements total.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .config import Params


@dataclass
class ImageFeatures:
    """Normalized image and gradient maps shared by all descriptor levels."""

    norm: np.ndarray    # I / mean(I), float64
    mag: np.ndarray     # gradient magnitude, percentile-normalized to [0, 1]
    theta: np.ndarray   # gradient direction folded to [0, pi)


def normalize(image):
    """Divide by the image mean; an all-zero image stays all-zero."""
    img = np.asarray(image, dtype=np.float64)
    if np.any(img < 0):
        raise ValueError("intensities must be nonnegative")
    m = img.mean()
    if m == 0:
        return np.zeros_like(img)
    return img / m


def gradients(img):
    """Central-difference gradients (one-sided at borders).

    Returns (gx, gy): gx along columns, gy along rows.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 2:
        raise ValueError("need a 2D image with at least 2 pixels per axis")
    gx = np.empty_like(img)
    gy = np.empty_like(img)
    gx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) / 2.0
    gx[:, 0] = img[:, 1] - img[:, 0]
    gx[:, -1] = img[:, -1] - img[:, -2]
    gy[1:-1, :] = (img[2:, :] - img[:-2, :]) / 2.0
    gy[0, :] = img[1, :] - img[0, :]
    gy[-1, :] = img[-1, :] - img[-2, :]
    return gx, gy


def preprocess(image, params=None):
    """Normalize, differentiate, and fold directions for one image."""
    params = params or Params()
    norm = normalize(image)
    gx, gy = gradients(norm)
    raw_mag = np.hypot(gx, gy)
    ref = np.percentile(raw_mag, params.mag_percentile)
    if ref > 0:
        mag = np.clip(raw_mag / ref, 0.0, 1.0)
    else:
        mag = np.zeros_like(raw_mag)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    theta[mag == 0] = 0.0
    return ImageFeatures(norm=norm, mag=mag, theta=theta)


def bin_count(params=None):
    """Number of overlapping bins covering [0, 1]."""
    params = params or Params()
    s = params.bin_width
    c = (1.0 - params.bin_overlap) * s
    return int(math.ceil((1.0 - s) / c))


def bin_membership(values, params=None):
    """Bins containing each value: (k0, k1) arrays, k1 = -1 if only one bin.

    Bin k spans [k*(1-o)*s, k*(1-o)*s + s); the last bin is extended to
    include 1.0.  Every value in [0, 1] lands in one or two bins.
    """
    params = params or Params()
    s = params.bin_width
    c = (1.0 - params.bin_overlap) * s
    K = bin_count(params)
    q = np.asarray(values, dtype=np.float64)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("histogram values must lie in [0, 1]")
    hi = np.minimum(np.floor(q / c).astype(np.int64), K - 1)
    lo = hi - 1

    def member(k, q):
        start = k * c
        inside = (k >= 0) & (start <= q)
        upper = np.where(k == K - 1, np.maximum(start + s, 1.0 + 1e-300),
                         start + s)
        # last bin is right-closed at 1.0
        return inside & ((q < upper) | ((k == K - 1) & (q <= 1.0)))

    hi_ok = member(hi, q)
    lo_ok = member(lo, q)
    k0 = np.where(hi_ok, hi, lo)
    k1 = np.where(hi_ok & lo_ok, lo, -1)
    if not np.all(hi_ok | lo_ok):
        raise AssertionError("value escaped the bin cover")
    return k0, k1


def gaussian_window(width, sigma):
    """Square spatial weight exp(-(dy^2+dx^2) / (2 sigma^2)), center 1."""
    r = (width - 1) // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    one_d = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return np.outer(one_d, one_d)


def overlap_histogram(values, weights, params=None):
    """Reference overlapping-bin histogram of flat value/weight arrays.

    Accumulates each value's weight into every bin containing it, then
    normalizes to unit sum; an all-zero accumulation stays all-zero.
    """
    params = params or Params()
    K = bin_count(params)
    hist = np.zeros(K, dtype=np.float64)
    if len(values) == 0:
        return hist
    k0, k1 = bin_membership(values, params)
    w = np.asarray(weights, dtype=np.float64)
    np.add.at(hist, k0, w)
    extra = k1 >= 0
    np.add.at(hist, k1[extra], w[extra])
    total = hist.sum()
    if total > 0:
        hist /= total
    return hist


def level_weights(mag_p, params=None):
    """Histogram blend weights (a1, a2, a3) from the center magnitude."""
    params = params or Params()
    a1 = params.blend_beta * np.exp(-(mag_p * mag_p) / params.blend_sigma)
    return a1, a1, 1.0 - 2.0 * a1


def descriptor_length(params=None):
    params = params or Params()
    return 3 * bin_count(params) * len(params.level_widths)


def describe(image, p, params=None):
    """Reference pointwise descriptor at pixel p = (row, col), float64.

    `image` may be a raw 2D array or a preprocessed ImageFeatures bundle.
    """
    params = params or Params()
    feats = image if isinstance(image, ImageFeatures) else preprocess(image, params)
    H, W = feats.mag.shape
    y, x = p
    if not (0 <= y < H and 0 <= x < W):
        raise ValueError("pixel outside image")
    K = bin_count(params)
    out = np.zeros(descriptor_length(params), dtype=np.float64)
    a1, a2, a3 = level_weights(feats.mag[y, x], params)
    pos = 0
    for w in params.level_widths:
        r = (w - 1) // 2
        g = gaussian_window(w, params.sigma_g_factor * w)
        ys = slice(max(0, y - r), min(H, y + r + 1))
        xs = slice(max(0, x - r), min(W, x + r + 1))
        gwin = g[ys.start - (y - r):ys.stop - (y - r),
                 xs.start - (x - r):xs.stop - (x - r)]
        m = feats.mag[ys, xs].ravel()
        th = (feats.theta[ys, xs] / np.pi).ravel()
        gw = gwin.ravel()
        h1 = overlap_histogram(m, gw, params)
        h2 = overlap_histogram(th, gw, params)
        h3 = overlap_histogram(th, gw * m, params)
        out[pos:pos + K] = a1 * h1
        out[pos + K:pos + 2 * K] = a2 * h2
        out[pos + 2 * K:pos + 3 * K] = a3 * h3
        pos += 3 * K
    return out


def _binned_stack(q, extra_weight, params):
    """(K, H, W) float32 stack: per-bin membership indicator times weight."""
    K = bin_count(params)
    H, W = q.shape
    k0, k1 = bin_membership(q.ravel(), params)
    stack = np.zeros((K, H * W), dtype=np.float32)
    cols = np.arange(H * W)
    w = (extra_weight.ravel().astype(np.float32) if extra_weight is not None
         else np.ones(H * W, dtype=np.float32))
    stack[k0, cols] = w
    extra = k1 >= 0
    stack[k1[extra], cols[extra]] = w[extra]
    return stack.reshape(K, H, W)


def describe_field(image, params=None):
    """Dense descriptor field, shape (H, W, 612), float32.

    Histograms become separable Gaussian-weighted sums of per-bin indicator
    maps; zero padding at the borders reproduces window clipping because
    outside pixels simply contribute no mass.
    """
    params = params or Params()
    feats = image if isinstance(image, ImageFeatures) else preprocess(image, params)
    H, W = feats.mag.shape
    K = bin_count(params)
    stacks = {
        "m": _binned_stack(feats.mag, None, params),
        "t": _binned_stack(feats.theta / np.pi, None, params),
        "tm": _binned_stack(feats.theta / np.pi, feats.mag, params),
    }
    a1, a2, a3 = level_weights(feats.mag, params)
    weights = (a1.astype(np.float32), a2.astype(np.float32),
               a3.astype(np.float32))
    field = np.empty((H, W, descriptor_length(params)), dtype=np.float32)
    pos = 0
    for w in params.level_widths:
        r = (w - 1) // 2
        d = np.arange(-r, r + 1, dtype=np.float64)
        kern = np.exp(-(d * d) / (2.0 * (params.sigma_g_factor * w) ** 2))
        kern = kern.astype(np.float32)
        for kind, alpha in zip(("m", "t", "tm"), weights):
            acc = convolve1d(stacks[kind], kern, axis=1, mode="constant")
            acc = convolve1d(acc, kern, axis=2, mode="constant")
            total = acc.sum(axis=0)
            scale = np.where(total > 0, alpha / np.where(total > 0, total, 1.0),
                             0.0).astype(np.float32)
            field[:, :, pos:pos + K] = np.transpose(acc * scale, (1, 2, 0))
            pos += K
    return field


def dump_descriptor_field(path, field):
    """Debug dump: uint32 LE header (width, height, K), then flat float32."""
    H, W, K = field.shape
    with open(path, "wb") as f:
        f.write(np.array([W, H, K], dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(field, dtype="<f4").tobytes())


def load_descriptor_field(path):
    with open(path, "rb") as f:
        W, H, K = np.frombuffer(f.read(12), dtype="<u4")
        data = np.frombuffer(f.read(int(W) * int(H) * int(K) * 4), dtype="<f4")
    return data.reshape(int(H), int(W), int(K)).copy()
