"""Bidirectionally weighted NCC between descriptor fields.

Raw NCC of two descriptor windows treats all 612 elements alike, but most
carry no mass at a given pixel.  The score here correlates each element's
local window separately and averages the correlations twice, once weighted
by the reference window's mass profile and once by the target's; the
geometric mean of the two keeps the score symmetric and punishes one-sided
agreement.
"""

import math

import numpy as np

from . import _kernels
from .config import Params

N_CHUNKS = 32  # fixed work split: results identical for any thread count


def ncc(a, b, var_eps=1e-12):
    """Zero-mean NCC of two equal-size patches (>= 2 px).

    Both patches constant: 1.  Exactly one constant: 0.  Otherwise the
    normalized covariance clipped to [-1, 1].
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError("patch sizes differ")
    if a.size < 2:
        raise ValueError("patches need at least 2 pixels")
    ma, mb = a.mean(), b.mean()
    va = (a * a).mean() - ma * ma
    vb = (b * b).mean() - mb * mb
    if va <= var_eps and vb <= var_eps:
        return 1.0
    if va <= var_eps or vb <= var_eps:
        return 0.0
    cov = (a * b).mean() - ma * mb
    return float(np.clip(cov / math.sqrt(va * vb), -1.0, 1.0))


def shift_rect(shape, dy, dx):
    """Inclusive (y0, y1, x0, x1) of centers p with p + (dy, dx) sampleable.

    Returns None when no pixel survives the shift.
    """
    H, W = shape
    y0 = max(0, int(math.ceil(-dy)))
    y1 = min(H - 1, int(math.floor(H - 1 - dy)))
    x0 = max(0, int(math.ceil(-dx)))
    x1 = min(W - 1, int(math.floor(W - 1 - dx)))
    if y0 > y1 or x0 > x1:
        return None
    return y0, y1, x0, x1


def _bilinear(field, ys, xs):
    """Sample (H, W, E) field at float coords; caller guarantees in-range."""
    H, W = field.shape[:2]
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[:, None]
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    return ((1 - fy) * (1 - fx) * field[y0, x0]
            + (1 - fy) * fx * field[y0, x1]
            + fy * (1 - fx) * field[y1, x0]
            + fy * fx * field[y1, x1])


def bwncc(field_a, field_b, p, q, params=None):
    """Reference bidirectionally weighted NCC between pixels p and q.

    Fields are (H, W, E) as returned by describe_field.  q may be
    fractional; windows are clipped identically so both sides always use
    the same offsets.  Raises on an empty window.
    """
    params = params or Params()
    r = params.ncc_window // 2
    H, W = field_a.shape[:2]
    py, px = p
    qy, qx = q
    dy, dx = qy - py, qx - px
    offs = []
    for oy in range(-r, r + 1):
        for ox in range(-r, r + 1):
            yy, xx = py + oy, px + ox
            if not (0 <= yy < H and 0 <= xx < W):
                continue
            if not (0 <= yy + dy <= H - 1 and 0 <= xx + dx <= W - 1):
                continue
            offs.append((yy, xx))
    if not offs:
        raise ValueError("empty correlation window")
    ys = np.array([o[0] for o in offs], dtype=np.float64)
    xs = np.array([o[1] for o in offs], dtype=np.float64)
    a = field_a[ys.astype(np.int64), xs.astype(np.int64)].astype(np.float64)
    b = _bilinear(field_b.astype(np.float64), ys + dy, xs + dx)
    ma = a.mean(axis=0)
    mb = b.mean(axis=0)
    va = (a * a).mean(axis=0) - ma * ma
    vb = (b * b).mean(axis=0) - mb * mb
    cov = (a * b).mean(axis=0) - ma * mb
    eps = params.var_eps
    both = (va <= eps) & (vb <= eps)
    one = ((va <= eps) | (vb <= eps)) & ~both
    safe = np.where(va * vb > 0, va * vb, 1.0)
    xi = np.clip(cov / np.sqrt(safe), -1.0, 1.0)
    xi[both] = 1.0
    xi[one] = 0.0
    return _combine_sums(float((xi * ma).sum()), float((xi * mb).sum()),
                         float(ma.sum()), float(mb.sum()))


def _combine_sums(fwd_num, bwd_num, wa_sum, wb_sum):
    """Sign-preserving geometric mean of the two weighted correlation sums."""
    fwd = fwd_num / wa_sum if wa_sum > 0 else 0.0
    bwd = bwd_num / wb_sum if wb_sum > 0 else 0.0
    if fwd > 0 and bwd > 0:
        return math.sqrt(fwd * bwd)
    if fwd < 0 and bwd < 0:
        return -math.sqrt(fwd * bwd)
    return 0.0


def clamp_score(score, params=None):
    """Clamp into [floor, 1] so -log(score) is finite and nonnegative."""
    params = params or Params()
    return np.clip(score, params.clamp_floor, 1.0)


def as_stack(field):
    """(H, W, E) descriptor field -> contiguous (E, H, W) stack."""
    return np.ascontiguousarray(np.transpose(field, (2, 0, 1)),
                                dtype=np.float32)


def active_elements(stack_a, stack_b):
    """Indices of elements with any mass in either stack.

    Elements empty on both sides correlate as constant-vs-constant (score 1)
    with zero weight, so they contribute nothing and are skipped exactly.
    """
    pa = stack_a.reshape(stack_a.shape[0], -1).any(axis=1)
    pb = stack_b.reshape(stack_b.shape[0], -1).any(axis=1)
    return np.flatnonzero(pa | pb).astype(np.int64)


def score_map_stacks(stack_a, stack_b, shift, params=None, active=None):
    """Batched bwncc of stack_a against stack_b sampled at +shift.

    Returns (score, valid): score is float32 (H, W), valid marks centers
    whose shifted position stays inside the frame.  Outside valid the score
    is 0.
    """
    params = params or Params()
    E, H, W = stack_a.shape
    dy, dx = float(shift[0]), float(shift[1])
    score = np.zeros((H, W), dtype=np.float32)
    valid = np.zeros((H, W), dtype=bool)
    rect = shift_rect((H, W), dy, dx)
    if rect is None:
        return score, valid
    y0, y1, x0, x1 = rect
    if active is None:
        active = active_elements(stack_a, stack_b)
    if active.size == 0:
        valid[y0:y1 + 1, x0:x1 + 1] = True
        return score, valid
    acc = _kernels.bwncc_accumulate(
        stack_a, stack_b, active, dy, dx, y0, y1, x0, x1,
        params.ncc_window // 2, params.var_eps, N_CHUNKS)
    sums = acc.sum(axis=0)
    fwd_num, bwd_num, wa, wb = sums[0], sums[1], sums[2], sums[3]
    fwd = np.divide(fwd_num, wa, out=np.zeros_like(fwd_num), where=wa > 0)
    bwd = np.divide(bwd_num, wb, out=np.zeros_like(bwd_num), where=wb > 0)
    pos = (fwd > 0) & (bwd > 0)
    neg = (fwd < 0) & (bwd < 0)
    prod = np.sqrt(np.abs(fwd * bwd))
    out = np.where(pos, prod, np.where(neg, -prod, 0.0))
    valid[y0:y1 + 1, x0:x1 + 1] = True
    score[valid] = out[valid].astype(np.float32)
    return score, valid


def bwncc_map(field_a, field_b, shift, params=None):
    """Batched bwncc over (H, W, E) fields; see score_map_stacks."""
    return score_map_stacks(as_stack(field_a), as_stack(field_b), shift,
                            params=params)
