"""Numba kernels for windowed cross-correlation over descriptor stacks.

The matcher needs, for one relative shift between two views, a per-pixel
score built from 612 element-wise windowed NCCs.  Doing that with numpy
stacks thrashes memory; here each element is handled in one fused pass:
shift, integral images, window statistics, and accumulation.

Elements are split into fixed chunks processed in parallel; each chunk owns
its accumulator slice and runs sequentially inside, so results are
bit-identical for any thread count.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _integrals(A_e, Bs, I_a, I_aa, I_b, I_bb, I_ab, y0, y1, x0, x1):
    """Five integral images over the valid rect in one pass.

    Integral arrays are indexed relative to the rect: I[i+1, j+1] holds the
    sum over rect rows y0..y0+i, cols x0..x0+j.
    """
    hh = y1 - y0 + 1
    ww = x1 - x0 + 1
    for j in range(ww + 1):
        I_a[0, j] = 0.0
        I_aa[0, j] = 0.0
        I_b[0, j] = 0.0
        I_bb[0, j] = 0.0
        I_ab[0, j] = 0.0
    for i in range(hh):
        ra = 0.0
        raa = 0.0
        rb = 0.0
        rbb = 0.0
        rab = 0.0
        I_a[i + 1, 0] = 0.0
        I_aa[i + 1, 0] = 0.0
        I_b[i + 1, 0] = 0.0
        I_bb[i + 1, 0] = 0.0
        I_ab[i + 1, 0] = 0.0
        for j in range(ww):
            a = np.float64(A_e[y0 + i, x0 + j])
            b = Bs[i, j]
            ra += a
            raa += a * a
            rb += b
            rbb += b * b
            rab += a * b
            I_a[i + 1, j + 1] = I_a[i, j + 1] + ra
            I_aa[i + 1, j + 1] = I_aa[i, j + 1] + raa
            I_b[i + 1, j + 1] = I_b[i, j + 1] + rb
            I_bb[i + 1, j + 1] = I_bb[i, j + 1] + rbb
            I_ab[i + 1, j + 1] = I_ab[i, j + 1] + rab


@njit(cache=True, parallel=True)
def bwncc_accumulate(A, B, active, dy, dx, y0, y1, x0, x1, r, var_eps,
                     nchunks):
    """Accumulate forward/backward NCC sums and weight masses per pixel.

    A, B: (E, H, W) float32 descriptor stacks (B is sampled at +(dy, dx)).
    active: element indices with any mass in either stack.
    y0..x1: inclusive rect of center pixels whose shifted position stays
    inside frame.  Returns (nchunks, 4, H, W) float64 with per-chunk partial
    sums of [xi*wa, xi*wb, wa, wb].
    """
    E, H, W = A.shape
    n_act = active.shape[0]
    acc = np.zeros((nchunks, 4, H, W), dtype=np.float64)
    hh = y1 - y0 + 1
    ww = x1 - x0 + 1
    iy = int(np.floor(dy))
    ix = int(np.floor(dx))
    fy = dy - iy
    fx = dx - ix
    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx
    for c in prange(nchunks):
        e_lo = c * n_act // nchunks
        e_hi = (c + 1) * n_act // nchunks
        if e_hi <= e_lo:
            continue
        Bs = np.empty((hh, ww), dtype=np.float64)
        I_a = np.empty((hh + 1, ww + 1), dtype=np.float64)
        I_aa = np.empty((hh + 1, ww + 1), dtype=np.float64)
        I_b = np.empty((hh + 1, ww + 1), dtype=np.float64)
        I_bb = np.empty((hh + 1, ww + 1), dtype=np.float64)
        I_ab = np.empty((hh + 1, ww + 1), dtype=np.float64)
        for idx in range(e_lo, e_hi):
            e = active[idx]
            A_e = A[e]
            B_e = B[e]
            # resample B at +delta on the rect (bilinear; integer shifts
            # reduce to a copy because the fractional weights vanish)
            for i in range(hh):
                ys = y0 + i + iy
                ys1 = ys + 1 if ys + 1 < H else H - 1
                if ys < 0:
                    ys = 0
                for j in range(ww):
                    xs = x0 + j + ix
                    xs1 = xs + 1 if xs + 1 < W else W - 1
                    if xs < 0:
                        xs = 0
                    Bs[i, j] = (w00 * np.float64(B_e[ys, xs])
                                + w01 * np.float64(B_e[ys, xs1])
                                + w10 * np.float64(B_e[ys1, xs])
                                + w11 * np.float64(B_e[ys1, xs1]))
            _integrals(A_e, Bs, I_a, I_aa, I_b, I_bb, I_ab, y0, y1, x0, x1)
            if I_a[hh, ww] == 0.0 and I_b[hh, ww] == 0.0:
                continue  # element absent around every pixel: no mass, xi*0
            for y in range(y0, y1 + 1):
                ylo = y - r
                if ylo < y0:
                    ylo = y0
                yhi = y + r
                if yhi > y1:
                    yhi = y1
                i0 = ylo - y0
                i1 = yhi - y0 + 1
                for x in range(x0, x1 + 1):
                    xlo = x - r
                    if xlo < x0:
                        xlo = x0
                    xhi = x + r
                    if xhi > x1:
                        xhi = x1
                    j0 = xlo - x0
                    j1 = xhi - x0 + 1
                    n = np.float64((i1 - i0) * (j1 - j0))
                    sa = I_a[i1, j1] - I_a[i0, j1] - I_a[i1, j0] + I_a[i0, j0]
                    sb = I_b[i1, j1] - I_b[i0, j1] - I_b[i1, j0] + I_b[i0, j0]
                    saa = (I_aa[i1, j1] - I_aa[i0, j1] - I_aa[i1, j0]
                           + I_aa[i0, j0])
                    sbb = (I_bb[i1, j1] - I_bb[i0, j1] - I_bb[i1, j0]
                           + I_bb[i0, j0])
                    sab = (I_ab[i1, j1] - I_ab[i0, j1] - I_ab[i1, j0]
                           + I_ab[i0, j0])
                    ma = sa / n
                    mb = sb / n
                    va = saa / n - ma * ma
                    vb = sbb / n - mb * mb
                    if va <= var_eps:
                        xi = 1.0 if vb <= var_eps else 0.0
                    elif vb <= var_eps:
                        xi = 0.0
                    else:
                        xi = (sab / n - ma * mb) / np.sqrt(va * vb)
                        if xi > 1.0:
                            xi = 1.0
                        elif xi < -1.0:
                            xi = -1.0
                    acc[c, 0, y, x] += xi * ma
                    acc[c, 1, y, x] += xi * mb
                    acc[c, 2, y, x] += ma
                    acc[c, 3, y, x] += mb
    return acc
