"""Property-suite bodies shared by the unit tests and the acceptance run.

Each function raises AssertionError on violation and returns a short
summary string on success, so the acceptance harness can both gate on
them and report what was covered.
"""

import numpy as np

from hlfstereo import bench, descriptor, metric, mrf, stereo
from hlfstereo.config import Params


def descriptor_scale_invariance(seeds=(0, 1, 2), tol=1e-9):
    """Descriptors are unchanged by global intensity scaling (float64 path)."""
    params = Params()
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        img = rng.uniform(0.05, 1.0, size=(20, 22))
        scale = float(rng.uniform(0.2, 5.0))
        feats_a = descriptor.preprocess(img, params)
        feats_b = descriptor.preprocess(img * scale, params)
        for _ in range(6):
            p = (int(rng.integers(0, 20)), int(rng.integers(0, 22)))
            da = descriptor.describe(feats_a, p, params)
            db = descriptor.describe(feats_b, p, params)
            worst = max(worst, float(np.max(np.abs(da - db))))
    assert worst <= tol, f"scale invariance violated: {worst:.3e} > {tol:g}"
    return f"descriptor scale invariance, worst dev {worst:.2e}"


def histogram_unit_mass(trials=200, seed=0):
    """Non-empty overlap histograms sum to 1; empty input stays zero."""
    params = Params()
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        n = int(rng.integers(1, 40))
        vals = rng.uniform(0.0, 1.0, n)
        w = rng.uniform(0.0, 2.0, n)
        h = descriptor.overlap_histogram(vals, w, params)
        if w.sum() > 0:
            assert abs(h.sum() - 1.0) < 1e-12, "histogram mass != 1"
        assert np.all(h >= 0)
    h = descriptor.overlap_histogram(np.zeros(5), np.zeros(5), params)
    assert h.sum() == 0.0, "all-zero weights must give a zero histogram"
    return f"histogram unit mass over {trials} random draws"


def membership_vs_bruteforce(count=1000, seed=0):
    """bin_membership agrees with explicit per-bin range enumeration."""
    params = Params()
    K = descriptor.bin_count(params)
    s = params.bin_width
    c = (1.0 - params.bin_overlap) * s
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.0, 1.0, count)
    # exercise the edges too
    vals[:8] = [0.0, 1.0, s, c, c * (K - 1), 1.0 - 1e-12, s - 1e-12, c - 1e-12]
    k0, k1 = descriptor.bin_membership(vals, params)
    for i, v in enumerate(vals):
        expect = set()
        for k in range(K):
            start = k * c
            stop = start + s
            if k == K - 1:
                if start <= v <= max(stop, 1.0):
                    expect.add(k)
            elif start <= v < stop:
                expect.add(k)
        got = {int(k0[i])} | ({int(k1[i])} if k1[i] >= 0 else set())
        assert got == expect, f"value {v}: bins {got} != enumerated {expect}"
        assert 1 <= len(expect) <= 2
    return f"bin membership vs enumeration on {count} values"


def bwncc_properties(seeds=(0, 1), tol=1e-12):
    """BWNCC is symmetric, bounded to [-1, 1], and 1 on identical fields."""
    params = Params()
    for seed in seeds:
        rng = np.random.default_rng(seed)
        img_a = rng.uniform(0.0, 1.0, (15, 15))
        img_b = rng.uniform(0.0, 1.0, (15, 15))
        fa = descriptor.describe_field(img_a, params)
        fb = descriptor.describe_field(img_b, params)
        for _ in range(5):
            p = (int(rng.integers(4, 11)), int(rng.integers(4, 11)))
            q = (int(rng.integers(4, 11)), int(rng.integers(4, 11)))
            fwd = metric.bwncc(fa, fb, p, q, params)
            bwd = metric.bwncc(fb, fa, q, p, params)
            assert abs(fwd - bwd) <= tol, "bwncc not symmetric"
            assert -1.0 - 1e-9 <= fwd <= 1.0 + 1e-9, "bwncc out of bounds"
            ident = metric.bwncc(fa, fa, p, p, params)
            assert abs(ident - 1.0) <= 1e-9, f"self-score {ident} != 1"
    return "bwncc symmetry, bounds, identity"


def maxflow_vs_bruteforce(graphs=100, seed=0):
    """scipy-backed max flow equals exhaustive min cut on tiny graphs."""
    import itertools
    rng = np.random.default_rng(seed)
    for g in range(graphs):
        n = int(rng.integers(2, 11))
        src, snk = 0, n - 1
        if n == 2:
            src, snk = 0, 1
        net = mrf.FlowNetwork(n, src, snk)
        arcs = []
        for u in range(n):
            for v in range(n):
                if u != v and rng.random() < 0.45:
                    # multiples of 1/1024 survive the solver's fixed-point
                    # capacity representation exactly
                    cap = float(rng.integers(0, 4097)) / 1024.0
                    net.add_arc(u, v, cap)
                    arcs.append((u, v, cap))
        value, side = mrf.max_flow(net)
        best = np.inf
        others = [i for i in range(n) if i not in (src, snk)]
        for r in range(len(others) + 1):
            for combo in itertools.combinations(others, r):
                s_side = {src} | set(combo)
                cut = sum(c for (u, v, c) in arcs
                          if u in s_side and v not in s_side)
                best = min(best, cut)
        assert abs(value - best) < 1e-6, \
            f"graph {g}: flow {value} != min cut {best}"
        cut_of_side = sum(c for (u, v, c) in arcs
                          if side[u] and not side[v])
        assert abs(cut_of_side - best) < 1e-6, "returned partition not minimal"
    return f"max flow == exhaustive min cut on {graphs} graphs"


def expansion_monotone(problems=20, seed=0):
    """Alpha-expansion energy never increases and ends <= initial energy."""
    rng = np.random.default_rng(seed)
    for _ in range(problems):
        h, w, L = int(rng.integers(2, 6)), int(rng.integers(2, 6)), \
            int(rng.integers(2, 5))
        unary = rng.uniform(0, 3, (h * w, L))
        ei, ej = mrf.grid_edges(h, w)
        wts = rng.uniform(0, 1.2, ei.size)
        prob = mrf.MrfProblem(unary, ei, ej, wts, tau=2)
        init = rng.integers(0, L, h * w)
        e0 = mrf.mrf_energy(prob, init)
        labels = mrf.alpha_expansion(prob, init=init.copy())
        e1 = mrf.mrf_energy(prob, labels)
        assert e1 <= e0 + 1e-9, f"energy rose: {e0} -> {e1}"
    return f"expansion energy monotone on {problems} random problems"


def argmin_scale_invariance(scene=None, scales=(0.5, 2.0, 4.0)):
    """Per-pixel argmins of both cue volumes survive global scaling.

    Power-of-two scales keep the float32 views exact, so the volumes are
    reproduced bit for bit; the argmin comparison is then exact.
    """
    scene = scene or bench.two_plane_scene(
        seed=11, height=40, width=44, grid=(3, 3), d_bg=1.0, d_fg=2.5,
        disparity_range=(0.0, 3.0), label_count=7)
    params = Params()
    hlf = scene.hlf
    cvol, _ = stereo.correspondence_volume(hlf, params)
    dvol, _ = stereo.defocus_volume(hlf, scene.camera, params)
    fc, fd = np.argmin(cvol, axis=2), np.argmin(dvol, axis=2)
    for scale in scales:
        import copy
        scaled = copy.deepcopy(hlf)
        for key, si in scaled.views.items():
            si.data = (si.data * np.float32(scale)).astype(np.float32)
        cs, _ = stereo.correspondence_volume(scaled, params)
        ds, _ = stereo.defocus_volume(scaled, scene.camera, params)
        assert np.array_equal(np.argmin(cs, axis=2), fc), \
            f"correspondence argmin changed at scale {scale}"
        assert np.array_equal(np.argmin(ds, axis=2), fd), \
            f"defocus argmin changed at scale {scale}"
    return f"cue argmins invariant under scales {scales}"


ALL_PROPERTIES = (
    descriptor_scale_invariance,
    histogram_unit_mass,
    membership_vs_bruteforce,
    bwncc_properties,
    maxflow_vs_bruteforce,
    expansion_monotone,
    argmin_scale_invariance,
)
