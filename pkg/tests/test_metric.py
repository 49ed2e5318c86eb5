"""Windowed bidirectional NCC metric and its dense/batched equivalence."""

import numpy as np
import pytest

import helpers
from hlfstereo import descriptor, metric
from hlfstereo.config import Params


def test_ncc_basic_cases():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    assert metric.ncc(a, a) == pytest.approx(1.0)
    assert metric.ncc(a, -a) == pytest.approx(-1.0)
    assert metric.ncc(a, 3.5 * a + 2.0) == pytest.approx(1.0)
    assert metric.ncc(np.ones(4), np.ones(4)) == 1.0        # both constant
    assert metric.ncc(np.ones(4), a) == 0.0                 # one constant
    with pytest.raises(ValueError):
        metric.ncc(a, a[:3])


def test_shift_rect_covers_exactly_the_sampleable_pixels():
    assert metric.shift_rect((5, 6), 0.0, 0.0) == (0, 4, 0, 5)
    assert metric.shift_rect((5, 6), 1.5, -2.0) == (0, 2, 2, 5)
    assert metric.shift_rect((5, 6), 10.0, 0.0) is None
    y0, y1, x0, x1 = metric.shift_rect((5, 6), -0.5, 0.5)
    assert (y0, y1, x0, x1) == (1, 4, 0, 4)


def test_bwncc_symmetry_bounds_identity():
    print(helpers.bwncc_properties())


def test_bwncc_clamp_to_cost(params):
    assert metric.clamp_score(0.5, params) == pytest.approx(0.5)
    assert metric.clamp_score(-0.3, params) == pytest.approx(params.clamp_floor)
    assert metric.clamp_score(2.0, params) == pytest.approx(1.0)


def test_bwncc_map_matches_pointwise(params, rng):
    r = rng(10)
    img_a = r.uniform(0, 1, (14, 16))
    img_b = r.uniform(0, 1, (14, 16))
    fa = descriptor.describe_field(img_a, params)
    fb = descriptor.describe_field(img_b, params)
    for shift in [(0.0, 0.0), (0.0, -1.5), (1.0, 0.5)]:
        smap, valid = metric.bwncc_map(fa, fb, shift, params)
        ys, xs = np.nonzero(valid)
        for _ in range(8):
            i = int(r.integers(0, ys.size))
            y, x = int(ys[i]), int(xs[i])
            ref = metric.bwncc(fa, fb, (y, x), (y + shift[0], x + shift[1]),
                               params)
            got = smap[y, x]
            assert abs(got - ref) <= 2e-5, \
                f"shift {shift} pixel ({y},{x}): {got} vs {ref}"
        assert np.all(smap[~valid] == 0)


def test_bwncc_identical_fields_score_one(params, rng):
    img = rng(11).uniform(0, 1, (12, 12))
    f = descriptor.describe_field(img, params)
    smap, valid = metric.bwncc_map(f, f, (0.0, 0.0), params)
    assert valid.all()
    assert np.max(np.abs(smap - 1.0)) <= 1e-5


def test_bwncc_integer_vs_fractional_shift_consistency(params, rng):
    # a fractional shift of 0 must equal the integer path bit for bit
    img_a = rng(12).uniform(0, 1, (13, 15))
    img_b = rng(13).uniform(0, 1, (13, 15))
    fa = descriptor.describe_field(img_a, params)
    fb = descriptor.describe_field(img_b, params)
    s_int, v_int = metric.bwncc_map(fa, fb, (0, 1), params)
    s_frac, v_frac = metric.bwncc_map(fa, fb, (0.0, 1.0), params)
    assert np.array_equal(v_int, v_frac)
    assert np.array_equal(s_int, s_frac)


def test_active_elements_skips_dead_rows(params, rng):
    img = rng(14).uniform(0, 1, (10, 10))
    f = descriptor.describe_field(img, params)
    sa = metric.as_stack(f)
    active = metric.active_elements(sa, sa)
    assert active.dtype == np.int64
    dead = np.setdiff1d(np.arange(f.shape[2]), active)
    assert np.all(sa[dead] == 0)
    assert np.all(sa[active].reshape(active.size, -1).any(axis=1))
