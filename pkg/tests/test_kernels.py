import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexheat.geometry import HalfSpace
from convexheat.kernels import (
    ball_h_factor,
    box_kernel,
    gauss_kernel,
    halfspace_kernel,
    halfspace_survival,
    interval_kernel,
    vdb_factor,
    vdb_lower,
)

times = st.floats(1e-3, 5.0)
unit = st.floats(1e-3, 1 - 1e-3)


def theta_interval(t, x, y):
    """Interval (0,1) kernel via Jacobi theta functions.

    The kernel is a difference of two O(t^-1/2) theta values, so far-apart
    points at small t need many digits.
    """
    with mp.workdps(120):
        q = mp.e ** (-mp.pi ** 2 * mp.mpf(t))
        v = (mp.jtheta(3, mp.pi * (mp.mpf(x) - y) / 2, q) - mp.jtheta(3, mp.pi * (mp.mpf(x) + y) / 2, q)) / 2
        return float(v)


# values computed once with theta_interval and frozen
THETA_VALUES = [
    ((0.02, 0.5, 0.5), 1.994696534812016026),
    ((0.1, 0.3, 0.7), 0.45299996334281632927),
    ((0.01, 0.1, 0.15), 2.058732517322058677),
    ((0.5, 0.2, 0.9), 0.0026126015661679789602),
    ((0.005, 0.02, 0.03), 0.44887220712712285778),
]


# -- gauss ----------------------------------------------------------------


def test_gauss_normalising_time():
    assert gauss_kernel(1 / (4 * math.pi), [0.3], [0.3]) == pytest.approx(1.0, rel=1e-15)


def test_gauss_closed_form():
    assert gauss_kernel(0.25, [0, 0], [1, 0]) == pytest.approx(math.exp(-1) / math.pi, rel=1e-14)
    assert gauss_kernel(0.25, [0, 0], [1, 0]) == pytest.approx(0.117, abs=2e-4)


def test_gauss_rejects_bad_time():
    for t in (0.0, -1.0, float("nan")):
        with pytest.raises(ValueError):
            gauss_kernel(t, [0], [0])


@settings(max_examples=100, deadline=None)
@given(times, st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_gauss_symmetric(t, x, y):
    assert gauss_kernel(t, x, y) == gauss_kernel(t, y, x)


def test_gauss_integrates_to_one():
    s = np.linspace(-20, 20, 40001)
    v = gauss_kernel(0.7, s[:, None], np.zeros((1, 1)))
    assert np.trapezoid(v, s) == pytest.approx(1.0, rel=1e-10)


# -- half-space -------------------------------------------------------------

H2 = HalfSpace(np.array([0.0, 1.0]), 0.0)


def test_halfspace_closed_form():
    expected = math.exp(-9 / 4) * (1 - math.exp(-1)) / (4 * math.pi)
    for route in ("product", "reflection"):
        v = halfspace_kernel(1.0, [0, 1], [3, 1], H2, route=route)
        assert v == pytest.approx(expected, rel=1e-13)
        assert v == pytest.approx(0.0053019, abs=1e-7)


def test_halfspace_boundary_vanishes():
    assert halfspace_kernel(0.3, [0.2, 0.4], [1.0, 0.0], H2) == 0.0


def test_halfspace_outside_raises():
    with pytest.raises(ValueError):
        halfspace_kernel(0.3, [0.2, -0.4], [1.0, 0.5], H2)


@settings(max_examples=200, deadline=None)
@given(times, st.floats(-3, 3), st.floats(1e-3, 3), st.floats(-3, 3), st.floats(1e-3, 3))
def test_halfspace_routes_agree(t, x1, x2, y1, y2):
    x, y = [x1, x2], [y1, y2]
    a = halfspace_kernel(t, x, y, H2, "product")
    b = halfspace_kernel(t, x, y, H2, "reflection")
    if x2 * y2 / t >= 1e-2:
        assert a == pytest.approx(b, rel=1e-9)
    assert 0 <= a <= gauss_kernel(t, x, y)


def test_halfspace_survival_limits():
    assert halfspace_survival(1.0, 10.0, 10.0) == pytest.approx(1.0)
    assert halfspace_survival(1.0, 0.0, 3.0) == 0.0


# -- interval ---------------------------------------------------------------


@pytest.mark.parametrize("args,value", THETA_VALUES)
def test_interval_frozen_theta_values(args, value):
    assert interval_kernel(*args) == pytest.approx(value, rel=1e-13)


def test_interval_half_point_value():
    # stated approximately as 1.994692; the theta series gives 1.99469653...
    assert interval_kernel(0.02, 0.5, 0.5) == pytest.approx(1.994692, rel=5e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(2e-3, 2.0), unit, unit)
def test_interval_matches_theta_oracle(t, x, y):
    assert interval_kernel(t, x, y) == pytest.approx(theta_interval(t, x, y), rel=1e-11, abs=1e-300)


@pytest.mark.parametrize("t,x,y", [(0.25, 2 ** -8, 2 ** -8), (0.25, 0.004, 0.996), (0.01, 1e-3, 0.999),
                                   (0.1, 0.999, 0.998), (0.3, 1e-3, 2e-3)])
def test_interval_near_walls_keeps_relative_accuracy(t, x, y):
    assert interval_kernel(t, x, y) == pytest.approx(theta_interval(t, x, y), rel=1e-13)


def test_interval_series_agree_at_switch():
    rng = np.random.default_rng(0)
    for a, b in ((0, 1), (-1, 2), (0.5, 0.7)):
        t = (b - a) ** 2 / math.pi
        x = rng.uniform(a, b, 200)
        y = rng.uniform(a, b, 200)
        i = interval_kernel(t, x, y, a, b, method="images")
        e = interval_kernel(t, x, y, a, b, method="eigen")
        assert np.max(np.abs(i - e)) < 1e-12 / (b - a)


def test_interval_boundary_and_outside():
    assert interval_kernel(0.1, 0.0, 0.4) == 0.0
    with pytest.raises(ValueError):
        interval_kernel(0.1, 1.2, 0.4)


@settings(max_examples=100, deadline=None)
@given(times, unit, unit)
def test_interval_symmetries(t, x, y):
    v = interval_kernel(t, x, y)
    assert interval_kernel(t, y, x) == v
    assert interval_kernel(t, 1 - x, 1 - y) == pytest.approx(v, rel=1e-12, abs=1e-300)
    assert 0 <= v <= gauss_kernel(t, [x], [y]) * (1 + 1e-12)


def test_interval_translation_and_scaling():
    v = interval_kernel(0.03, 0.2, 0.5)
    assert interval_kernel(0.03, 5.2, 5.5, 5, 6) == pytest.approx(v, rel=1e-12)
    # p_{λI}(λ²t, λx, λy) = p_I(t, x, y) / λ
    assert interval_kernel(4 * 0.03, 0.4, 1.0, 0, 2) == pytest.approx(v / 2, rel=1e-12)


def test_box_is_product():
    x, y = np.array([0.3, 0.6]), np.array([0.5, 0.2])
    lo, hi = [0, 0], [1, 2]
    expected = interval_kernel(0.05, 0.3, 0.5, 0, 1) * interval_kernel(0.05, 0.6, 0.2, 0, 2)
    assert box_kernel(0.05, x, y, lo, hi) == pytest.approx(expected, rel=1e-14)


# -- ball factor and van den Berg --------------------------------------------


def test_ball_h_examples():
    assert ball_h_factor(1.0, [0, 0], [0, 0]) == pytest.approx(1.0)
    assert ball_h_factor(4.0, [0, 0], [0, 0]) == pytest.approx(0.25)


def test_ball_h_outside_raises():
    with pytest.raises(ValueError):
        ball_h_factor(1.0, [2, 0], [0, 0])


@settings(max_examples=200, deadline=None)
@given(times, st.floats(0, 0.999), st.floats(0, 2 * math.pi), st.floats(0, 0.999), st.floats(0, 2 * math.pi))
def test_ball_h_range(t, r1, a1, r2, a2):
    x = [r1 * math.cos(a1), r1 * math.sin(a1)]
    y = [r2 * math.cos(a2), r2 * math.sin(a2)]
    h = ball_h_factor(t, x, y)
    assert 0 < h <= 2


def test_vdb_examples():
    assert vdb_factor(1.0, math.sqrt(math.log(4)), 1) == pytest.approx(0.5, rel=1e-14)
    assert vdb_factor(1.0, 20.0, 3) == pytest.approx(1.0, abs=1e-100)
    with pytest.raises(ValueError):
        vdb_factor(1.0, -0.1, 1)


def test_vdb_below_halfline_kernel():
    H1 = HalfSpace(np.array([1.0]), 0.0)
    for t in np.geomspace(1e-3, 10, 15):
        for d in np.geomspace(1e-3, 5, 15):
            exact = halfspace_kernel(t, [d], [d], H1)
            assert vdb_lower(t, [d], [d], d) <= exact * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(times, st.floats(0, 10), st.integers(1, 6))
def test_vdb_factor_range(t, rho, n):
    v = vdb_factor(t, rho, n)
    assert 0 <= v <= 1
