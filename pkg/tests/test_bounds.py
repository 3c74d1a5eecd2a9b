import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from convexheat.bounds import (
    exit_density_estimate,
    lower_bound_basic,
    lower_bound_improved,
    m,
    two_sided_factor,
    upper_bound_main,
    upper_bound_midpoint,
    wedge_obtuse_upper,
    zhang_bound,
)
from convexheat.geometry import Ball, Ellipse, GeometryError, HalfSpace, HalfSpaceDomain, Stadium
from convexheat.kernels import gauss_kernel, halfspace_kernel

BALL = Ball(dim=2)
HALF = HalfSpaceDomain([0.0, 1.0], 0.0)
ALL_BOUNDS = [
    lambda D, t, x, y: upper_bound_main(D, t, x, y),
    lambda D, t, x, y: upper_bound_midpoint(D, t, x, y),
    lambda D, t, x, y: lower_bound_basic(D, t, x, y),
    lambda D, t, x, y: lower_bound_improved(D, t, x, y)[0],
    lambda D, t, x, y: lower_bound_improved(D, t, x, y)[1],
    lambda D, t, x, y: two_sided_factor(D, t, x, y, "SR"),
]


def ball_pairs(rng, k):
    r = np.sqrt(rng.random((k, 2))) * 0.999
    a = rng.uniform(0, 2 * np.pi, (k, 2))
    X = np.column_stack([r[:, 0] * np.cos(a[:, 0]), r[:, 0] * np.sin(a[:, 0])])
    Y = np.column_stack([r[:, 1] * np.cos(a[:, 1]), r[:, 1] * np.sin(a[:, 1])])
    return X, Y


# -- examples ---------------------------------------------------------------


def test_upper_main_halfspace_collapse():
    t = 0.3
    s = math.sqrt(t)
    b = upper_bound_main(HALF, t, [0.0, s], [0.7, s])
    assert b.factor == pytest.approx(2.0)


def test_upper_main_ball_center():
    b = upper_bound_main(BALL, 1.0, [0, 0], [0, 0])
    assert b.factor == pytest.approx(2.0)
    assert b.value == pytest.approx(2 / (4 * math.pi))


def test_upper_main_time_and_domain_errors():
    with pytest.raises(ValueError):
        upper_bound_main(BALL, 2.0, [0, 0], [0, 0], T=1.0)
    with pytest.raises(ValueError):
        upper_bound_main(BALL, 0.0, [0, 0], [0, 0])
    with pytest.raises(GeometryError):
        upper_bound_main(BALL, 0.5, [2, 0], [0, 0])


def test_midpoint_coincident_points():
    x = [0.3, -0.2]
    a = upper_bound_main(BALL, 0.2, x, x)
    b = upper_bound_midpoint(BALL, 0.2, x, x)
    assert a.value == pytest.approx(b.value, rel=1e-14)


def test_midpoint_halfspace_linearity():
    t, x, y = 0.4, np.array([0.1, 0.3]), np.array([1.5, 0.9])
    b = upper_bound_midpoint(HALF, t, x, y)
    mid = 0.5 * (x[1] + y[1])
    assert b.factors["hx_mid"] == pytest.approx(min(1, x[1] * mid / t))
    assert b.factors["hy_mid"] == pytest.approx(min(1, y[1] * mid / t))


def test_midpoint_within_factor_four_on_halfspace():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        t = float(10 ** rng.uniform(-3, 0))
        x = np.array([rng.normal(), rng.exponential()])
        y = np.array([rng.normal(), rng.exponential()])
        a = upper_bound_main(HALF, t, x, y).value
        b = upper_bound_midpoint(HALF, t, x, y).value
        assert a / 4 <= b * (1 + 1e-12) and b <= 4 * a * (1 + 1e-12)


def test_wedge_obtuse_examples():
    H = HalfSpace(np.array([0.0, 1.0]), 0.0)
    t, x, y = 0.5, [0.0, 0.3], [0.4, 0.6]
    b = wedge_obtuse_upper(H, H, t, x, y)
    mm = min(1, 0.3 * 0.6 / t)
    assert b.factor == pytest.approx(mm + mm * mm)
    Q1, Q2 = HalfSpace(np.array([1.0, 0.0]), 0.0), HalfSpace(np.array([0.0, 1.0]), 0.0)
    s = math.sqrt(t)
    b = wedge_obtuse_upper(Q1, Q2, t, [1.5 * s, 1.5 * s], [1.5 * s, 1.5 * s])
    assert b.factor == pytest.approx(2.0)


def test_wedge_acute_rejected():
    n1 = np.array([1.0, 0.0])
    n2 = np.array([-math.cos(0.3), math.sin(0.3)])
    with pytest.raises(ValueError):
        wedge_obtuse_upper(HalfSpace(n1, 0.0), HalfSpace(n2, -1.0), 0.5, [0.2, 2.0], [0.3, 2.0])


def test_lower_basic_examples():
    assert lower_bound_basic(BALL, 0.5, [0, 0], [0, 0]).factor == pytest.approx(1.0)
    vals = [lower_bound_basic(BALL, 0.1, [0, 0], [1 - e, 0]).value for e in (1e-1, 1e-3, 1e-6)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-4


def test_lower_improved_examples():
    i, ii = lower_bound_improved(BALL, 1.0, [0, 0], [0, 0])
    assert i.factor == pytest.approx(1.0)
    # along the flat side of a stadium the midpoint term vanishes
    S = Stadium()
    t = 0.01
    x, y = np.array([-0.5, -1 + 1e-3]), np.array([0.5, -1 + 1e-3])
    _, ii = lower_bound_improved(S, t, x, y)
    dd = min(1, 1e-6 / t)
    assert ii.factor == pytest.approx(dd + min(1, 1e-6 / t) ** 2, rel=1e-6)


def test_zhang_examples():
    t, x, y = 0.3, np.array([0.0, 0.0]), np.array([0.5, 0.2])
    c = (4 * math.pi) ** -1
    lo, hi = zhang_bound(t, x, y, 0.2, 0.4, ((c, 0.25), (c, 0.25)))
    basic = gauss_kernel(t, x, y) * min(1, 0.08 / t)
    assert lo == pytest.approx(basic, rel=1e-13) and hi == pytest.approx(basic, rel=1e-13)
    t = 1.0
    y = np.array([math.sqrt(40.0), 0.0])
    lo, hi = zhang_bound(t, x, y, 1.0, 1.0, ((1.0, 0.5), (3.0, 0.25)))
    assert hi / lo == pytest.approx(3 * math.exp(10), rel=1e-12)
    ratios = [np.divide(*zhang_bound(1.0, x, [r, 0], 1, 1, ((1, 0.5), (1, 0.25)))[::-1]) for r in (1, 5, 10)]
    assert ratios[0] < ratios[1] < ratios[2]
    with pytest.raises(ValueError):
        zhang_bound(t, x, y, 1, 1, ((0, 1), (1, 1)))


def test_two_sided_examples():
    sq = two_sided_factor(BALL, 1.0, [0, 0], [0, 0], "SQ")
    sr = two_sided_factor(BALL, 1.0, [0, 0], [0, 0], "SR")
    assert sq.factor == pytest.approx(2.0) and sr.factor == pytest.approx(2.0)
    with pytest.raises(GeometryError):
        two_sided_factor(Stadium(), 0.1, [0, 0], [0.1, 0], "SQ")


def test_two_sided_within_sixteen_on_ball():
    rng = np.random.default_rng(1)
    X, Y = ball_pairs(rng, 3000)
    for x, y in zip(X, Y):
        t = float(10 ** rng.uniform(-3, 0))
        sq = two_sided_factor(BALL, t, x, y, "SQ").factor
        sr = two_sided_factor(BALL, t, x, y, "SR").factor
        assert sr / 16 <= sq <= sr * 16


def test_exit_density_halfline_normalisation():
    D = HalfSpaceDomain([1.0], 0.0)
    x, eps = 1.0, 1e-4

    def q(log_t):
        t = math.exp(log_t)
        return t * exit_density_estimate(D, t, [x], [0.0], eps)

    total = quad(q, math.log(1e-4), math.log(1e8), limit=400)[0]
    # the tail beyond t = 1e8 contributes about x / sqrt(pi * 1e8)
    assert total + x / math.sqrt(math.pi * 1e8) == pytest.approx(1.0, abs=1e-3)
    t = 0.7
    fp = x * (4 * math.pi) ** -0.5 * t ** -1.5 * math.exp(-x * x / (4 * t))
    assert exit_density_estimate(D, t, [x], [0.0], eps) == pytest.approx(fp, rel=1e-3)
    half = exit_density_estimate(D, t, [x], [0.0], eps, kappa=0.5)
    assert half == pytest.approx(fp / 2, rel=1e-3)


def test_exit_density_small_time_and_range():
    D = HalfSpaceDomain([1.0], 0.0)
    assert exit_density_estimate(D, 1e-3, [2.0], [0.0], 1e-3) < 1e-300
    with pytest.raises(ValueError):
        exit_density_estimate(BALL, 0.1, [0, 0], [1, 0], 0.5)


def test_exit_density_ball_rotational_symmetry():
    vals = []
    for ang in (0.0, 2.0, 4.0):
        z = [math.cos(ang), math.sin(ang)]
        vals.append(exit_density_estimate(BALL, 0.2, [0, 0], z, 0.05, kernel_source="mc",
                                          paths=20_000, steps=64, seed=3))
    mean = np.mean(vals)
    assert max(abs(v - mean) for v in vals) < 0.05 * mean


# -- invariants ----------------------------------------------------------------


@pytest.mark.parametrize("bound", ALL_BOUNDS)
def test_breakdown_recomposes(bound):
    rng = np.random.default_rng(2)
    X, Y = ball_pairs(rng, 200)
    for x, y in zip(X, Y):
        t = float(10 ** rng.uniform(-3, 0))
        b = bound(BALL, t, x, y)
        assert b.recompose() == pytest.approx(b.value, rel=1e-12)
        assert all(0 <= v <= 1 for v in b.factors.values())


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(1e-3, 5), st.floats(1e-3, 5))
def test_min_term_non_increasing_in_t(a, t1, t2):
    lo, hi = sorted((t1, t2))
    assert m(a, hi) <= m(a, lo)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1), st.floats(0, 0.999), st.floats(0, 6.3), st.floats(0, 0.999), st.floats(0, 6.3))
def test_factor_ranges(t, r1, a1, r2, a2):
    x = [r1 * math.cos(a1), r1 * math.sin(a1)]
    y = [r2 * math.cos(a2), r2 * math.sin(a2)]
    assert 0 <= upper_bound_main(BALL, t, x, y).factor <= 2
    assert 0 <= lower_bound_improved(BALL, t, x, y)[1].factor <= 2


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1), st.floats(-3, 3), st.floats(1e-4, 3), st.floats(-3, 3), st.floats(1e-4, 3))
def test_halfspace_sandwich(t, x1, x2, y1, y2):
    x, y = [x1, x2], [y1, y2]
    # 1 - e^{-u} lies between (1 - 1/e)(1 ∧ u) and 1 ∧ u
    exact = halfspace_kernel(t, x, y, HALF.H)
    assert (1 - math.exp(-1)) * lower_bound_basic(HALF, t, x, y).value <= exact * (1 + 1e-12)
    assert exact <= upper_bound_main(HALF, t, x, y).value * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.2, 5))
def test_scale_covariance(lam):
    rng = np.random.default_rng(5)
    for D in (BALL, Ellipse(2, 1), Stadium()):
        P = D.sample_interior(rng, 6)
        t = 0.03
        for x, y in ((P[0], P[1]), (P[2], P[3]), (P[4], P[5])):
            for bound in ALL_BOUNDS:
                a = bound(D, t, x, y).factor
                b = bound(D.scaled(lam), lam * lam * t, lam * x, lam * y).factor
                assert b == pytest.approx(a, rel=1e-9, abs=1e-12)
