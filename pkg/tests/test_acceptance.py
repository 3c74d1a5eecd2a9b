"""End-to-end acceptance checks at full budget.

Each test prints one ``PASS``/``FAIL`` line with the measured numbers so that
``pytest -v`` output doubles as an acceptance log.
"""

import math
import time

import numpy as np
import pytest

from convexheat.bounds import improved_factors
from convexheat.characteristics import comparability_check, qd_estimate, ratio_profile, rd_estimate
from convexheat.experiments import report_bytes, run_experiment
from convexheat.geometry import (
    Ball,
    Box,
    Ellipse,
    HalfCapsule,
    HalfSpaceDomain,
    Interval,
    PowerDomain,
    Stadium,
)
from convexheat.kernels import halfspace_kernel, interval_kernel
from convexheat.oracle import mc_kernel

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def show(n, name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {n:>2}. {name}: {detail}")
        return ok
    return show


def close_enough(est, exact):
    return abs(est.mean - exact) <= max(3 * est.stderr, 0.01 * exact)


@pytest.fixture(scope="module")
def ck_report():
    start = time.perf_counter()
    rep = run_experiment("ck-suite")
    return rep, time.perf_counter() - start


def test_01_halfspace_exactness(verdict):
    D = HalfSpaceDomain([0.0, 1.0], 0.0)
    start = time.perf_counter()
    worst, ok = 0.0, True
    for i, t in enumerate((0.01, 0.1, 1.0)):
        st = math.sqrt(t)
        for j, k in enumerate((0.2, 1.0, 5.0)):
            x, y = np.array([0.0, k * st]), np.array([0.5 * st, k * st])
            est = mc_kernel(D, t, x, y, steps=256, paths=100_000, seed=10 * i + j, progress=False)
            exact = halfspace_kernel(t, x, y, D.H, route="reflection")
            ok &= close_enough(est, exact)
            worst = max(worst, abs(est.mean - exact) / exact)
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    assert verdict(1, "half-space exactness", ok, f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_02_interval_exactness(verdict):
    configs = [(0.01, 0.5, 0.5), (0.05, 0.2, 0.3), (0.1, 0.3, 0.7), (0.3, 0.5, 0.5), (0.02, 0.05, 0.1)]
    ok, worst = True, 0.0
    for i, (t, x, y) in enumerate(configs):
        est = mc_kernel(Interval(0, 1), t, [x], [y], steps=256, paths=100_000, seed=i, progress=False)
        exact = interval_kernel(t, x, y)
        ok &= close_enough(est, exact)
        worst = max(worst, abs(est.mean - exact) / exact)
    xs = np.linspace(0.01, 0.99, 50)
    X, Y = np.meshgrid(xs, xs)
    t = 1 / math.pi
    gap = np.max(np.abs(interval_kernel(t, X, Y, method="images") - interval_kernel(t, X, Y, method="eigen")))
    ok &= gap < 1e-12
    assert verdict(2, "interval exactness", ok, f"max rel err {worst:.2e}, series gap {gap:.1e}")


def test_03_semigroup_residuals(verdict, ck_report):
    rep, _ = ck_report
    s = rep.summary
    kinds = ("gauss", "halfspace", "interval")
    ok = all(s[k]["configs"] == 20 and s[k]["passed"] == 20 for k in kinds)
    worst = max(s[k]["max_residual"] for k in kinds)
    assert verdict(3, "Chapman-Kolmogorov residuals", ok, f"60 configs, max residual {worst:.1e}")


def test_04_kernel_product_inequalities(verdict, ck_report):
    rep, elapsed = ck_report
    s = rep.summary
    ok = (s["CKlow"]["configs"] == 100 and s["CKlow"]["passed"] == 100
          and s["CKHH"]["configs"] == 50 and s["CKHH"]["passed"] == 50 and elapsed < 300)
    detail = f"CKlow {s['CKlow']['passed']}/100, CKHH {s['CKHH']['passed']}/50, suite {elapsed:.0f}s"
    assert verdict(4, "kernel-product inequalities", ok, detail)


def test_05_ball_bracketing(verdict):
    rep = run_experiment("ball-sharpness")
    s = rep.summary
    ok = s["configs"] == 60 and 0 < s["c"] and s["C_over_c"] <= 100 and s["h_spread"] <= 50
    detail = f"c={s['c']:.3g}, C={s['C']:.3g}, C/c={s['C_over_c']:.3g}, h spread={s['h_spread']:.3g}"
    assert verdict(5, "ball bound bracketing", ok, detail)


def test_06_characteristic_estimators(verdict):
    iv = qd_estimate(Interval(0, 1), budget=1000)
    ball = qd_estimate(Ball(dim=2), budget=100_000, seed=0)
    st = qd_estimate(Stadium(), budget=100_000, seed=0)
    trace = [v for _, v in st.refinement_trace]
    P = PowerDomain(1, 2, 2)
    r0 = rd_estimate(P, budget=25_000, seed=0).r_hat
    r1 = rd_estimate(P, budget=100_000, seed=0).r_hat
    E = Ellipse(2, 1)
    q0 = qd_estimate(E, budget=25_000, seed=0).q_hat
    q1 = qd_estimate(E, budget=100_000, seed=0).q_hat
    checks = {
        "interval": iv.q_hat == 1.0 and iv.r_hat == 1.0,
        "ball": 0.497 <= ball.q_hat <= 0.503,
        "stadium": st.q_hat < 0.05 and all(b <= a for a, b in zip(trace, trace[1:])),
        "power": r1 > 0.02 and abs(r1 - r0) < 0.05 * r0,
        "ellipse": q1 > 0.1 and abs(q1 - q0) < 0.05 * q0,
    }
    detail = (f"ball q={ball.q_hat:.5f}, stadium q={st.q_hat:.3g}, power r={r0:.4f}->{r1:.4f}, "
              f"ellipse q={q0:.4f}->{q1:.4f}; failed: {[k for k, v in checks.items() if not v]}")
    assert verdict(6, "Q/R estimators", all(checks.values()), detail)


def test_07_ratio_profile_monotone(verdict):
    catalog = [Ball(dim=2), Ball(dim=3), Ellipse(2, 1), Stadium(), PowerDomain(1, 2, 2),
               PowerDomain(1, 3, 2), HalfCapsule(1, 3, 2), Box([0, 0], [2, 1])]
    worst, pairs = -math.inf, 0
    prof = ratio_profile(Interval(0, 1), [0.0], [1.0], grid=64)
    worst = max(worst, float(np.nanmax(np.diff(prof))))
    for k, D in enumerate(catalog):
        rng = np.random.default_rng(k)
        W, Z = D.sample_boundary(rng, 1000), D.sample_boundary(rng, 1000)
        for w, z in zip(W, Z):
            if np.linalg.norm(w - z) < 1e-9:
                continue
            d = np.diff(ratio_profile(D, w, z, grid=32))
            d = d[np.isfinite(d)]
            if d.size:
                worst = max(worst, float(d.max()))
            pairs += 1
    ok = worst <= 1e-8
    assert verdict(7, "monotone ratio profile", ok, f"{pairs} pairs, largest increase {worst:.1e}")


def test_08_midpoint_comparability(verdict):
    parts, ok = [], True
    for D in (Ball(dim=2), Ellipse(2, 1)):
        q = qd_estimate(D, budget=25_000, seed=0).q_hat
        res = comparability_check(D, q, pairs=10_000, seed=0)
        ok &= res["passed"]
        parts.append(f"{D.kind}: max {res['max_ratio']:.3g} <= {res['bound']:.3g}")
    assert verdict(8, "tangent half-space comparability", ok, "; ".join(parts))


def test_09_stadium_regimes(verdict):
    rep = run_experiment("stadium-regimes")
    s = rep.summary
    target = [c for c in s["checks"] if c["gamma"] == 0.6 and c["t"] == 1e-3]
    det = bool(target) and all(c["sr_normalised_ok"] and c["sq_normalised_ok"] for c in s["checks"])
    fit = s["mc_fit"]
    if fit["feasible"]:
        mc_ok, mc = fit["within_half"], f"slope {fit['slope']:.3f} vs {fit['target_slope']:.2f}"
    else:
        mc_ok, mc = "variance_budget" in fit, f"fit infeasible, budget {fit['variance_budget']}"
    assert verdict(9, "stadium regimes", det and mc_ok, f"deterministic checks {det}, {mc}")


def test_10_halfcapsule_lower_constant(verdict):
    rep = run_experiment("halfcapsule-s1l")
    s = rep.summary
    ok = len(rep.rows) == 30 and s["C"] > 0 and all(r["y"][0] <= 0 for r in rep.rows)
    assert verdict(10, "half-capsule lower constant", ok, f"C = {s['C']:.3g} over {len(rep.rows)} rows")


def test_11_lower_form_equivalence(verdict):
    catalog = [Interval(0, 1), Ball(dim=2), Ball(dim=3), Ellipse(2, 1), Stadium(), PowerDomain(1, 2, 2),
               PowerDomain(1, 3, 2), HalfCapsule(1, 3, 2), Box([0, 0], [2, 1])]
    per = 100_000 // len(catalog) + 1
    lo, hi, total = math.inf, 0.0, 0
    for k, D in enumerate(catalog):
        rng = np.random.default_rng(100 + k)
        X, Y = D.sample_interior(rng, per), D.sample_interior(rng, per)
        for t in np.geomspace(1e-4, 1.0, 9):
            f = improved_factors(D, float(t), X, Y)
            r = (f["x_mid_sqrt"] * f["y_mid_sqrt"]) / (f["dd"] + f["x_mid"] * f["y_mid"])
            lo, hi = min(lo, float(r.min())), max(hi, float(r.max()))
            total += per
    ok = 1 / 16 <= lo and hi <= 16 and total >= 100_000
    assert verdict(11, "lower-bound form equivalence", ok, f"{total} samples, ratio in [{lo:.3f}, {hi:.3f}]")


def test_12_reproducibility(verdict):
    small = {
        "ball-sharpness": {"grid": {"t": [0.1], "pairs_per_t": 3}, "budget": {"paths": 2000, "steps": 32}},
        "stadium-regimes": {"grid": {"gamma": [0.6], "t": [1e-3], "mc_t": [0.03, 0.01]},
                            "budget": {"paths": 2000, "steps": 32}},
        "power-sr": {"budget": {"budget": 1000, "local_pairs": 1000}},
        "ellipse-sq": {"budget": {"budget": 1000, "pairs": 1000}},
        "halfcapsule-s1l": {"budget": {"paths": 1000, "steps": 16}},
        "ck-suite": {"grid": {"counts": {"gauss": 2, "halfspace": 2, "interval": 2, "CKlow": 5, "CKHH": 3}}},
    }
    bad = []
    for name, extra in small.items():
        spec = {"name": name, "preset": name, **extra}
        a, b = run_experiment(dict(spec)), run_experiment(dict(spec))
        for fmt in ("json", "csv", "plotdata"):
            if report_bytes(a, fmt) != report_bytes(b, fmt):
                bad.append(f"{name}/{fmt}")
    assert verdict(12, "byte-identical reruns", not bad, f"{len(small)} presets x 3 formats, mismatches {bad}")
