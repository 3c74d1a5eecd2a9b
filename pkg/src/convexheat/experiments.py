"""Experiment runner and report writer.

An experiment is a named preset or a JSON spec.  Running it produces a
:class:`Report` of per-configuration rows plus a summary; reports are written
as JSON, CSV or plot data with fixed float formatting so that reruns with
the same spec and seed give identical bytes.

Presets
-------
ball-sharpness     calibrate lower/upper bracketing constants on the unit disc
stadium-regimes    factor asymptotics at the two ends of a stadium's flat side
power-sr           R-characteristic of power domains under truncation doubling
ellipse-sq         Q-characteristic of an ellipse and midpoint comparability
halfcapsule-s1l    survival lower bound from the tip of a half-capsule
ck-suite           semigroup residuals and the two kernel-product inequalities
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextvars import ContextVar
from dataclasses import dataclass, field

import numpy as np

from . import bounds, characteristics, kernels, oracle
from .geometry import Ball, HalfCapsule, HalfSpace, PowerDomain, Stadium, make_domain

__all__ = [
    "ExperimentError",
    "ExperimentSpec",
    "Report",
    "PRESETS",
    "run_experiment",
    "emit_report",
    "report_bytes",
    "stadium_example_points",
    "near_boundary_pairs",
    "random_ck_configs",
    "row_seed",
    "run_verify",
]


class ExperimentError(RuntimeError):
    """A row failed; ``report`` holds the rows finished before the failure."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class ExperimentSpec:
    name: str
    preset: str | None = None
    domain: dict | None = None
    grid: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        name = d.pop("name", d.get("preset") or "experiment")
        known = {k: d.pop(k) for k in ("preset", "domain", "grid", "budget", "outputs", "params") if k in d}
        if d:
            raise ValueError(f"unknown experiment spec fields: {sorted(d)}")
        return cls(name=name, **known)

    def to_dict(self):
        return {
            "name": self.name,
            "preset": self.preset,
            "domain": self.domain,
            "grid": self.grid,
            "budget": self.budget,
            "params": self.params,
        }


@dataclass
class Report:
    name: str
    spec: dict
    rows: list
    summary: dict
    plot: dict = field(default_factory=dict)
    columns: list = field(default_factory=list)
    wall_clock_ceiling: float = 0.0

    def to_dict(self):
        return {
            "name": self.name,
            "spec": self.spec,
            "wall_clock_ceiling": self.wall_clock_ceiling,
            "summary": self.summary,
            "rows": self.rows,
        }


# -- helpers ---------------------------------------------------------------


def row_seed(master, index):
    """Independent 63-bit seed for row ``index`` of a run with seed ``master``."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0] >> 1)


def _rng(master, *key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master), *key])))


def _threads():
    return max(1, int(os.environ.get(oracle.THREADS_ENV, "1")))


# rows finished so far in the current run, kept for partial reports
_finished: ContextVar[list | None] = ContextVar("_finished", default=None)


def _emit(row):
    done = _finished.get()
    if done is not None:
        done.append(row)
    return row


def _parallel(fn, items):
    """Map ``fn`` over ``items`` keeping order; rows run concurrently when threads > 1."""
    n = _threads()
    if n == 1 or len(items) < 2:
        return [_emit(fn(it)) for it in items]
    with ThreadPoolExecutor(n) as pool:
        return [_emit(r) for r in pool.map(fn, items)]


def _budget(spec, **defaults):
    b = dict(defaults)
    b.update(spec.budget or {})
    return b


def _ratio(a, b):
    return a / b if b > 0 else math.inf


def stadium_example_points(t, gamma):
    """Points at the two ends of the upper flat side of the unit stadium.

    Both points sit at height ``1 - t^γ`` on the arcs, at distance
    ``t^(1+γ)/2`` from the boundary.
    """
    h = 1.0 - t ** gamma
    d = 0.5 * t ** (1.0 + gamma)
    off = math.sqrt((1.0 - d) ** 2 - h * h)
    return np.array([-1.0 - off, h]), np.array([1.0 + off, h]), d


def near_boundary_pairs(domain, t, rng, count, levels=(0.05, 0.2, 1.0)):
    """Pairs at depths ``level * sqrt(t)`` along random inward normals.

    The first ``count - 2`` pairs cycle through all depth combinations,
    alternating between unrelated boundary points and nearby ones; the last
    two pairs are uniform interior points.
    """
    st = math.sqrt(t)
    combos = list(itertools.product(levels, levels))
    out = []
    for i in range(max(count - 2, 0)):
        lx, ly = combos[i % len(combos)]
        zx = domain.sample_boundary(rng, 1)[0]
        if (i // len(combos)) % 2 == 0:
            zy = domain.sample_boundary(rng, 1)[0]
        else:
            # a boundary point about sqrt(t) away from zx
            cand = zx + st * rng.standard_normal(domain.dim)
            zy = domain.nearest(cand)[0]
        nx = domain.nearest(zx)[2]
        ny = domain.nearest(zy)[2]
        out.append((zx + lx * st * nx, zy + ly * st * ny))
    for _ in range(min(count, 2)):
        P = domain.sample_interior(rng, 2)
        out.append((P[0], P[1]))
    return out


def _mc(domain, t, x, y, budget, seed):
    est = oracle.mc_kernel(domain, t, x, y, steps=budget["steps"], paths=budget["paths"],
                           seed=seed, workers=1, progress=False)
    return est.to_dict()


# -- bracketing (ball-sharpness and custom specs) ------------------------------


def _bracket_row(domain, t, x, y, budget, seed, T):
    mc = _mc(domain, t, x, y, budget, seed)
    low_i, low_ii = bounds.lower_bound_improved(domain, t, x, y)
    up = bounds.upper_bound_main(domain, t, x, y, T=T)
    g = kernels.gauss_kernel(t, x, y)
    row = {
        "t": t,
        "x": x.tolist(),
        "y": y.tolist(),
        "delta_x": float(domain.dist(x)),
        "delta_y": float(domain.dist(y)),
        "delta_mid": float(domain.dist(0.5 * (x + y))),
        "gauss": g,
        "mc": mc,
        "lower_i": low_i.to_dict(),
        "lower_ii": low_ii.to_dict(),
        "upper_main": up.to_dict(),
        "ratio_mc_lower_i": _ratio(mc["mean"], low_i.value),
        "ratio_mc_lower_ii": _ratio(mc["mean"], low_ii.value),
        "ratio_mc_upper": _ratio(mc["mean"], up.value),
    }
    if isinstance(domain, Ball) and domain.radius == 1.0 and not np.any(domain.center):
        h = kernels.ball_h_factor(t, x, y)
        row["h_factor"] = h
        row["ratio_mc_ph"] = _ratio(mc["mean"], g * h)
    return row


def _bracket_summary(rows):
    if not rows:
        return {"configs": 0}
    ci = min(r["ratio_mc_lower_i"] for r in rows)
    cii = min(r["ratio_mc_lower_ii"] for r in rows)
    C = max(r["ratio_mc_upper"] for r in rows)
    c = min(ci, cii)
    out = {
        "configs": len(rows),
        "c_lower_i": ci,
        "c_lower_ii": cii,
        "c": c,
        "C": C,
        "C_over_c": _ratio(C, c),
        "bracket_ok": bool(c > 0 and C / c <= 100.0),
    }
    if all("ratio_mc_ph" in r for r in rows):
        hs = [r["ratio_mc_ph"] for r in rows]
        out["h_ratio_min"] = min(hs)
        out["h_ratio_max"] = max(hs)
        out["h_spread"] = _ratio(max(hs), min(hs))
        out["h_spread_ok"] = bool(max(hs) / min(hs) <= 50.0) if min(hs) > 0 else False
    return out


def _run_bracketing(spec, domain, ts, pairs_per_t, seed, T, budget, pairs=None):
    jobs = []
    for ti, t in enumerate(ts):
        if pairs is not None:
            plist = [(np.asarray(a, float), np.asarray(b, float)) for a, b in pairs]
        else:
            plist = near_boundary_pairs(domain, t, _rng(seed, 1, ti), pairs_per_t)
        for x, y in plist:
            jobs.append((len(jobs), float(t), x, y))
    rows = _parallel(lambda j: _bracket_row(domain, j[1], j[2], j[3], budget, row_seed(seed, j[0]), T), jobs)
    plot = {}
    for key in ("ratio_mc_lower_i", "ratio_mc_upper"):
        plot[key] = [(math.log10(r["t"]), math.log10(r[key])) for r in rows if 0 < r[key] < math.inf]
    return rows, _bracket_summary(rows), plot


def _preset_ball_sharpness(spec):
    g = spec.grid
    ts = g.get("t", [0.05, 0.1, 0.5])
    budget = _budget(spec, paths=20_000, steps=256, seed=0)
    domain = make_domain(spec.domain or {"kind": "ball", "params": {"dim": 2}})
    rows, summary, plot = _run_bracketing(spec, domain, ts, g.get("pairs_per_t", 20), budget["seed"],
                                          spec.params.get("T", 1.0), budget)
    return rows, summary, plot


def _preset_custom(spec):
    if spec.domain is None:
        raise ValueError("a custom experiment needs a domain")
    domain = make_domain(spec.domain)
    g = spec.grid
    budget = _budget(spec, paths=20_000, steps=256, seed=0)
    return _run_bracketing(spec, domain, g.get("t", []), g.get("pairs_per_t", 0), budget["seed"],
                           spec.params.get("T", 1.0), budget, pairs=g.get("pairs"))


# -- stadium -----------------------------------------------------------------------


def _stadium_factor_row(S, t, gamma):
    x, y, d = stadium_example_points(t, gamma)
    sr = bounds.two_sided_factor(S, t, x, y, "SR")
    sq = bounds.lower_bound_improved(S, t, x, y)[1]
    dd = d * d
    return {
        "kind": "factors",
        "gamma": gamma,
        "t": t,
        "x": x.tolist(),
        "y": y.tolist(),
        "delta": d,
        "delta_mid": float(S.dist(0.5 * (x + y))),
        "sr": sr.to_dict(),
        "sq": sq.to_dict(),
        "sr_normalised": sr.factor / (dd / t ** (2 - gamma)),
        "sq_normalised": sq.factor / (dd / t),
        "ratio_sr_sq": sr.factor / sq.factor,
        "predicted_ratio": t ** (gamma - 1),
    }


def _preset_stadium(spec):
    S = Stadium()
    g = spec.grid
    gammas = g.get("gamma", [0.55, 0.6, 0.7])
    ts = g.get("t", [1e-2, 1e-3])
    mc_gamma = g.get("mc_gamma", 0.55)
    mc_ts = g.get("mc_t", [10 ** -1.5, 1e-2])
    budget = _budget(spec, paths=100_000, steps=256, seed=0, max_rel_stderr=0.1)
    rows = _parallel(lambda j: _stadium_factor_row(S, j[1], j[0]), list(itertools.product(gammas, ts)))

    def mc_row(job):
        i, t = job
        x, y, d = stadium_example_points(t, mc_gamma)
        est = oracle.bridge_survival(S, t, x, y, steps=budget["steps"], paths=budget["paths"],
                                     seed=row_seed(budget["seed"], 100 + i), workers=1, progress=False)
        return {
            "kind": "mc",
            "gamma": mc_gamma,
            "t": t,
            "x": x.tolist(),
            "y": y.tolist(),
            "delta": d,
            "survival": est.to_dict(),
            "rel_stderr": _ratio(est.stderr, est.mean),
            "normalised": est.mean / (d * d),
        }

    mc_rows = _parallel(mc_row, list(enumerate(mc_ts)))
    rows.extend(mc_rows)

    summary = {"checks": []}
    for r in rows:
        if r["kind"] != "factors":
            continue
        ok_sr = 1 / 32 <= r["sr_normalised"] <= 32
        ok_sq = 1 / 32 <= r["sq_normalised"] <= 32
        summary["checks"].append({
            "gamma": r["gamma"], "t": r["t"],
            "sr_normalised_ok": bool(ok_sr), "sq_normalised_ok": bool(ok_sq),
            "ratio_in_band": bool(r["predicted_ratio"] / 32 <= r["ratio_sr_sq"] <= r["predicted_ratio"] * 32),
        })
    target = -3 * (1 - mc_gamma)
    feasible = all(0 < r["rel_stderr"] <= budget["max_rel_stderr"] for r in mc_rows) and len(mc_rows) >= 2
    fit = {
        "gamma": mc_gamma,
        "target_slope": target,
        "feasible": bool(feasible),
        "variance_budget": {"paths": budget["paths"], "steps": budget["steps"],
                            "max_rel_stderr": budget["max_rel_stderr"],
                            "rel_stderr": [r["rel_stderr"] for r in mc_rows]},
    }
    if feasible:
        lt = np.log10([r["t"] for r in mc_rows])
        lv = np.log10([r["normalised"] for r in mc_rows])
        slope = float(np.polyfit(lt, lv, 1)[0])
        fit["slope"] = slope
        fit["within_half"] = bool(abs(slope - target) <= 0.5)
    summary["mc_fit"] = fit
    plot = {}
    for gm in gammas:
        pts = [(math.log10(r["t"]), math.log10(r["ratio_sr_sq"])) for r in rows
               if r["kind"] == "factors" and r["gamma"] == gm]
        plot[f"ratio_sr_sq gamma={gm:g}"] = sorted(pts)
    plot["mc normalised survival"] = [(math.log10(r["t"]), math.log10(r["normalised"]))
                                      for r in mc_rows if r["normalised"] > 0]
    return rows, summary, plot


# -- characteristics presets ----------------------------------------------------


def _char_row(rep, extra):
    row = dict(extra)
    row.update({
        "target": rep.target,
        "budget": rep.budget,
        "q_hat": rep.q_hat,
        "r_hat": rep.r_hat,
        "samples": rep.samples,
        "skipped": rep.skipped,
        "argmin_w": [float(v) for v in rep.argmin_pair[0]],
        "argmin_z": [float(v) for v in rep.argmin_pair[1]],
        "truncation_history": rep.truncation_history,
    })
    return row


def _preset_power(spec):
    g = spec.grid
    ps = g.get("p", [2.0])
    a = g.get("a", 1.0)
    budget = _budget(spec, budget=25_000, seed=0, local_pairs=20_000)
    rows, summary, plot = [], {"domains": []}, {}
    for p in ps:
        D = PowerDomain(a, p, 2)
        reps = []
        for k, b in enumerate((budget["budget"], 4 * budget["budget"])):
            rep = characteristics.rd_estimate(D, b, budget["seed"])
            reps.append(rep)
            rows.append(_emit(_char_row(rep, {"a": a, "p": p})))
        qreps = [characteristics.qd_estimate(D, r.budget, budget["seed"]) for r in reps]
        for qr, rr in zip(qreps, reps):
            qr.r_hat = rr.r_hat
        cp = characteristics.local_ratio_floor(D, budget["local_pairs"], budget["seed"])
        r0, r1 = reps[0].r_hat, reps[1].r_hat
        summary["domains"].append({
            "a": a, "p": p,
            "r_hat": [r0, r1],
            "q_hat": [q.q_hat for q in qreps],
            "stable": bool(abs(r1 - r0) < 0.05 * r0),
            "above_threshold": bool(r1 > characteristics.DEFAULT_THRESHOLD),
            "classification": characteristics.classify(D, reps),
            "local_ratio_floor": cp,
        })
        plot[f"r_hat trace p={p:g}"] = [(float(n), float(v)) for n, v in reps[1].refinement_trace]
    return rows, summary, plot


def _preset_ellipse(spec):
    g = spec.grid
    a, b_ = g.get("a", 2.0), g.get("b", 1.0)
    budget = _budget(spec, budget=25_000, seed=0, pairs=10_000)
    E = make_domain({"kind": "ellipse", "params": {"a": a, "b": b_}})
    reps = [characteristics.qd_estimate(E, n, budget["seed"]) for n in (budget["budget"], 4 * budget["budget"])]
    rows = [_emit(_char_row(r, {"a": a, "b": b_})) for r in reps]
    q0, q1 = reps[0].q_hat, reps[1].q_hat
    comp = characteristics.comparability_check(E, q1, budget["pairs"], budget["seed"])
    summary = {
        "q_hat": [q0, q1],
        "stable": bool(abs(q1 - q0) < 0.05 * q0),
        "above_0.1": bool(q1 > 0.1),
        "classification": characteristics.classify(E, reps),
        "comparability": comp,
    }
    plot = {"q_hat trace": [(float(n), float(v)) for n, v in reps[1].refinement_trace]}
    return rows, summary, plot


# -- half-capsule --------------------------------------------------------------


def halfcapsule_targets(t):
    """Ten points of the hemisphere end ``y_1 <= 0`` of ``J(√t, 5√t)``."""
    st = math.sqrt(t)
    out = []
    for rho in (0.0, 0.5, 0.9, 0.97, 0.995):
        for phi in (0.0, math.pi / 3):
            out.append(st * rho * np.array([-math.cos(phi), math.sin(phi)]))
    # put one point on the plane y_1 = 0 itself
    out[1] = st * np.array([0.0, 0.5])
    return out


def _preset_halfcapsule(spec):
    g = spec.grid
    t = g.get("t", 1.0)
    budget = _budget(spec, paths=20_000, steps=256, seed=0)
    st = math.sqrt(t)
    J = HalfCapsule(st, 5 * st, 2)
    x = np.array([J.L - st, 0.0])
    jobs = [(i, s, y) for i, (s, y) in enumerate(itertools.product((t / 4, t / 2, t), halfcapsule_targets(t)))]

    def row(job):
        i, s, y = job
        est = oracle.mc_kernel(J, s, x, y, steps=budget["steps"], paths=budget["paths"],
                               seed=row_seed(budget["seed"], i), workers=1, progress=False)
        dy = float(J.dist(y))
        fac = min(1.0, dy * st / s)
        g = kernels.gauss_kernel(s, x, y)
        return {
            "s": s, "x": x.tolist(), "y": y.tolist(), "delta_y": dy,
            "mc": est.to_dict(), "gauss": g, "factor": fac,
            "ratio": _ratio(est.mean, g * fac),
        }

    rows = _parallel(row, jobs)
    C = min(r["ratio"] for r in rows)
    summary = {"R": st, "L": 5 * st, "t": t, "C": C, "positive": bool(C > 0)}
    plot = {f"ratio s={s:g}": [(r["delta_y"], r["ratio"]) for r in rows if r["s"] == s] for s in (t / 4, t / 2, t)}
    return rows, summary, plot


# -- quadrature suite ------------------------------------------------------------


def random_ck_configs(kind, count, rng):
    """Random configurations for the semigroup and kernel-product checks."""
    out = []
    for _ in range(count):
        t = float(rng.uniform(0.02, 1.0))
        al = float(rng.uniform(0.1, 0.9))
        st = math.sqrt(t)
        if kind == "gauss":
            n = int(rng.integers(1, 4))
            out.append({"t": t, "alpha": al, "x": rng.normal(size=n) * st, "y": rng.normal(size=n) * st})
        elif kind == "halfspace":
            n = int(rng.integers(1, 4))
            nv = rng.normal(size=n)
            H = HalfSpace(nv / np.linalg.norm(nv), float(rng.normal()))
            base = H.offset * H.normal
            pts = []
            for _ in range(2):
                p = base + rng.normal(size=n) * st
                p = p + (rng.uniform(0.05, 2.0) * st - H.dist(p)) * H.normal
                pts.append(p)
            out.append({"t": t, "alpha": al, "x": pts[0], "y": pts[1], "H": H})
        elif kind == "interval":
            out.append({"t": t, "alpha": al, "x": rng.uniform(0.02, 0.98, 1), "y": rng.uniform(0.02, 0.98, 1)})
        elif kind == "CKlow":
            n = int(rng.integers(1, 4))
            x, y = rng.normal(size=n) * st, rng.normal(size=n) * st
            c = (1 - al) * x + al * y
            u = rng.normal(size=n)
            u /= np.linalg.norm(u)
            d = float(rng.uniform(0, 3)) * st
            r = float(10 ** rng.uniform(-1.5, 1)) * st
            out.append({"n": n, "t": t, "alpha": al, "x": x, "y": y, "a": c + d * u, "r": r})
        elif kind == "CKHH":
            n = int(rng.integers(2, 4))
            N = rng.normal(size=(2, n))
            N /= np.linalg.norm(N, axis=1, keepdims=True)
            x = rng.normal(size=n) * st
            y = x + rng.normal(size=n) * st
            offs = [min(N[i] @ x, N[i] @ y) - float(rng.uniform(0, 2)) * st for i in range(2)]
            a, b = (float(v) for v in rng.uniform(0, 2, 2))
            out.append({"normals": N, "offsets": offs, "a": a, "b": b, "t": t, "x": x, "y": y})
        else:
            raise ValueError(kind)
    return out


def _preset_ck(spec):
    g = spec.grid
    seed = _budget(spec, seed=0)["seed"]
    counts = {"gauss": 20, "halfspace": 20, "interval": 20, "CKlow": 100, "CKHH": 50}
    counts.update(g.get("counts", {}))
    jobs = []
    for j, kind in enumerate(("gauss", "halfspace", "interval")):
        jobs += [(kind, cfg) for cfg in random_ck_configs(kind, counts[kind], _rng(seed, 2, j))]
    for j, kind in enumerate(("CKlow", "CKHH")):
        jobs += [(kind, cfg) for cfg in random_ck_configs(kind, counts[kind], _rng(seed, 3, j))]

    def row(job):
        kind, cfg = job
        base = {"check": kind, "t": cfg["t"], "dim": int(np.size(cfg["x"]))}
        if kind in ("CKlow", "CKHH"):
            lhs, rhs, ok = oracle.ck_prop_check(kind, cfg)
            return {**base, "lhs": lhs, "rhs": rhs, "pass": bool(ok)}
        res = oracle.ck_residual(kind, cfg["t"], cfg["x"], cfg["y"], cfg["alpha"], H=cfg.get("H"))
        return {**base, "alpha": cfg["alpha"], "value": res, "pass": bool(res < 1e-8)}

    rows = _parallel(row, jobs)
    summary = {}
    for kind in counts:
        sel = [r for r in rows if r["check"] == kind]
        summary[kind] = {"configs": len(sel), "passed": sum(r["pass"] for r in sel)}
        if kind in ("gauss", "halfspace", "interval") and sel:
            summary[kind]["max_residual"] = max(r["value"] for r in sel)
    summary["all_pass"] = bool(all(r["pass"] for r in rows))
    plot = {"residuals": [(float(i), r["value"]) for i, r in enumerate(rows) if "value" in r]}
    return rows, summary, plot


PRESETS = {
    "ball-sharpness": (_preset_ball_sharpness, 900.0),
    "stadium-regimes": (_preset_stadium, 300.0),
    "power-sr": (_preset_power, 900.0),
    "ellipse-sq": (_preset_ellipse, 300.0),
    "halfcapsule-s1l": (_preset_halfcapsule, 600.0),
    "ck-suite": (_preset_ck, 600.0),
}


def _columns(rows):
    cols = []
    seen = set()
    for r in rows:
        for k in _flatten(r):
            if k not in seen:
                seen.add(k)
                cols.append(k)
    return cols


BRACKET_COLUMNS = ["t", "x", "y", "delta_x", "delta_y", "delta_mid", "gauss", "mc.mean", "mc.stderr",
                   "lower_i.value", "lower_ii.value", "upper_main.value",
                   "ratio_mc_lower_i", "ratio_mc_lower_ii", "ratio_mc_upper"]


def run_experiment(spec) -> Report:
    """Run a preset name, a spec dict or an :class:`ExperimentSpec`; write requested outputs."""
    if isinstance(spec, str):
        spec = ExperimentSpec(name=spec, preset=spec)
    elif isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    if spec.preset is not None:
        if spec.preset not in PRESETS:
            raise ValueError(f"unknown preset {spec.preset!r}; choose from {sorted(PRESETS)}")
        fn, ceiling = PRESETS[spec.preset]
    else:
        fn, ceiling = _preset_custom, float(spec.params.get("wall_clock_ceiling", 900.0))
    start = time.perf_counter()
    token = _finished.set([])
    try:
        rows, summary, plot = fn(spec)
    except Exception as exc:
        rows = _finished.get()
        partial = Report(spec.name, spec.to_dict(), rows, {"error": f"{type(exc).__name__}: {exc}", "partial": True},
                         {}, _columns(rows) if rows else ["row"], ceiling)
        raise ExperimentError(f"{spec.name} failed after {len(rows)} rows: {exc}", partial) from exc
    finally:
        _finished.reset(token)
    elapsed = time.perf_counter() - start
    if elapsed > ceiling:
        print(f"warning: {spec.name} took {elapsed:.1f}s, above its {ceiling:.0f}s ceiling", file=sys.stderr)
    cols = _columns(rows) if rows else (BRACKET_COLUMNS if spec.preset is None else ["row"])
    report = Report(spec.name, spec.to_dict(), rows, summary, plot, cols, ceiling)
    for fmt, path in (spec.outputs or {}).items():
        emit_report(report, fmt, path)
    return report


# -- output ----------------------------------------------------------------


def _fmt_float(v):
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return "%.12e" % v


def _plain(o):
    """Convert numpy scalars/arrays and tuples to plain Python containers."""
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(o)
    if isinstance(o, HalfSpace):
        return o.to_dict()
    return o


def _json(o, level=0):
    pad = "  " * (level + 1)
    end = "  " * level
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_json(o[k], level + 1)}" for k in sorted(o)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in o):
            return "[" + ", ".join(_json(v) for v in o) + "]"
        return "[\n" + ",\n".join(pad + _json(v, level + 1) for v in o) + "\n" + end + "]"
    if isinstance(o, bool):
        return "true" if o else "false"
    if isinstance(o, int):
        return str(o)
    if isinstance(o, float):
        return _fmt_float(o)
    if o is None:
        return "null"
    return json.dumps(o)


def _flatten(d, prefix=""):
    out = {}
    if isinstance(d, dict):
        for k, v in d.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(d, (list, tuple)) and any(isinstance(v, (dict, list, tuple)) for v in d):
        for i, v in enumerate(d):
            out.update(_flatten(v, f"{prefix}{i}."))
    else:
        out[prefix[:-1]] = d
    return out


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_csv_cell(x) for x in v)
    if v is None:
        return ""
    return str(v)


def report_bytes(report: Report, fmt="json") -> bytes:
    """Serialise a report deterministically."""
    if fmt == "json":
        return (_json(_plain(report.to_dict())) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        rows = [_flatten(_plain(r)) for r in report.rows]
        cols = report.columns or _columns(_plain(report.rows))
        w.writerow(cols)
        for r in rows:
            w.writerow([_csv_cell(r.get(c)) for c in cols])
        return buf.getvalue().encode()
    if fmt == "plotdata":
        parts = []
        for label in sorted(report.plot):
            lines = [f"# {label}"]
            lines += [f"{_fmt_float(a)} {_fmt_float(b)}" for a, b in report.plot[label]]
            parts.append("\n".join(lines) + "\n")
        return "\n".join(parts).encode()
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(report: Report, fmt, path):
    """Write ``report`` to ``path`` as ``json``, ``csv`` or ``plotdata``."""
    data = report_bytes(report, fmt)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


# -- invariant suites for ``convexheat verify`` --------------------------------


def _verify_kernels(seed):
    rng = _rng(seed, 4)
    out = []
    t = 1.0 / math.pi
    x, y = rng.uniform(0, 1, 50), rng.uniform(0, 1, 50)
    gap = float(np.max(np.abs(kernels.interval_kernel(t, x, y, method="images")
                              - kernels.interval_kernel(t, x, y, method="eigen"))))
    out.append(("interval image and sine series agree at the switch time", gap < 1e-12, gap))
    H = HalfSpace(np.array([0.0, 1.0]), 0.0)
    worst = 0.0
    for _ in range(200):
        t = float(rng.uniform(0.01, 2))
        X = np.array([rng.normal(), rng.uniform(0.1, 2)])
        Y = np.array([rng.normal(), rng.uniform(0.1, 2)])
        a = kernels.halfspace_kernel(t, X, Y, H, "product")
        b = kernels.halfspace_kernel(t, X, Y, H, "reflection")
        if H.dist(X) * H.dist(Y) / t >= 1e-2:
            worst = max(worst, abs(a - b) / a)
    out.append(("half-space product and reflection forms agree", worst < 1e-10, worst))
    xs, ys = rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)
    ts = rng.uniform(0.005, 1, 100)
    sym = float(np.max(np.abs(kernels.interval_kernel(ts, xs, ys) - kernels.interval_kernel(ts, ys, xs))))
    out.append(("interval kernel is symmetric", sym < 1e-12, sym))
    return out


def _verify_geometry(seed):
    rng = _rng(seed, 5)
    out = []
    catalog = [Ball(dim=2), make_domain("ellipse"), Stadium(), PowerDomain(1.0, 2.0, 2),
               make_domain({"kind": "box", "params": {"lower": [0, 0], "upper": [2, 1]}})]
    for D in catalog:
        P = D.sample_interior(rng, 200)
        Z, d, N = D._project(P)
        err = float(np.max(np.abs(np.linalg.norm(P - Z, axis=1) - d)))
        out.append((f"{D.kind}: distance equals distance to projection", err < 1e-9, err))
        inward = float(np.min(np.einsum("ij,ij->i", P - Z, N) - d))
        out.append((f"{D.kind}: normals point inward", inward > -1e-9, inward))
        if D.strictly_convex or D.kind == "stadium":
            W, Zb = D.sample_boundary(rng, 100), D.sample_boundary(rng, 100)
            worst = 0.0
            for w, z in zip(W, Zb):
                prof = np.array(characteristics.ratio_profile(D, w, z))
                prof = prof[np.isfinite(prof)]
                if prof.size > 1:
                    worst = max(worst, float(np.max(np.diff(prof))))
            out.append((f"{D.kind}: midpoint ratio non-increasing", worst <= 1e-8, worst))
    return out


def _verify_bounds(seed):
    rng = _rng(seed, 6)
    out = []
    for D in (Ball(dim=2), make_domain("ellipse"), Stadium()):
        lo_ratio, hi_ratio = math.inf, 0.0
        for _ in range(200):
            t = float(10 ** rng.uniform(-3, 0))
            x, y = D.sample_interior(rng, 2)
            li, lii = bounds.lower_bound_improved(D, t, x, y)
            r = li.factor / lii.factor
            lo_ratio, hi_ratio = min(lo_ratio, r), max(hi_ratio, r)
        out.append((f"{D.kind}: lower-bound forms within a factor 16", 1 / 16 <= lo_ratio and hi_ratio <= 16,
                    [lo_ratio, hi_ratio]))
    return out


def _verify_ck(seed):
    rep = run_experiment(ExperimentSpec(name="ck-suite", preset="ck-suite", budget={"seed": seed}))
    return [(f"{k}: {v['passed']}/{v['configs']} checks pass", v["passed"] == v["configs"], v.get("max_residual"))
            for k, v in rep.summary.items() if isinstance(v, dict)]


SUITES = {"kernels": _verify_kernels, "geometry": _verify_geometry, "bounds": _verify_bounds, "ck": _verify_ck}


def run_verify(suite="all", seed=0):
    """Run an invariant suite; returns a list of ``(name, passed, detail)``."""
    names = list(SUITES) if suite == "all" else [suite]
    out = []
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {n!r}; choose from {sorted(SUITES)} or 'all'")
        out.extend(SUITES[n](seed))
    return out
