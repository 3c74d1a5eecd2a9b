"""Estimators for the midpoint characteristics of a convex domain.

For boundary points ``w != z`` with midpoint ``m`` the Q-ratio is
``δ_D(m) / δ_{H_w}(m)`` where ``H_w`` is the tangent half-space at ``w``.
``Q_D`` is its infimum over all pairs.  ``R_D`` relaxes pairs whose midpoint
lies deeper than ``level`` (default 1): such a pair only needs some point of
the segment with ``δ_D > level`` where the ratio is large.  Because the
ratio decreases along the segment away from ``w``, that supremum sits at the
first point where ``δ_D`` reaches ``level``.

Both infima are estimated by random boundary pairs followed by
Nelder-Mead refinement in boundary coordinates.

Example
-------
>>> from convexheat.geometry import make_domain
>>> rep = qd_estimate(make_domain("interval"), budget=1000, seed=0)
>>> rep.q_hat, rep.r_hat
(1.0, 1.0)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .geometry import Domain, GeometryError

__all__ = [
    "CharacteristicReport",
    "ratio_profile",
    "pair_ratios",
    "qd_estimate",
    "rd_estimate",
    "classify",
    "comparability_check",
    "local_ratio_floor",
]

CHUNK = 8192
MIN_BUDGET = 1000
SKIP_TOL = 1e-12
# refinement can approach coincident pairs, where δ_D(mid) loses all digits
REFINE_SKIP_TOL = 1e-9
N_STARTS = 16
STABLE_REL = 0.05
DEFAULT_THRESHOLD = 0.02


@dataclass
class CharacteristicReport:
    domain: dict
    target: str
    q_hat: float
    r_hat: float
    argmin_pair: tuple
    samples: int
    refinement_trace: list
    skipped: int = 0
    classification: str = "inconclusive"
    threshold: float = DEFAULT_THRESHOLD
    strictly_convex: bool = True
    budget: int = 0
    seed: int = 0
    truncation_history: list = field(default_factory=list)

    @property
    def value(self):
        return self.q_hat if self.target == "Q" else self.r_hat

    def to_dict(self):
        d = asdict(self)
        d["argmin_pair"] = [list(map(float, p)) for p in self.argmin_pair]
        return d


def _on_boundary(domain, p):
    p = np.asarray(p, dtype=float)
    _, D, _ = domain.nearest(p)
    inside = domain.contains(p, closed=True)
    return inside and D <= 1e-9 * max(1.0, float(np.linalg.norm(p)))


def ratio_profile(domain: Domain, w, z, grid=64):
    """``δ_D/δ_{H_w}`` at ``(1-α)w + αz`` for ``α = k/grid``, ``k = 1..grid``.

    Entries where ``δ_{H_w}`` vanishes (both points on one flat face) are nan.
    """
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    if grid < 2:
        raise ValueError("grid must be at least 2")
    if np.array_equal(w, z):
        raise ValueError("w and z must differ")
    if not (_on_boundary(domain, w) and _on_boundary(domain, z)):
        raise GeometryError("w and z must lie on the boundary")
    al = np.arange(1, grid + 1) / grid
    M = (1 - al)[:, None] * w + al[:, None] * z
    D = domain._project(M)[1]
    Hw = domain.halfspace_dist(np.broadcast_to(w, M.shape), M)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(Hw > SKIP_TOL, D / Hw, np.nan)
    return out.tolist()


def _level_alpha(domain, W, Z, level, tol=1e-14, maxiter=100):
    """First ``α`` in ``(0, 1/2]`` with ``δ_D((1-α)w + αz) = level``.

    ``δ_D`` is concave along the segment, so the crossing is unique; it is
    found by the Illinois variant of regula falsi, vectorised over pairs.
    """
    def f(al, idx):
        P = (1 - al)[:, None] * W[idx] + al[:, None] * Z[idx]
        return domain._project(P)[1] - level

    m = W.shape[0]
    all_idx = np.arange(m)
    a, b = np.zeros(m), np.full(m, 0.5)
    fa, fb = np.full(m, -float(level)), f(b, all_idx)
    side = np.zeros(m, dtype=int)
    c = b.copy()
    act = all_idx[fb > 0]
    c[fb <= 0] = 0.5
    for _ in range(maxiter):
        if act.size == 0:
            break
        ca = (a[act] * fb[act] - b[act] * fa[act]) / (fb[act] - fa[act])
        fc = f(ca, act)
        c[act] = ca
        pos = fc > 0
        # replace the endpoint with the same sign; halve the stale one's value
        b[act] = np.where(pos, ca, b[act])
        fb[act] = np.where(pos, fc, np.where(side[act] == -1, fb[act] / 2, fb[act]))
        a[act] = np.where(pos, a[act], ca)
        fa[act] = np.where(pos, np.where(side[act] == 1, fa[act] / 2, fa[act]), fc)
        side[act] = np.where(pos, 1, -1)
        act = act[(b[act] - a[act] > tol) & (fc != 0)]
    return c


def pair_ratios(domain: Domain, W, Z, level=1.0, skip_tol=SKIP_TOL):
    """Q- and R-ratios for rows of boundary points ``W``, ``Z``.

    Returns ``(q, r, skipped)``; skipped pairs have ``q = r = inf``.
    """
    W = np.atleast_2d(W)
    Z = np.atleast_2d(Z)
    _, _, Nw = domain._project(W)
    M = 0.5 * (W + Z)
    Dm = domain._project(M)[1]
    Hm = np.einsum("ij,ij->i", M - W, Nw)
    skipped = Hm < skip_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(skipped, np.inf, Dm / Hm)
    r = q.copy()
    deep = ~skipped & (Dm > level)
    if deep.any():
        a = _level_alpha(domain, W[deep], Z[deep], level)
        Hz = np.einsum("ij,ij->i", Z[deep] - W[deep], Nw[deep])
        # ratio at the first point reaching the level; δ_{H_w} is linear in α
        r[deep] = level / (a * Hz)
    return q, r, int(skipped.sum())


def _chunk_rng(seed, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk])))


def _one_dim(domain, budget, seed, target, level):
    lo, hi = domain.bounding_box()
    W = np.array([[lo[0]], [hi[0]]])
    Z = W[::-1].copy()
    q, r, _ = pair_ratios(domain, W, Z, level)
    qv, rv = float(q.min()), float(r.min())
    val = qv if target == "Q" else rv
    return CharacteristicReport(
        domain.to_spec(), target, qv, rv, (W[0], Z[0]), 2, [(2, val)],
        strictly_convex=domain.strictly_convex, budget=budget, seed=seed,
    )


def _refine(domain, starts, level, target):
    """Nelder-Mead from each start; returns list of (value, u_w, u_z, evaluations)."""
    d = domain.boundary_param_dim
    col = 0 if target == "Q" else 1

    def obj(u):
        W = domain.boundary_point(u[:d])
        Z = domain.boundary_point(u[d:])
        return float(pair_ratios(domain, W, Z, level, REFINE_SKIP_TOL)[col][0])

    out = []
    for u0 in starts:
        res = minimize(obj, u0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400 * 2 * d, "maxfev": 400 * 2 * d})
        u = res.x if res.fun <= obj(u0) else u0
        out.append((min(res.fun, obj(u0)), u[:d], u[d:], int(res.nfev)))
    return out


def _estimate(domain: Domain, budget, seed, target, level=1.0, refine=True):
    if budget < MIN_BUDGET:
        raise ValueError(f"budget must be at least {MIN_BUDGET}")
    if domain.dim == 1:
        return _one_dim(domain, budget, seed, target, level)
    params = domain.boundary_param_dim is not None
    col = 0 if target == "Q" else 1

    best_q = (np.inf, None, None)
    best_r = (np.inf, None, None)
    trace = []
    skipped = 0
    keep = []  # (value, u_w, u_z) candidates for refinement
    nkeep = max(1, min(N_STARTS, budget // 100))
    done = 0
    chunk = 0
    while done < budget:
        k = min(CHUNK, budget - done)
        rng = _chunk_rng(seed, chunk)
        if params:
            Uw = domain.sample_boundary_params(rng, k)
            Uz = domain.sample_boundary_params(rng, k)
            W, Z = domain.boundary_point(Uw), domain.boundary_point(Uz)
        else:
            W, Z = domain.sample_boundary(rng, k), domain.sample_boundary(rng, k)
            Uw, Uz = W, Z
        q, r, s = pair_ratios(domain, W, Z, level)
        skipped += s
        i, j = int(np.argmin(q)), int(np.argmin(r))
        if q[i] < best_q[0]:
            best_q = (float(q[i]), W[i], Z[i])
        if r[j] < best_r[0]:
            best_r = (float(r[j]), W[j], Z[j])
        vals = q if target == "Q" else r
        order = np.argsort(vals, kind="stable")[:nkeep]
        keep.extend((float(vals[o]), Uw[o], Uz[o]) for o in order)
        keep.sort(key=lambda e: e[0])
        del keep[nkeep:]
        done += k
        chunk += 1
        trace.append((done, best_q[0] if target == "Q" else best_r[0]))

    samples = done
    if refine and params and keep:
        starts = [np.concatenate([uw, uz]) for _, uw, uz in keep if np.isfinite(_)]
        for val, uw, uz, nfev in _refine(domain, starts, level, target):
            samples += nfev
            W = domain.boundary_point(uw)
            Z = domain.boundary_point(uz)
            q, r, _ = pair_ratios(domain, W, Z, level, REFINE_SKIP_TOL)
            if q[0] < best_q[0]:
                best_q = (float(q[0]), W[0], Z[0])
            if r[0] < best_r[0]:
                best_r = (float(r[0]), W[0], Z[0])
            cur = best_q[0] if target == "Q" else best_r[0]
            trace.append((samples, min(cur, trace[-1][1])))

    # the Q-ratio never exceeds the R-ratio of the same pair
    for _, W, Z in (best_r,):
        if W is not None:
            q, _, _ = pair_ratios(domain, W[None], Z[None], level)
            if q[0] < best_q[0]:
                best_q = (float(q[0]), W, Z)
    best = best_q if target == "Q" else best_r
    pair = (best[1], best[2]) if best[1] is not None else (np.array([]), np.array([]))
    return CharacteristicReport(
        domain.to_spec(), target, float(best_q[0]), float(best_r[0]), pair, samples,
        [(int(a), float(b)) for a, b in trace], skipped,
        strictly_convex=domain.strictly_convex, budget=budget, seed=seed,
    )


def qd_estimate(domain: Domain, budget=100_000, seed=0, refine=True) -> CharacteristicReport:
    """Estimate ``Q_D`` (and, on the same samples, ``R_D``)."""
    return _estimate(domain, budget, seed, "Q", refine=refine)


def rd_estimate(domain: Domain, budget=100_000, seed=0, level=1.0, refine=True,
                max_doublings=4) -> CharacteristicReport:
    """Estimate ``R_D``.

    For unbounded domains the boundary is truncated and the truncation is
    doubled until ``r_hat`` moves by less than 5%.
    """
    if domain.bounded or not hasattr(domain, "with_truncation"):
        return _estimate(domain, budget, seed, "R", level, refine)
    history = []
    rep = _estimate(domain, budget, seed, "R", level, refine)
    history.append((domain.truncation, rep.r_hat))
    cur = domain
    for _ in range(max_doublings):
        cur = cur.with_truncation(2 * cur.truncation)
        nxt = _estimate(cur, budget, seed, "R", level, refine)
        history.append((cur.truncation, nxt.r_hat))
        stable = abs(nxt.r_hat - rep.r_hat) <= STABLE_REL * max(rep.r_hat, 1e-300)
        rep = nxt
        if stable:
            break
    rep.truncation_history = [(float(a), float(b)) for a, b in history]
    return rep


def _stable(values):
    """Relative change between the last two entries is below 5%."""
    a, b = values[-2], values[-1]
    return abs(b - a) < STABLE_REL * max(abs(a), 1e-300)


def classify(domain: Domain, reports, q_hat_threshold=DEFAULT_THRESHOLD):
    """Return ``"S_Q"``, ``"S_R"``, ``"neither"`` or ``"inconclusive"``.

    ``reports`` come from runs at increasing budgets, each at least four
    times the previous one.
    """
    if len(reports) < 2:
        raise ValueError("classification needs reports at two or more budgets")
    spec = domain.to_spec()
    base = {k: v for k, v in spec["params"].items() if k != "truncation"}
    for rep in reports:
        other = {k: v for k, v in rep.domain["params"].items() if k != "truncation"}
        if rep.domain["kind"] != spec["kind"] or other != base:
            raise ValueError("reports refer to different domains")
    reports = sorted(reports, key=lambda r: r.budget)
    for a, b in zip(reports, reports[1:]):
        if b.budget < 4 * a.budget:
            raise ValueError("successive budgets must grow at least fourfold")
    q = [r.q_hat for r in reports]
    r = [r.r_hat for r in reports]
    if not domain.strictly_convex:
        return "neither"
    if domain.bounded and _stable(q) and q[-1] > q_hat_threshold:
        return "S_Q"
    if _stable(r) and r[-1] > q_hat_threshold:
        return "S_R"
    if r[-1] < q_hat_threshold and r[-1] < (1 - STABLE_REL) * r[-2]:
        return "neither"
    return "inconclusive"


def comparability_check(domain: Domain, q_hat, pairs=10_000, seed=0):
    """Check ``δ_D(m) <= δ_{H_x}(m) <= (3/q_hat) δ_D(m)`` on random interior pairs.

    ``H_x`` is the tangent half-space at the boundary point nearest ``x`` and
    ``m`` the midpoint of ``x, y``.
    """
    rng = _chunk_rng(seed, 0)
    X = domain.sample_interior(rng, pairs)
    Y = domain.sample_interior(rng, pairs)
    M = 0.5 * (X + Y)
    dD = domain._project(M)[1]
    Zx, _, Nx = domain._project(X)
    dH = np.einsum("ij,ij->i", M - Zx, Nx)
    bound = 3.0 / q_hat
    # closest-point ties put x on the normal of either tangent; both satisfy the bounds
    low = dD <= dH * (1 + 1e-12) + 1e-15
    high = dH <= bound * dD * (1 + 1e-12) + 1e-15
    ratio = dH / np.where(dD > 0, dD, np.nan)
    return {
        "pairs": int(pairs),
        "bound": float(bound),
        "max_ratio": float(np.nanmax(ratio)),
        "lower_violations": int((~low).sum()),
        "upper_violations": int((~high).sum()),
        "passed": bool(low.all() and high.all()),
    }


def local_ratio_floor(domain, pairs=20_000, seed=0):
    """Smallest Q-ratio over boundary pairs with ``|z~ - w~| < |w~|/2``.

    ``w~`` is the projection of a power-domain boundary point onto the first
    ``n-1`` coordinates.
    """
    rng = _chunk_rng(seed, 1)
    Uw = domain.sample_boundary_params(rng, pairs)
    m = Uw.shape[1]
    G = rng.standard_normal((pairs, m))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    rad = 0.5 * np.linalg.norm(Uw, axis=1) * rng.random(pairs) ** (1.0 / m)
    Uz = Uw + G * rad[:, None]
    q, _, _ = pair_ratios(domain, domain.boundary_point(Uw), domain.boundary_point(Uz))
    return float(np.nanmin(q))
