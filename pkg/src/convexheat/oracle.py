"""Numerical ground truth for Dirichlet heat kernels.

Two independent routes:

* :func:`mc_kernel` simulates Brownian bridges from ``x`` to ``y`` and
  weights each sub-step by the exact half-space survival probability of the
  tangent half-space at the closer endpoint.  The result is exact in
  distribution for a half-space and biased upwards for other convex sets.
* :func:`ck_residual` and :func:`ck_prop_check` integrate products of
  kernels by adaptive Gauss-Kronrod cubature.

Monte Carlo randomness comes from Philox streams keyed by
``(seed, chunk index)`` with a fixed chunk size, and chunk results are
reduced in chunk order, so estimates do not depend on the worker count.
"""

from __future__ import annotations

import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import cubature
from scipy.special import gamma

from .geometry import Box, Domain, HalfSpace, HalfSpaceDomain
from .kernels import box_kernel, gauss_kernel, halfspace_kernel, interval_kernel

__all__ = [
    "McEstimate",
    "bridge_survival",
    "mc_kernel",
    "ck_residual",
    "ck_prop_check",
    "ckhh_constant",
    "monotonicity_check",
]

CHUNK = 8192
THREADS_ENV = "CONVEXHEAT_THREADS"
# Gaussian windows extend this many standard deviations (tail < e^-98)
WINDOW = 14.0


@dataclass
class McEstimate:
    mean: float
    stderr: float
    paths: int
    steps: int
    seed: int
    bias_note: str = "upper-biased"

    def to_dict(self):
        return asdict(self)


def _threads(workers):
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def _chunk_rng(seed, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk])))


def _simulate_chunk(domain, t, x, y, steps, size, seed, chunk):
    """Sum of survival weights and of their squares over one chunk of paths."""
    rng = _chunk_rng(seed, chunk)
    n = x.shape[0]
    dt = t / steps
    Z = np.broadcast_to(x, (size, n)).copy()
    P, D, N = domain._project(Z)
    w = np.ones(size)
    idx = np.arange(size)
    for k in range(steps):
        xi = rng.standard_normal((size, n))
        left = steps - k
        if left == 1:
            Znew = np.broadcast_to(y, (idx.size, n)).copy()
        else:
            Znew = Z + (y - Z) / left + math.sqrt(2.0 * dt * (left - 1) / left) * xi[idx]
        inside = domain._inside(Znew) > 0
        Pn, Dn, Nn = domain._project(Znew)
        # supporting half-space at the boundary point nearest to the closer endpoint
        near = (D <= Dn)[:, None]
        Pc = np.where(near, P, Pn)
        Nc = np.where(near, N, Nn)
        a = np.maximum(np.einsum("ij,ij->i", Z - Pc, Nc), 0.0)
        b = np.maximum(np.einsum("ij,ij->i", Znew - Pc, Nc), 0.0)
        w = w * np.where(inside, -np.expm1(-a * b / dt), 0.0)
        alive = w > 0
        if not alive.all():
            idx, w = idx[alive], w[alive]
            Znew, Pn, Dn, Nn = Znew[alive], Pn[alive], Dn[alive], Nn[alive]
            if idx.size == 0:
                break
        Z, P, D, N = Znew, Pn, Dn, Nn
    return float(np.sum(w)), float(np.sum(w * w))


def _validate(domain: Domain, t, x, y, steps, paths):
    if not t > 0:
        raise ValueError("time must be positive")
    if steps < 2 or steps & (steps - 1):
        raise ValueError("steps must be a power of two, at least 2")
    if paths < 100:
        raise ValueError("paths must be at least 100")
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    domain._checked(x)
    domain._checked(y)
    return x, y


def bridge_survival(domain: Domain, t, x, y, steps=256, paths=100_000, seed=0,
                    workers=None, progress=None) -> McEstimate:
    """Probability that a Brownian bridge from ``x`` to ``y`` over ``[0, t]`` stays in ``domain``.

    Increments have variance ``2 dt`` per coordinate, matching ``u_t = Δu``.
    """
    x, y = _validate(domain, t, x, y, steps, paths)
    if min(domain.dist(x), domain.dist(y)) <= 0:
        return McEstimate(0.0, 0.0, paths, steps, seed)
    sizes = [CHUNK] * (paths // CHUNK)
    if paths % CHUNK:
        sizes.append(paths % CHUNK)
    if progress is None:
        progress = paths * steps >= 1 << 28

    def job(c):
        return _simulate_chunk(domain, t, x, y, steps, sizes[c], seed, c)

    nthreads = _threads(workers)
    results = []
    done = 0
    if nthreads == 1:
        it = map(job, range(len(sizes)))
        pool = None
    else:
        pool = ThreadPoolExecutor(nthreads)
        it = pool.map(job, range(len(sizes)))
    try:
        for c, r in enumerate(it):
            results.append(r)
            done += sizes[c]
            if progress:
                s = sum(v[0] for v in results)
                print(f"bridge_survival: {done}/{paths} paths, running mean {s / done:.6e}", file=sys.stderr)
    finally:
        if pool is not None:
            pool.shutdown()
    s1 = sum(r[0] for r in results)
    s2 = sum(r[1] for r in results)
    mean = s1 / paths
    var = max(s2 - paths * mean * mean, 0.0) / (paths - 1)
    return McEstimate(mean, math.sqrt(var / paths), paths, steps, seed)


def mc_kernel(domain: Domain, t, x, y, steps=256, paths=100_000, seed=0,
              workers=None, progress=None) -> McEstimate:
    """Monte Carlo ``p_D(t,x,y) = p(t,x,y) · P(bridge stays in D)``."""
    est = bridge_survival(domain, t, x, y, steps, paths, seed, workers, progress)
    p = gauss_kernel(t, np.asarray(x, dtype=float).reshape(-1), np.asarray(y, dtype=float).reshape(-1))
    est.mean *= p
    est.stderr *= p
    return est


# -- quadrature ----------------------------------------------------------


def _integrate(f, lo, hi, tol):
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    res = cubature(f, lo, hi, rule="gk21", rtol=tol, atol=0.0, max_subdivisions=100_000)
    if res.status != "converged":
        raise RuntimeError(f"quadrature did not converge (error estimate {res.error:.3e})")
    return float(res.estimate), float(res.error)


def _frame(normal):
    """Orthonormal matrix whose first row is ``normal``."""
    n = normal.shape[0]
    Q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
    Q = Q[:, :n].T
    if Q[0] @ normal < 0:
        Q = -Q
    return Q


def _kernel(kernel, H, interval):
    if kernel == "gauss":
        return gauss_kernel
    if kernel == "halfspace":
        return lambda t, x, z: halfspace_kernel(t, x, z, H)
    if kernel == "interval":
        a, b = interval
        return lambda t, x, z: interval_kernel(t, x[..., 0], z[..., 0], a, b)
    raise ValueError(f"unsupported kernel {kernel!r}")


def ck_residual(kernel, t, x, y, alpha, quadrature_tol=1e-11, H: HalfSpace | None = None,
                interval=(0.0, 1.0)):
    """Relative defect of the semigroup identity ``∫ k(αt,x,z) k((1-α)t,z,y) dz = k(t,x,y)``.

    ``kernel`` is ``"gauss"``, ``"halfspace"`` (needs ``H``) or ``"interval"``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not t > 0:
        raise ValueError("time must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = x.shape[0]
    if n > 3:
        raise ValueError("quadrature supports dimension n <= 3")
    if kernel == "halfspace" and H is None:
        raise ValueError("halfspace kernel needs H")
    if kernel == "interval" and n != 1:
        raise ValueError("interval kernel is one-dimensional")
    k = _kernel(kernel, H, interval)
    c = (1 - alpha) * x + alpha * y
    w = WINDOW * math.sqrt(2 * alpha * (1 - alpha) * t)

    if kernel == "halfspace":
        Q = _frame(H.normal)
        base = H.offset * H.normal
        cc = Q @ (c - base)
        lo, hi = cc - w, cc + w
        lo[0] = max(lo[0], 0.0)
        to_z = lambda U: base + U @ Q
    else:
        lo, hi = c - w, c + w
        if kernel == "interval":
            lo = np.maximum(lo, interval[0])
            hi = np.minimum(hi, interval[1])
        to_z = lambda U: U

    def integrand(U):
        Z = to_z(U)
        return k(alpha * t, x, Z) * k((1 - alpha) * t, Z, y)

    lhs, _ = _integrate(integrand, lo, hi, quadrature_tol)
    rhs = float(k(t, x, y))
    return abs(lhs - rhs) / rhs


def ckhh_constant(a, b, n):
    """``E[(1+|U|)^(a+b)]`` for ``U`` with density ``e^{-|u|^2}/π^{n/2}`` in ``R^n``.

    Multiplying the right side of the two-half-space moment bound by this
    constant makes it a true inequality: ``δ_H(z) <= δ_H(mid) + |z-mid|``.
    """
    s = a + b
    f = lambda r: (1 + r[:, 0]) ** s * r[:, 0] ** (n - 1) * np.exp(-r[:, 0] ** 2)
    val, _ = _integrate(f, [0.0], [WINDOW], 1e-12)
    return val / (gamma(n / 2) / 2)


def _cklow(params, tol):
    n = int(params["n"])
    t, al = float(params["t"]), float(params["alpha"])
    x = np.asarray(params["x"], dtype=float)
    y = np.asarray(params["y"], dtype=float)
    a = np.asarray(params["a"], dtype=float)
    r = float(params["r"])
    c = (1 - al) * x + al * y
    d = float(np.linalg.norm(a - c))
    sig = math.sqrt(2 * al * (1 - al) * t)
    # rho window where the bridge density is not negligible
    rlo = max(0.0, d - WINDOW * sig)
    rhi = min(r, d + WINDOW * sig)
    if rhi <= rlo:
        lhs = 0.0
    else:
        if n == 1:
            def f(U):
                Z = U[:, :1]
                return gauss_kernel(al * t, x, Z) * gauss_kernel((1 - al) * t, Z, y)
            zlo = max(a[0] - r, c[0] - WINDOW * sig)
            zhi = min(a[0] + r, c[0] + WINDOW * sig)
            lhs = _integrate(f, [zlo], [zhi], tol)[0] if zhi > zlo else 0.0
        elif n == 2:
            def f(U):
                rho, th = U[:, 0], U[:, 1]
                Z = a + rho[:, None] * np.column_stack([np.cos(th), np.sin(th)])
                return gauss_kernel(al * t, x, Z) * gauss_kernel((1 - al) * t, Z, y) * rho
            lhs = _integrate(f, [rlo, 0.0], [rhi, 2 * math.pi], tol)[0]
        elif n == 3:
            def f(U):
                rho, th, ph = U[:, 0], U[:, 1], U[:, 2]
                Z = a + rho[:, None] * np.column_stack(
                    [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
                return gauss_kernel(al * t, x, Z) * gauss_kernel((1 - al) * t, Z, y) * rho ** 2 * np.sin(th)
            lhs = _integrate(f, [rlo, 0.0, 0.0], [rhi, math.pi, 2 * math.pi], tol)[0]
        else:
            raise ValueError("quadrature supports dimension n <= 3")
    q = al * (1 - al) * t
    rhs = (math.exp(-d * d / (2 * q) - 1) / (2 ** n * gamma((n + 2) / 2))
           * min(1.0, r * r / q) ** (n / 2) * gauss_kernel(t, x, y))
    return lhs, float(rhs), lhs >= rhs


def _wedge_coords(H1, H2):
    """Frame ``(e1, e2, rest)`` with ``δ1 = u`` and ``δ2 = c u + s v + k``."""
    n1, n2 = H1.normal, H2.normal
    c = float(n1 @ n2)
    Q = _frame(n1)
    r = n2 - c * n1
    s = float(np.linalg.norm(r))
    if s > 1e-12:
        e2 = r / s
        # replace the second axis by e2 and re-orthonormalise the rest
        M = np.column_stack([n1, e2, Q[1:].T])
        Qf, _ = np.linalg.qr(M)
        Qf = Qf[:, : n1.shape[0]].T
        Qf[0] *= np.sign(Qf[0] @ n1)
        Qf[1] *= np.sign(Qf[1] @ e2)
        Q = Qf
    else:
        s = 0.0
    z0 = H1.offset * n1
    k = float(n2 @ z0 - H2.offset)
    return Q, z0, c, s, k


def _ckhh(params, tol):
    H1 = HalfSpace(np.asarray(params["normals"][0], dtype=float), params["offsets"][0])
    H2 = HalfSpace(np.asarray(params["normals"][1], dtype=float), params["offsets"][1])
    ea, eb = float(params["a"]), float(params["b"])
    t = float(params["t"])
    x = np.asarray(params["x"], dtype=float)
    y = np.asarray(params["y"], dtype=float)
    n = x.shape[0]
    if n > 3:
        raise ValueError("quadrature supports dimension n <= 3")
    mid = 0.5 * (x + y)
    if min(H1.dist(x), H1.dist(y), H2.dist(x), H2.dist(y)) < 0:
        raise ValueError("x and y must lie in the wedge")
    Q, z0, c, s, k = _wedge_coords(H1, H2)
    # in the frame Q the weights depend on the first m coordinates only; the
    # Gaussian product over the remaining ones integrates to p(t) exactly
    m = 2 if (s > 0 and n > 1) else 1
    X, Y = Q @ (x - z0), Q @ (y - z0)
    rest = float(gauss_kernel(t, X[m:], Y[m:])) if n > m else 1.0
    Xm, Ym = X[:m], Y[:m]
    mc = 0.5 * (Xm + Ym)
    w = WINDOW * math.sqrt(t / 2)
    lo, hi = mc - w, mc + w
    lo[0] = max(lo[0], 0.0)

    def integrand(U):
        u = U[:, 0]
        if m == 2:
            # v runs from the wedge face (or window edge) to the window top
            vlo = np.maximum((-k - c * u) / s, lo[1])
            span = np.maximum(hi[1] - vlo, 0.0)
            v = vlo + U[:, 1] * span
            V = np.column_stack([u, v])
            d2 = c * u + s * v + k
            jac = span
        else:
            V = U
            d2 = c * u + k
            jac = 1.0
        ok = d2 >= 0
        d2 = np.maximum(d2, 0.0)
        val = gauss_kernel(t / 2, Xm, V) * gauss_kernel(t / 2, V, Ym) * u ** ea * d2 ** eb
        return np.where(ok, val, 0.0) * jac * rest

    lo_q, hi_q = lo.copy(), hi.copy()
    if m == 2:
        lo_q[1], hi_q[1] = 0.0, 1.0
    # split the u range where the lower v limit switches from window edge to wedge face
    cuts = [lo_q[0], hi_q[0]]
    if m == 2 and c != 0:
        u_kink = (-k - s * lo[1]) / c
        if lo_q[0] < u_kink < hi_q[0]:
            cuts.insert(1, u_kink)
    elif m == 1 and c != 0:
        u_face = -k / c
        if lo_q[0] < u_face < hi_q[0]:
            cuts.insert(1, u_face)
    lhs = err = 0.0
    for u0, u1 in zip(cuts, cuts[1:]):
        if u1 <= u0:
            continue
        a_, b_ = lo_q.copy(), hi_q.copy()
        a_[0], b_[0] = u0, u1
        v, e = _integrate(integrand, a_, b_, tol)
        lhs += v
        err += e
    st = math.sqrt(t)
    base = gauss_kernel(t, x, y) * (st + H1.dist(mid)) ** ea * (st + H2.dist(mid)) ** eb
    rhs = ckhh_constant(ea, eb, n) * float(base)
    # quadrature error is allowed for: the bound is tight when both exponents vanish
    return lhs, rhs, lhs - err <= rhs


def ck_prop_check(which, params, sample_config=None):
    """Check one of the two kernel-product inequalities by quadrature.

    ``CKlow`` params: ``n, t, alpha, x, y, a, r``; passes iff
    ``∫_{B(a,r)} p(αt,x,z) p((1-α)t,z,y) dz`` is at least the explicit
    Gaussian lower bound.  ``CKHH`` params: ``normals, offsets, a, b, t, x, y``;
    passes iff the weighted integral over ``H1 ∩ H2`` is at most
    :func:`ckhh_constant` times ``p(t,x,y)(√t+δ1(mid))^a (√t+δ2(mid))^b``.

    ``sample_config`` may carry ``{"tol": ...}`` for the quadrature.
    Returns ``(lhs, rhs, passed)``.
    """
    cfg = sample_config or {}
    if which == "CKlow":
        return _cklow(params, cfg.get("tol", 1e-10))
    if which == "CKHH":
        return _ckhh(params, cfg.get("tol", 1e-7))
    raise ValueError(f"unknown proposition {which!r}")


# -- domain monotonicity -------------------------------------------------


def _exact(domain):
    if isinstance(domain, HalfSpaceDomain):
        return lambda t, x, y: halfspace_kernel(t, x, y, domain.H)
    if isinstance(domain, Box):
        return lambda t, x, y: box_kernel(t, x, y, domain.lower, domain.upper)
    raise ValueError(f"no exact kernel for {domain.kind}")


def _check_containment(D1: Domain, D2: Domain, seed=0, k=1000):
    rng = np.random.default_rng(seed)
    pts = []
    if D1.bounded:
        pts.append(D1.sample_interior(rng, k))
    try:
        pts.append(D1.sample_boundary(rng, k))
    except NotImplementedError:
        pass
    P = np.concatenate(pts)
    if not np.all(D2.contains(P, closed=True)):
        raise ValueError("containment violated: sampled point of D1 lies outside D2")


def monotonicity_check(D1: Domain, D2: Domain, t, x, y, mode="exact", **mc_options):
    """Check ``p_{D1} <= p_{D2}`` for ``D1 ⊂ D2``; returns ``(p1, p2, passed)``."""
    _check_containment(D1, D2)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if mode == "exact":
        p1 = float(_exact(D1)(t, x, y))
        p2 = float(_exact(D2)(t, x, y))
        return p1, p2, p1 <= p2
    if mode == "mc":
        e1 = mc_kernel(D1, t, x, y, **mc_options)
        e2 = mc_kernel(D2, t, x, y, **mc_options)
        slack = 3 * math.hypot(e1.stderr, e2.stderr)
        return e1.mean, e2.mean, e1.mean <= e2.mean + slack
    raise ValueError(f"unknown mode {mode!r}")
