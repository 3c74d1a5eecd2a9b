"""Heat kernel bounds as auditable products of min-terms.

Each bound is ``constant * p(t,x,y) * factor`` where the factor is built
from terms ``m(a) = 1 ∧ a/t``.  Bounds are returned as
:class:`BoundBreakdown` so the individual terms can be inspected; the
unknown constants are left at 1 and calibrated against oracles elsewhere.

The ``*_factors`` helpers are batched over ``(m, n)`` arrays of points and
back the single-point public functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, GeometryError, HalfSpace, HalfSpaceDomain, Box, angle_between
from .kernels import box_kernel, gauss_kernel, halfspace_kernel

__all__ = [
    "BoundBreakdown",
    "upper_bound_main",
    "upper_bound_midpoint",
    "wedge_obtuse_upper",
    "lower_bound_basic",
    "lower_bound_improved",
    "zhang_bound",
    "two_sided_factor",
    "exit_density_estimate",
    "main_factors",
    "improved_factors",
]


def _prod(f, a, b):
    return f[a] * f[b]


# how each kind composes its named min-terms into the bracketed factor
_COMPOSE = {
    "upper_main": lambda f: f["dd"] + _prod(f, "hx", "hy"),
    "upper_midpoint": lambda f: f["dd"] + _prod(f, "hx_mid", "hy_mid"),
    "wedge_obtuse": lambda f: f["dd"] + _prod(f, "h1", "h2"),
    "lower_basic": lambda f: f["dd"],
    "lower_improved_i": lambda f: _prod(f, "x_mid_sqrt", "y_mid_sqrt"),
    "lower_improved_ii": lambda f: f["dd"] + _prod(f, "x_mid", "y_mid"),
    "two_sided_sq": lambda f: f["dd"] + _prod(f, "x_mid", "y_mid"),
    "two_sided_sr": lambda f: f["dd"] + _prod(f, "hx", "hy"),
}


@dataclass
class BoundBreakdown:
    """``value = constant * gaussian * factor``; ``factors`` are the min-terms."""

    kind: str
    value: float
    gaussian: float
    factor: float
    factors: dict = field(default_factory=dict)
    constant: float = 1.0

    @classmethod
    def build(cls, kind, gaussian, factors, constant=1.0):
        factors = {k: float(v) for k, v in factors.items()}
        f = float(_COMPOSE[kind](factors))
        return cls(kind, constant * gaussian * f, float(gaussian), f, factors, float(constant))

    def recompose(self):
        """Recompute the value from the stored parts."""
        return self.constant * self.gaussian * _COMPOSE[self.kind](self.factors)

    def to_dict(self):
        return {
            "kind": self.kind,
            "value": self.value,
            "gaussian": self.gaussian,
            "factor": self.factor,
            "constant": self.constant,
            "factors": dict(self.factors),
        }


def m(a, t):
    """The min-term ``1 ∧ a/t``."""
    return np.minimum(1.0, np.asarray(a, dtype=float) / t)


def _check_time(t, T=None):
    if not t > 0:
        raise ValueError("time must be positive")
    if T is not None and t > T:
        raise ValueError(f"t={t} exceeds the horizon T={T}")


def _pair(domain: Domain, x, y):
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    domain._checked(X)
    domain._checked(Y)
    return X, Y


def _tangent_dists(domain, X, Y):
    """``δ_D(x)`` and ``δ_{H_x}(y)`` for each row, H_x the supporting half-space at x."""
    Zx, Dx, Nx = domain._project(X)
    if not np.all(domain._has_tangent(Zx)):
        raise GeometryError(f"no tangent hyperplane at a corner of the {domain.kind}")
    Hy = np.maximum(np.einsum("ij,ij->i", Y - Zx, Nx), 0.0)
    return Dx, Hy


def main_factors(domain, t, X, Y, midpoint=False):
    """Batched min-terms of the main upper bound (or its midpoint variant)."""
    X, Y = _pair(domain, X, Y)
    Dx, HxY = _tangent_dists(domain, X, Y)
    Dy, HyX = _tangent_dists(domain, Y, X)
    out = {"dd": m(Dx * Dy, t)}
    if midpoint:
        M = 0.5 * (X + Y)
        _, HxM = _tangent_dists(domain, X, M)
        _, HyM = _tangent_dists(domain, Y, M)
        out["hx_mid"] = m(Dx * HxM, t)
        out["hy_mid"] = m(Dy * HyM, t)
    else:
        out["hx"] = m(Dx * HxY, t)
        out["hy"] = m(Dy * HyX, t)
    return out


def improved_factors(domain, t, X, Y):
    """Batched min-terms of both improved lower-bound forms."""
    X, Y = _pair(domain, X, Y)
    Dx = domain._project(X)[1]
    Dy = domain._project(Y)[1]
    Dm = domain._project(0.5 * (X + Y))[1]
    s = math.sqrt(t)
    return {
        "dd": m(Dx * Dy, t),
        "x_mid": m(Dx * Dm, t),
        "y_mid": m(Dy * Dm, t),
        "x_mid_sqrt": m(Dx * (Dm + s), t),
        "y_mid_sqrt": m(Dy * (Dm + s), t),
    }


def _single(kind, t, x, y, factors, keys):
    g = gauss_kernel(t, np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return BoundBreakdown.build(kind, g, {k: factors[k][0] for k in keys})


def upper_bound_main(domain: Domain, t, x, y, T=1.0) -> BoundBreakdown:
    """``p [ m(δ(x)δ(y)) + m(δ_{H_x}(x)δ_{H_x}(y)) m(δ_{H_y}(y)δ_{H_y}(x)) ]``."""
    _check_time(t, T)
    if not domain.inner_ball_radius > 0:
        raise GeometryError(f"{domain.kind} has no inner ball of positive radius")
    f = main_factors(domain, t, x, y)
    return _single("upper_main", t, x, y, f, ("dd", "hx", "hy"))


def upper_bound_midpoint(domain: Domain, t, x, y, T=1.0) -> BoundBreakdown:
    """Main upper bound with the cross distances taken at the midpoint."""
    _check_time(t, T)
    if not domain.inner_ball_radius > 0:
        raise GeometryError(f"{domain.kind} has no inner ball of positive radius")
    f = main_factors(domain, t, x, y, midpoint=True)
    return _single("upper_midpoint", t, x, y, f, ("dd", "hx_mid", "hy_mid"))


def wedge_obtuse_upper(H1: HalfSpace, H2: HalfSpace, t, x, y) -> BoundBreakdown:
    """Upper bound on ``H1 ∩ H2`` when the opening angle is at least π/2."""
    _check_time(t)
    if angle_between(H1, H2) < math.pi / 2 - 1e-12:
        raise ValueError("wedge is acute; use the main upper bound instead")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d1x, d1y, d2x, d2y = H1.dist(x), H1.dist(y), H2.dist(x), H2.dist(y)
    if min(d1x, d1y, d2x, d2y) < -1e-12:
        raise GeometryError("point outside the wedge")
    f = {
        "dd": m(min(d1x, d2x) * min(d1y, d2y), t),
        "h1": m(d1x * d1y, t),
        "h2": m(d2x * d2y, t),
    }
    return BoundBreakdown.build("wedge_obtuse", gauss_kernel(t, x, y), f)


def lower_bound_basic(domain: Domain, t, x, y) -> BoundBreakdown:
    """``p(t,x,y) (1 ∧ δ(x)δ(y)/t)``."""
    _check_time(t)
    X, Y = _pair(domain, x, y)
    dd = domain._project(X)[1] * domain._project(Y)[1]
    return _single("lower_basic", t, x, y, {"dd": m(dd, t)}, ("dd",))


def lower_bound_improved(domain: Domain, t, x, y):
    """Both improved lower-bound forms ``(i, ii)`` using ``δ((x+y)/2)``.

    (i)  ``p m(δ(x)(δ(mid)+√t)) m(δ(y)(δ(mid)+√t))``
    (ii) ``p [ m(δ(x)δ(y)) + m(δ(x)δ(mid)) m(δ(y)δ(mid)) ]``
    """
    _check_time(t)
    f = improved_factors(domain, t, x, y)
    first = _single("lower_improved_i", t, x, y, f, ("x_mid_sqrt", "y_mid_sqrt"))
    second = _single("lower_improved_ii", t, x, y, f, ("dd", "x_mid", "y_mid"))
    return first, second


def zhang_bound(t, x, y, dx, dy, c_pairs):
    """Two-sided bound with unspecified Gaussian constants.

    ``c_pairs = ((c1, c2), (c3, c4))``; returns
    ``c1 m(δxδy) t^{-n/2} e^{-c2|x-y|^2/t}`` and the same with ``(c3, c4)``.
    """
    _check_time(t)
    (c1, c2), (c3, c4) = c_pairs
    if min(c1, c2, c3, c4) <= 0:
        raise ValueError("constants must be positive")
    if dx < 0 or dy < 0:
        raise ValueError("distances must be non-negative")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    r2 = float(np.sum((x - y) ** 2))
    base = float(m(dx * dy, t)) * t ** (-n / 2)
    return c1 * base * math.exp(-c2 * r2 / t), c3 * base * math.exp(-c4 * r2 / t)


def two_sided_factor(domain: Domain, t, x, y, variant="SQ") -> BoundBreakdown:
    """Factor that is two-sided on the Q class (``SQ``) or the R class (``SR``)."""
    _check_time(t)
    if variant == "SQ":
        if not domain.strictly_convex:
            raise GeometryError(f"the SQ factor needs a strictly convex domain, got {domain.kind}")
        f = improved_factors(domain, t, x, y)
        return _single("two_sided_sq", t, x, y, f, ("dd", "x_mid", "y_mid"))
    if variant == "SR":
        f = main_factors(domain, t, x, y)
        return _single("two_sided_sr", t, x, y, f, ("dd", "hx", "hy"))
    raise ValueError(f"unknown variant {variant!r}")


def _exact_kernel(domain):
    if isinstance(domain, HalfSpaceDomain):
        return lambda t, x, y: halfspace_kernel(t, x, y, domain.H)
    if isinstance(domain, Box):
        return lambda t, x, y: box_kernel(t, x, y, domain.lower, domain.upper)
    raise ValueError(f"no exact kernel for {domain.kind}; use kernel_source='mc'")


def exit_density_estimate(domain: Domain, t, x, z, eps, kernel_source="exact", kappa=1.0, **mc_options):
    """Exit time/place density from ``κ p_D(t, x, z + ε n_z) / ε``.

    ``kernel_source`` is ``"exact"`` (half-space, interval, box), ``"mc"``
    (bridge Monte Carlo, options forwarded) or a callable ``k(t, x, y)``.
    ``kappa=1`` makes the density integrate to one over time and place.
    """
    _check_time(t)
    r = domain.inner_ball_radius
    if not (0 < eps < r / 4):
        raise ValueError(f"eps must lie in (0, {r / 4})")
    z = np.asarray(z, dtype=float)
    Z, D, N = domain.nearest(z)
    if D > 1e-9 * max(1.0, float(np.linalg.norm(z))):
        raise GeometryError("z is not a boundary point")
    y = z + eps * N
    if callable(kernel_source):
        k = kernel_source
    elif kernel_source == "exact":
        k = _exact_kernel(domain)
    elif kernel_source == "mc":
        from .oracle import mc_kernel

        def k(t, x, y):
            return mc_kernel(domain, t, x, y, **mc_options).mean
    else:
        raise ValueError(f"unknown kernel source {kernel_source!r}")
    return kappa * float(k(t, np.asarray(x, dtype=float), y)) / eps
