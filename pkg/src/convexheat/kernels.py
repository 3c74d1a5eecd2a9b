"""Closed-form heat kernels for the equation ``u_t = Δu``.

The Gaussian ``p(t, x, y) = (4πt)^{-n/2} exp(-|x-y|^2 / 4t)`` is the
reference; the half-space, interval and box kernels are exact Dirichlet
kernels.  Functions broadcast over leading batch axes: points have shape
``(..., n)`` and the result has shape ``(...)``.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Ball, HalfSpace

__all__ = [
    "gauss_kernel",
    "halfspace_kernel",
    "halfspace_survival",
    "interval_kernel",
    "box_kernel",
    "ball_h_factor",
    "vdb_factor",
    "vdb_lower",
]

# terms beyond exp(-TAIL) are below 1e-18 of the leading term
TAIL = 41.5


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("time must be positive")
    return t


def _points(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0 or y.ndim == 0:
        raise ValueError("points must be vectors; use interval_kernel for scalars")
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return x, y


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def gauss_kernel(t, x, y):
    """Whole-space kernel ``(4πt)^{-n/2} exp(-|x-y|^2/4t)``."""
    t = _check_t(t)
    x, y = _points(x, y)
    n = x.shape[-1]
    r2 = np.sum((x - y) ** 2, axis=-1)
    return _scalar((4 * np.pi * t) ** (-n / 2) * np.exp(-r2 / (4 * t)))


def halfspace_survival(t, dx, dy):
    """Bridge survival in a half-space: ``1 - exp(-dx*dy/t)``."""
    return -np.expm1(-np.asarray(dx) * np.asarray(dy) / t)


def halfspace_kernel(t, x, y, H: HalfSpace, route="product"):
    """Dirichlet kernel of the half-space ``H``.

    ``route="product"`` evaluates ``p(t,x,y) (1 - exp(-δ_H(x)δ_H(y)/t))``;
    ``route="reflection"`` evaluates ``p(t,x,y) - p(t,x,ȳ)`` with ``ȳ`` the
    mirror image of ``y``.  The two agree algebraically; the product form
    avoids cancellation near the boundary.
    """
    t = _check_t(t)
    x, y = _points(x, y)
    dx, dy = H.dist(x), H.dist(y)
    tol = 1e-12 * (1.0 + abs(H.offset))
    if np.any(dx < -tol) or np.any(dy < -tol):
        raise ValueError("point outside the closed half-space")
    dx, dy = np.maximum(dx, 0.0), np.maximum(dy, 0.0)
    if route == "product":
        return _scalar(gauss_kernel(t, x, y) * halfspace_survival(t, dx, dy))
    if route == "reflection":
        ybar = y - 2.0 * dy[..., None] * H.normal
        return _scalar(gauss_kernel(t, x, y) - gauss_kernel(t, x, ybar))
    raise ValueError(f"unknown route {route!r}")


def _wall_coords(x, y, a, L):
    """Distances ``(p, q)`` of both points from the wall nearest to either of them.

    ``p`` belongs to the point closest to a wall, so it is the smaller one.
    """
    b = a + L
    dx = np.minimum(x - a, b - x)
    dy = np.minimum(y - a, b - y)
    swap = dy < dx
    near, far = np.where(swap, y, x), np.where(swap, x, y)
    right = (b - near) < (near - a)
    p = np.where(right, b - near, near - a)
    q = np.where(right, b - far, far - a)
    return p, q


def _images(t, x, y, a, L):
    # sum_k g(q - p + 2kL) - g(q + p + 2kL), g the 1-D Gaussian, in wall
    # coordinates; each pair is rewritten with expm1 so points near a wall
    # keep their relative accuracy
    K = int(math.ceil((math.sqrt(4 * float(np.max(t)) * TAIL + L * L) + L) / (2 * L))) + 1
    k = np.arange(-K, K + 1)
    shape = np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(y))
    t, x, y = (np.broadcast_to(v, shape) for v in (t, x, y))
    p, q = _wall_coords(x, y, a, L)
    t, p, q = t[..., None], p[..., None], q[..., None]
    norm = 1.0 / np.sqrt(4 * np.pi * t)
    u = q - p + 2 * k * L
    v = q + p + 2 * k * L
    D = p * (q + 2 * k * L) / t  # (v^2 - u^2) / 4t
    with np.errstate(over="ignore", invalid="ignore"):
        hi = -np.exp(-u * u / (4 * t)) * np.expm1(-D)
        lo = np.exp(-v * v / (4 * t)) * np.expm1(D)
    terms = norm * np.where(D >= 0, hi, lo)
    # add the smallest images first
    order = np.argsort(np.abs(k))[::-1]
    return np.sum(terms[..., order], axis=-1)


def _eigen(t, x, y, a, L):
    # (2/L) sum_m exp(-m^2 π^2 t / L^2) sin(mπ(x-a)/L) sin(mπ(y-a)/L)
    tmin = float(np.min(t))
    M = int(math.ceil(math.sqrt(TAIL * L * L / (np.pi ** 2 * tmin)))) + 2
    m = np.arange(1, M + 1)
    shape = np.broadcast_shapes(np.shape(t), np.shape(x), np.shape(y))
    t, x, y = (np.broadcast_to(v, shape)[..., None] for v in (t, x, y))
    terms = np.exp(-(m * np.pi / L) ** 2 * t) * np.sin(m * np.pi * (x - a) / L) * np.sin(m * np.pi * (y - a) / L)
    return (2.0 / L) * np.sum(terms[..., ::-1], axis=-1)


def interval_kernel(t, x, y, a=0.0, b=1.0, method="auto"):
    """Dirichlet kernel of the interval ``(a, b)``.

    ``method`` is ``"images"`` (theta series), ``"eigen"`` (sine series) or
    ``"auto"``, which switches to the sine series for ``t >= (b-a)^2/π``.
    """
    t = _check_t(t)
    if not b > a:
        raise ValueError("interval needs a < b")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < a) | (x > b) | (y < a) | (y > b)):
        raise ValueError("point outside the interval")
    # order the arguments so that swapping x and y is bitwise symmetric
    x, y = np.minimum(x, y), np.maximum(x, y)
    L = b - a
    if method == "images":
        out = _images(t, x, y, a, L)
    elif method == "eigen":
        out = _eigen(t, x, y, a, L)
    elif method == "auto":
        switch = L * L / np.pi
        shape = np.broadcast_shapes(t.shape, x.shape, y.shape)
        tb, xb, yb = (np.broadcast_to(v, shape) for v in (t, x, y))
        big = tb >= switch
        out = np.empty(shape)
        if np.any(~big):
            out[~big] = _images(tb[~big], xb[~big], yb[~big], a, L)
        if np.any(big):
            out[big] = _eigen(tb[big], xb[big], yb[big], a, L)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _scalar(np.maximum(out, 0.0))


def box_kernel(t, x, y, lower, upper):
    """Dirichlet kernel of a box: the product of interval kernels."""
    x, y = _points(x, y)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    out = 1.0
    for i in range(x.shape[-1]):
        out = out * interval_kernel(t, x[..., i], y[..., i], lower[i], upper[i])
    return _scalar(out)


def ball_h_factor(t, x, y, ball: Ball | None = None):
    """The non-exponential factor of the two-sided ball estimate.

    ``h = (1 ∧ δ(x)δ(y)/t) + (1 ∧ δ(x)|x-y|^2/t)(1 ∧ δ(y)|x-y|^2/t)`` with
    ``δ`` the distance to the boundary of the (default unit) ball.
    """
    t = _check_t(t)
    x, y = _points(x, y)
    if ball is None:
        ball = Ball(np.zeros(x.shape[-1]), 1.0)
    dx, dy = ball.dist(x), ball.dist(y)
    r2 = np.sum((x - y) ** 2, axis=-1)
    h = np.minimum(1, dx * dy / t) + np.minimum(1, dx * r2 / t) * np.minimum(1, dy * r2 / t)
    return _scalar(h)


def vdb_factor(t, rho, n):
    """``max(0, 1 - e^{-u} Σ_{k=1}^n 2^k u^{k-1}/(k-1)!)`` with ``u = ρ^2/t``."""
    t = _check_t(t)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be non-negative")
    u = rho * rho / t
    series = sum(2.0 ** k * u ** (k - 1) / math.factorial(k - 1) for k in range(1, int(n) + 1))
    return _scalar(np.maximum(0.0, 1.0 - np.exp(-u) * series))


def vdb_lower(t, x, y, rho, n=None):
    """Lower envelope ``p(t,x,y) · vdb_factor`` for a segment at distance ``rho`` from the boundary."""
    x, y = _points(x, y)
    n = x.shape[-1] if n is None else n
    return _scalar(gauss_kernel(t, x, y) * vdb_factor(t, rho, n))
