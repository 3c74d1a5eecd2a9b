"""Convex domains and boundary-distance geometry.

Every domain in the catalog is analytically defined, so the boundary
distance, nearest boundary point and inward normal are either closed form
or come from a safeguarded one-dimensional Newton iteration.  All array
methods accept a single point of shape ``(n,)`` or a batch ``(m, n)``.

Example
-------
>>> ball = make_domain({"kind": "ball", "params": {"dim": 2}})
>>> float(dist_to_boundary(ball, [0.5, 0.0]))
0.5
>>> H = supporting_halfspace(ball, [0.5, 0.0])
>>> H.normal.tolist(), H.offset
([-1.0, 0.0], -1.0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "GeometryError",
    "ProjectionError",
    "HalfSpace",
    "Domain",
    "Box",
    "Interval",
    "Ball",
    "HalfSpaceDomain",
    "Wedge",
    "HalfCapsule",
    "PowerDomain",
    "Stadium",
    "Ellipse",
    "make_domain",
    "contains",
    "dist_to_boundary",
    "project_to_boundary",
    "supporting_halfspace",
    "angle_between",
]

# boundary membership tolerance, relative to the coordinate scale
BOUNDARY_TOL = 1e-9
NEWTON_MAXITER = 100


class GeometryError(ValueError):
    pass


class ProjectionError(GeometryError):
    """Raised when an iterative boundary projection fails to converge."""


def _as_points(x, dim=None):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2:
        raise GeometryError(f"points must have shape (n,) or (m, n), got {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise GeometryError(f"dimension mismatch: expected {dim}, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise GeometryError("point coordinates must be finite")
    return X, single


def _unit(v, fallback):
    """Row-normalise ``v``; zero rows become ``fallback``."""
    r = np.linalg.norm(v, axis=-1)
    out = np.empty_like(v)
    nz = r > 0
    out[nz] = v[nz] / r[nz, None]
    out[~nz] = fallback
    return out, r


def _lex_less(a, b):
    """Row-wise lexicographic ``a < b`` for two (m, n) arrays."""
    diff = a != b
    first = np.argmax(diff, axis=1)
    rows = np.arange(a.shape[0])
    return diff.any(axis=1) & (a[rows, first] < b[rows, first])


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """``{u : normal . u > offset}`` with ``normal`` the unit inward normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        nrm = np.asarray(self.normal, dtype=float).copy()
        if nrm.ndim != 1 or not np.all(np.isfinite(nrm)):
            raise GeometryError("half-space normal must be a finite vector")
        if abs(np.linalg.norm(nrm) - 1.0) > 1e-12:
            raise GeometryError("half-space normal must have unit length")
        nrm.setflags(write=False)
        object.__setattr__(self, "normal", nrm)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def through(cls, point, normal):
        """Half-space whose boundary passes through ``point``."""
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(n, float(n @ np.asarray(point, dtype=float)))

    @property
    def dim(self):
        return self.normal.shape[0]

    def dist(self, x):
        """Signed distance to the boundary hyperplane, positive inside."""
        X = np.asarray(x, dtype=float)
        if X.shape[-1] != self.dim:
            raise GeometryError(f"dimension mismatch: expected {self.dim}, got {X.shape[-1]}")
        return X @ self.normal - self.offset

    def reflect(self, y):
        Y = np.asarray(y, dtype=float)
        return Y - 2.0 * self.dist(Y)[..., None] * self.normal

    def to_dict(self):
        return {"normal": self.normal.tolist(), "offset": self.offset}

    def __repr__(self):
        return f"HalfSpace(normal={self.normal.tolist()}, offset={self.offset!r})"


def angle_between(H1: HalfSpace, H2: HalfSpace) -> float:
    """Opening angle of ``H1 ∩ H2``: pi minus the angle between inward normals."""
    if H1.dim != H2.dim:
        raise GeometryError("half-spaces of different dimension")
    c = float(np.clip(H1.normal @ H2.normal, -1.0, 1.0))
    return math.pi - math.acos(c)


class Domain:
    """Base class of the convex domain catalog.

    Subclasses implement ``_project`` (nearest boundary point, distance and
    inward normal for points of the closure) and ``_inside`` (a defining
    function, positive exactly on the open set).
    """

    kind = "domain"
    dim: int
    inner_ball_radius: float
    strictly_convex: bool
    bounded: bool

    # -- interface for subclasses ------------------------------------
    def _project(self, X):
        raise NotImplementedError

    def _inside(self, X):
        raise NotImplementedError

    def _has_tangent(self, Z):
        return np.ones(Z.shape[0], dtype=bool)

    def params(self) -> dict:
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def scaled(self, lam: float) -> "Domain":
        raise NotImplementedError(f"{self.kind} is not closed under scaling")

    def sample_boundary(self, rng, k):
        if self.boundary_param_dim is None:
            raise NotImplementedError
        return self.boundary_point(self.sample_boundary_params(rng, k))

    # optional boundary parametrisation used by derivative-free refinement
    boundary_param_dim = None

    def sample_boundary_params(self, rng, k):
        raise NotImplementedError

    def boundary_point(self, u):
        raise NotImplementedError

    # -- public API ------------------------------------------------------
    def to_spec(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    def scale(self):
        lo, hi = self.bounding_box()
        fin = np.isfinite(lo) & np.isfinite(hi)
        return float(max(1.0, np.max(np.abs(np.r_[lo[fin], hi[fin]]), initial=1.0)))

    def contains(self, x, closed=False):
        X, single = _as_points(x, self.dim)
        g = self._inside(X)
        if closed:
            tol = BOUNDARY_TOL * np.maximum(1.0, np.linalg.norm(X, axis=1))
            res = g >= -tol
        else:
            res = g > 0
        return bool(res[0]) if single else res

    def nearest(self, x):
        """Vectorised ``(z, delta, inward normal)``; no closure check."""
        X, single = _as_points(x, self.dim)
        Z, D, N = self._project(X)
        if single:
            return Z[0], float(D[0]), N[0]
        return Z, D, N

    def _checked(self, x):
        X, single = _as_points(x, self.dim)
        g = self._inside(X)
        tol = BOUNDARY_TOL * np.maximum(1.0, np.linalg.norm(X, axis=1))
        if np.any(g < -tol):
            raise GeometryError(f"point outside the closure of the {self.kind}")
        return X, single

    def dist(self, x):
        X, single = self._checked(x)
        D = self._project(X)[1]
        return float(D[0]) if single else D

    def project(self, x):
        X, single = self._checked(x)
        Z, D, _ = self._project(X)
        if single:
            return Z[0], float(D[0])
        return Z, D

    def normal_at(self, x):
        """Inward unit normal at the nearest boundary point of ``x``."""
        X, single = self._checked(x)
        Z, _, N = self._project(X)
        if not np.all(self._has_tangent(Z)):
            raise GeometryError(f"no tangent hyperplane at a corner of the {self.kind}")
        return N[0] if single else N

    def supporting_halfspace(self, x) -> HalfSpace:
        X, _ = self._checked(x)
        if X.shape[0] != 1:
            raise GeometryError("supporting_halfspace takes a single point")
        Z, _, N = self._project(X)
        if not self._has_tangent(Z)[0]:
            raise GeometryError(f"no tangent hyperplane at a corner of the {self.kind}")
        n = N[0] / np.linalg.norm(N[0])
        return HalfSpace(n, float(n @ Z[0]))

    def halfspace_dist(self, w, x):
        """Batched ``delta_{H_w}(x)`` for boundary points ``w``."""
        W, _ = _as_points(w, self.dim)
        X, _ = _as_points(x, self.dim)
        N = self._project(W)[2]
        return np.einsum("ij,ij->i", X - W, N)

    def sample_interior(self, rng, k, window=None):
        """Rejection sample ``k`` interior points inside ``window=(lo, hi)``."""
        lo, hi = self.bounding_box()
        if window is not None:
            wlo, whi = (np.asarray(w, dtype=float) for w in window)
            lo, hi = np.maximum(lo, wlo), np.minimum(hi, whi)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GeometryError("unbounded domain needs a sampling window")
        out = []
        have = 0
        while have < k:
            cand = rng.uniform(lo, hi, size=(max(2 * (k - have), 64), self.dim))
            cand = cand[self._inside(cand) > 0]
            out.append(cand)
            have += cand.shape[0]
        return np.concatenate(out)[:k]

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


class Box(Domain):
    kind = "box"

    def __init__(self, lower, upper):
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
            raise GeometryError("box needs lower < upper componentwise")
        self.lower, self.upper = lo, hi
        self.dim = lo.shape[0]
        if self.dim == 1:
            self.inner_ball_radius = float((hi[0] - lo[0]) / 2)
            self.strictly_convex = True
        else:
            # corners rule out any inner ball of positive radius
            self.inner_ball_radius = 0.0
            self.strictly_convex = False
        self.bounded = True

    def params(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def scaled(self, lam):
        return type(self)(lam * self.lower, lam * self.upper)

    def _inside(self, X):
        return np.minimum((X - self.lower).min(axis=1), (self.upper - X).min(axis=1))

    def _project(self, X):
        n = self.dim
        # candidate order gives the lexicographically smallest projection on ties:
        # lower faces by increasing index, then upper faces by decreasing index
        cand = np.concatenate([X - self.lower, (self.upper - X)[:, ::-1]], axis=1)
        j = np.argmin(cand, axis=1)
        rows = np.arange(X.shape[0])
        D = cand[rows, j]
        low = j < n
        coord = np.where(low, j, 2 * n - 1 - j)
        Z = X.copy()
        Z[rows, coord] = np.where(low, self.lower[coord], self.upper[coord])
        N = np.zeros_like(X)
        N[rows, coord] = np.where(low, 1.0, -1.0)
        return Z, D, N

    def _has_tangent(self, Z):
        tol = BOUNDARY_TOL * max(1.0, float(np.max(np.abs(np.r_[self.lower, self.upper]))))
        on = (np.abs(Z - self.lower) < tol) | (np.abs(Z - self.upper) < tol)
        return on.sum(axis=1) <= 1

    def sample_boundary(self, rng, k):
        n = self.dim
        if n == 1:
            return np.where(rng.random(k) < 0.5, self.lower[0], self.upper[0])[:, None]
        side = self.upper - self.lower
        areas = np.array([np.prod(np.delete(side, i)) for i in range(n)])
        face = rng.choice(n, size=k, p=areas / areas.sum())
        Z = rng.uniform(self.lower, self.upper, size=(k, n))
        top = rng.random(k) < 0.5
        rows = np.arange(k)
        Z[rows, face] = np.where(top, self.upper[face], self.lower[face])
        return Z


class Interval(Box):
    kind = "interval"

    def __init__(self, a, b):
        super().__init__([a], [b])
        self.a, self.b = float(a), float(b)

    def params(self):
        return {"a": self.a, "b": self.b}

    def scaled(self, lam):
        return Interval(lam * self.a, lam * self.b)


class Ball(Domain):
    kind = "ball"

    def __init__(self, center=None, radius=1.0, dim=None):
        if center is None:
            center = np.zeros(2 if dim is None else int(dim))
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if dim is not None and c.shape[0] != dim:
            raise GeometryError("ball center does not match dim")
        if radius <= 0:
            raise GeometryError("ball radius must be positive")
        self.center, self.radius = c, float(radius)
        self.dim = c.shape[0]
        self.inner_ball_radius = self.radius
        self.strictly_convex = True
        self.bounded = True

    def params(self):
        return {"center": self.center.tolist(), "radius": self.radius}

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def scaled(self, lam):
        return Ball(lam * self.center, lam * self.radius)

    def _inside(self, X):
        return self.radius - np.linalg.norm(X - self.center, axis=1)

    def _project(self, X):
        fallback = np.zeros(self.dim)
        fallback[0] = -1.0
        U, r = _unit(X - self.center, fallback)
        return self.center + self.radius * U, self.radius - r, -U

    def sample_boundary_params(self, rng, k):
        return rng.standard_normal((k, self.dim))

    @property
    def boundary_param_dim(self):
        return self.dim

    def boundary_point(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        fallback = np.zeros(self.dim)
        fallback[0] = 1.0
        U, _ = _unit(u, fallback)
        return self.center + self.radius * U


class HalfSpaceDomain(Domain):
    kind = "halfspace"
    window = 5.0

    def __init__(self, normal, offset=0.0):
        n = np.asarray(normal, dtype=float)
        self.H = HalfSpace(n / np.linalg.norm(n), offset)
        self.dim = self.H.dim
        self.inner_ball_radius = math.inf
        self.strictly_convex = False
        self.bounded = False

    def params(self):
        return self.H.to_dict()

    def bounding_box(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def scaled(self, lam):
        return HalfSpaceDomain(self.H.normal, lam * self.H.offset)

    def _inside(self, X):
        return self.H.dist(X)

    def _project(self, X):
        D = self.H.dist(X)
        N = np.broadcast_to(self.H.normal, X.shape).copy()
        return X - D[:, None] * self.H.normal, D, N

    def sample_boundary(self, rng, k):
        base = self.H.offset * self.H.normal
        T = rng.uniform(-self.window, self.window, size=(k, self.dim))
        T -= (T @ self.H.normal)[:, None] * self.H.normal
        return base + T

    def sample_interior(self, rng, k, window=None):
        if window is None:
            c = self.H.offset * self.H.normal
            window = (c - self.window, c + self.window)
        return super().sample_interior(rng, k, window)


class Wedge(Domain):
    """Intersection of two half-spaces; its edge has no tangent hyperplane."""

    kind = "wedge"
    window = 5.0

    def __init__(self, normals, offsets):
        normals = np.asarray(normals, dtype=float)
        if normals.shape[0] != 2:
            raise GeometryError("a wedge is the intersection of exactly two half-spaces")
        self.H1 = HalfSpace(normals[0] / np.linalg.norm(normals[0]), offsets[0])
        self.H2 = HalfSpace(normals[1] / np.linalg.norm(normals[1]), offsets[1])
        if self.H1.dim != self.H2.dim:
            raise GeometryError("wedge half-spaces of different dimension")
        self.dim = self.H1.dim
        self.inner_ball_radius = 0.0
        self.strictly_convex = False
        self.bounded = False

    @property
    def angle(self):
        return angle_between(self.H1, self.H2)

    def params(self):
        return {
            "normals": [self.H1.normal.tolist(), self.H2.normal.tolist()],
            "offsets": [self.H1.offset, self.H2.offset],
        }

    def bounding_box(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def scaled(self, lam):
        return Wedge([self.H1.normal, self.H2.normal], [lam * self.H1.offset, lam * self.H2.offset])

    def apex(self):
        """A point of the edge ``∂H1 ∩ ∂H2`` (least-norm solution)."""
        A = np.vstack([self.H1.normal, self.H2.normal])
        return np.linalg.lstsq(A, np.array([self.H1.offset, self.H2.offset]), rcond=None)[0]

    def _inside(self, X):
        return np.minimum(self.H1.dist(X), self.H2.dist(X))

    def _project(self, X):
        d1, d2 = self.H1.dist(X), self.H2.dist(X)
        Z1 = X - d1[:, None] * self.H1.normal
        Z2 = X - d2[:, None] * self.H2.normal
        pick1 = (d1 < d2) | ((d1 == d2) & ~_lex_less(Z2, Z1))
        Z = np.where(pick1[:, None], Z1, Z2)
        N = np.where(pick1[:, None], self.H1.normal, self.H2.normal)
        return Z, np.minimum(d1, d2), N

    def _has_tangent(self, Z):
        tol = BOUNDARY_TOL * np.maximum(1.0, np.linalg.norm(Z, axis=1))
        return ~((np.abs(self.H1.dist(Z)) < tol) & (np.abs(self.H2.dist(Z)) < tol))

    def sample_boundary(self, rng, k):
        base = self.apex()
        out, have = [], 0
        while have < k:
            m = 2 * (k - have) + 16
            face = rng.random(m) < 0.5
            T = base + rng.uniform(-self.window, self.window, size=(m, self.dim))
            P1 = T - self.H1.dist(T)[:, None] * self.H1.normal
            P2 = T - self.H2.dist(T)[:, None] * self.H2.normal
            P = np.where(face[:, None], P1, P2)
            ok = np.where(face, self.H2.dist(P), self.H1.dist(P)) > 0
            out.append(P[ok])
            have += int(ok.sum())
        return np.concatenate(out)[:k]

    def sample_interior(self, rng, k, window=None):
        if window is None:
            c = self.apex()
            window = (c - self.window, c + self.window)
        return super().sample_interior(rng, k, window)


class HalfCapsule(Domain):
    """Ball of radius R at the origin glued to the cylinder (0, L) x B(0, R)."""

    kind = "half_capsule"

    def __init__(self, R, L, dim=2):
        if not (R > 0 and L >= R):
            raise GeometryError("half_capsule requires L >= R > 0")
        if dim < 2:
            raise GeometryError("half_capsule requires dim >= 2")
        self.R, self.L, self.dim = float(R), float(L), int(dim)
        # radius of the hemisphere and cylinder; the rim of the flat end is a corner
        self.inner_ball_radius = self.R
        self.strictly_convex = False
        self.bounded = True

    def params(self):
        return {"R": self.R, "L": self.L, "dim": self.dim}

    def bounding_box(self):
        lo = np.full(self.dim, -self.R)
        hi = np.full(self.dim, self.R)
        hi[0] = self.L
        return lo, hi

    def scaled(self, lam):
        return HalfCapsule(lam * self.R, lam * self.L, self.dim)

    def _inside(self, X):
        x1 = X[:, 0]
        rt = np.linalg.norm(X[:, 1:], axis=1)
        side = np.where(x1 >= 0, self.R - rt, self.R - np.linalg.norm(X, axis=1))
        return np.minimum(side, self.L - x1)

    def _project(self, X):
        m, n = X.shape
        x1 = X[:, 0]
        fb_t = np.zeros(n - 1)
        fb_t[0] = -1.0
        Ut, rt = _unit(X[:, 1:], fb_t)
        fb = np.zeros(n)
        fb[0] = -1.0
        U, r = _unit(X, fb)

        cyl = x1 >= 0
        # at the origin the lexicographically smallest nearest point is (-R, 0, ...)
        cyl &= ~((x1 == 0) & (rt == 0))
        Z = np.where(cyl[:, None], np.column_stack([x1, self.R * Ut]), self.R * U)
        N = np.where(cyl[:, None], np.column_stack([np.zeros(m), -Ut]), -U)
        D = np.where(cyl, self.R - rt, self.R - r)

        dE = self.L - x1
        end = dE < D
        Z[end] = np.column_stack([np.full(end.sum(), self.L), X[end, 1:]])
        N[end] = 0.0
        N[end, 0] = -1.0
        D = np.where(end, dE, D)
        return Z, D, N

    def _has_tangent(self, Z):
        tol = BOUNDARY_TOL * max(1.0, self.L)
        rim = (np.abs(Z[:, 0] - self.L) < tol) & (np.abs(np.linalg.norm(Z[:, 1:], axis=1) - self.R) < tol)
        return ~rim

    def _piece_sizes(self):
        n, R, L = self.dim, self.R, self.L
        # surface measure of unit sphere S^{k-1} and volume of unit ball B^k
        sphere = lambda k: 2 * math.pi ** (k / 2) / math.gamma(k / 2)
        ball = lambda k: math.pi ** (k / 2) / math.gamma(k / 2 + 1)
        hemi = 0.5 * sphere(n) * R ** (n - 1)
        side = sphere(n - 1) * R ** (n - 2) * L
        end = ball(n - 1) * R ** (n - 1)
        return np.array([hemi, side, end])

    def sample_boundary(self, rng, k):
        n, R, L = self.dim, self.R, self.L
        sizes = self._piece_sizes()
        piece = rng.choice(3, size=k, p=sizes / sizes.sum())
        G = rng.standard_normal((k, n))
        G[:, 0] = -np.abs(G[:, 0])
        hemi = R * G / np.linalg.norm(G, axis=1, keepdims=True)
        Gt = rng.standard_normal((k, n - 1))
        Ut = Gt / np.linalg.norm(Gt, axis=1, keepdims=True)
        side = np.column_stack([rng.uniform(0, L, k), R * Ut])
        rad = R * rng.random(k) ** (1.0 / (n - 1))
        end = np.column_stack([np.full(k, L), rad[:, None] * Ut])
        return np.select([piece[:, None] == 0, piece[:, None] == 1], [hemi, side], end)


class PowerDomain(Domain):
    """``{x : x_n > a |(x_1, ..., x_{n-1})|^p}`` with ``p >= 2``."""

    kind = "power_domain"
    grid = 33

    def __init__(self, a=1.0, p=2.0, dim=2, truncation=None):
        if not (a > 0 and p >= 2 and dim >= 2):
            raise GeometryError("power_domain requires a > 0, p >= 2, dim >= 2")
        self.a, self.p, self.dim = float(a), float(p), int(dim)
        self.truncation = float(truncation) if truncation else self.default_truncation()
        self.inner_ball_radius = self._curvature_radius()
        self.strictly_convex = True
        self.bounded = False

    def default_truncation(self):
        return 10.0 * max(1.0, self.a ** (-1.0 / (self.p - 1.0)))

    def with_truncation(self, truncation):
        return PowerDomain(self.a, self.p, self.dim, truncation)

    def params(self):
        return {"a": self.a, "p": self.p, "dim": self.dim, "truncation": self.truncation}

    def bounding_box(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def scaled(self, lam):
        return PowerDomain(self.a * lam ** (1.0 - self.p), self.p, self.dim, lam * self.truncation)

    def _curvature_radius(self):
        a, p = self.a, self.p
        if p == 2:
            return 1.0 / (2.0 * a)

        def neg_kappa(log_s):
            s = math.exp(log_s)
            d1 = a * p * s ** (p - 1)
            km = a * p * (p - 1) * s ** (p - 2) / (1 + d1 * d1) ** 1.5
            kr = a * p * s ** (p - 2) / math.sqrt(1 + d1 * d1) if self.dim >= 3 else 0.0
            return -max(km, kr)

        scale = a ** (-1.0 / (p - 1.0))
        grid = np.linspace(math.log(scale) - 20, math.log(scale) + 10, 601)
        vals = np.array([neg_kappa(g) for g in grid])
        i = int(np.argmin(vals))
        res = minimize_scalar(neg_kappa, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, 600)]),
                              method="bounded", options={"xatol": 1e-12})
        return 1.0 / -min(res.fun, vals[i])

    def _inside(self, X):
        return X[:, -1] - self.a * np.linalg.norm(X[:, :-1], axis=1) ** self.p

    def _radial(self, s, rho, h):
        a, p = self.a, self.p
        sp = s ** p
        g = (s - rho) + a * p * s ** (p - 1) * (a * sp - h)
        dg = 1 + a * p * (p - 1) * s ** (p - 2) * (a * sp - h) + (a * p * s ** (p - 1)) ** 2
        return g, dg

    def _solve_radial(self, rho, h):
        """Minimise (s - rho)^2 + (a s^p - h)^2 over s in [0, (h/a)^(1/p)]."""
        a, p = self.a, self.p
        smax = np.maximum(h, 0.0) / a
        smax = np.maximum(smax ** (1.0 / p), rho)
        K = self.grid
        S = smax[:, None] * np.linspace(0.0, 1.0, K)[None, :]
        F = (S - rho[:, None]) ** 2 + (a * S ** p - h[:, None]) ** 2
        k = np.argmin(F, axis=1)
        rows = np.arange(rho.shape[0])
        lo = S[rows, np.maximum(k - 1, 0)]
        hi = S[rows, np.minimum(k + 1, K - 1)]
        glo, _ = self._radial(lo, rho, h)
        ghi, _ = self._radial(hi, rho, h)
        s = S[rows, k]
        # the minimiser sits on an end of the bracket when g does not change sign
        done = (glo >= 0) | (ghi <= 0)
        s = np.where(glo >= 0, lo, np.where(ghi <= 0, hi, s))
        tol = 1e-14 * np.maximum(1.0, smax)
        with np.errstate(divide="ignore", invalid="ignore"):
            for _ in range(NEWTON_MAXITER):
                act = ~done
                if not act.any():
                    break
                sa = s[act]
                g, dg = self._radial(sa, rho[act], h[act])
                l = np.where(g < 0, sa, lo[act])
                u = np.where(g > 0, sa, hi[act])
                snew = sa - g / dg
                bad = ~np.isfinite(snew) | (snew < l) | (snew > u) | (dg <= 0)
                snew = np.where(bad, 0.5 * (l + u), snew)
                conv = (np.abs(snew - sa) <= tol[act]) | (g == 0) | (u - l <= tol[act])
                s[act], lo[act], hi[act] = snew, l, u
                done[act] = conv
            else:
                if not done.all():
                    raise ProjectionError("power_domain projection did not converge")
        return s

    def _project(self, X):
        m, n = X.shape
        fb = np.zeros(n - 1)
        fb[0] = -1.0
        U, rho = _unit(X[:, :-1], fb)
        h = X[:, -1]
        s = self._solve_radial(rho, h)
        a, p = self.a, self.p
        Z = np.column_stack([s[:, None] * U, a * s ** p])
        D = np.sqrt((s - rho) ** 2 + (a * s ** p - h) ** 2)
        slope = a * p * s ** (p - 1)
        N = np.column_stack([-slope[:, None] * U, np.ones(m)])
        N /= np.sqrt(1 + slope ** 2)[:, None]
        return Z, D, N

    def sample_boundary_params(self, rng, k):
        T = self.truncation
        m = self.dim - 1
        if m == 1:
            return rng.uniform(-T, T, size=(k, 1))
        G = rng.standard_normal((k, m))
        G /= np.linalg.norm(G, axis=1, keepdims=True)
        return G * (T * rng.random(k) ** (1.0 / m))[:, None]

    @property
    def boundary_param_dim(self):
        return self.dim - 1

    def boundary_point(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        r = np.linalg.norm(u, axis=1)
        over = r > self.truncation
        u = u.copy()
        u[over] *= (self.truncation / r[over])[:, None]
        r = np.minimum(r, self.truncation)
        return np.column_stack([u, self.a * r ** self.p])

    def sample_interior(self, rng, k, window=None):
        if window is None:
            T = self.truncation
            hi = np.full(self.dim, T)
            hi[-1] = self.a * T ** self.p
            lo = -hi.copy()
            lo[-1] = 0.0
            window = (lo, hi)
        return super().sample_interior(rng, k, window)


class Stadium(Domain):
    """Points within ``radius`` of the segment [-half_length, half_length] x {0}.

    The default parameters give the square (-1, 1)^2 with two unit half-discs
    attached to its left and right sides.
    """

    kind = "stadium"

    def __init__(self, radius=1.0, half_length=1.0):
        if radius <= 0 or half_length <= 0:
            raise GeometryError("stadium needs positive radius and half_length")
        self.radius, self.half_length = float(radius), float(half_length)
        self.dim = 2
        self.inner_ball_radius = self.radius
        self.strictly_convex = False
        self.bounded = True

    def params(self):
        return {"radius": self.radius, "half_length": self.half_length}

    def bounding_box(self):
        r, l = self.radius, self.half_length
        return np.array([-l - r, -r]), np.array([l + r, r])

    def scaled(self, lam):
        return Stadium(lam * self.radius, lam * self.half_length)

    @property
    def perimeter(self):
        return 4 * self.half_length + 2 * math.pi * self.radius

    def _inside(self, X):
        q = np.clip(X[:, 0], -self.half_length, self.half_length)
        return self.radius - np.hypot(X[:, 0] - q, X[:, 1])

    def _project(self, X):
        l, r = self.half_length, self.radius
        q = np.column_stack([np.clip(X[:, 0], -l, l), np.zeros(X.shape[0])])
        U, dist = _unit(X - q, np.array([0.0, -1.0]))
        # on the left end of the spine the whole left arc is nearest; take its leftmost point
        left_end = (dist == 0) & (X[:, 0] <= -l)
        U[left_end] = [-1.0, 0.0]
        return q + r * U, r - dist, -U

    def sample_boundary_params(self, rng, k):
        return rng.uniform(0, self.perimeter, size=(k, 1))

    boundary_param_dim = 1

    def boundary_point(self, u):
        """Arc-length parametrisation starting at (-l, -r), counter-clockwise."""
        l, r = self.half_length, self.radius
        s = np.mod(np.asarray(u, dtype=float).reshape(-1), self.perimeter)
        out = np.empty((s.shape[0], 2))
        b1, b2, b3 = 2 * l, 2 * l + math.pi * r, 4 * l + math.pi * r
        m = s < b1
        out[m] = np.column_stack([-l + s[m], np.full(m.sum(), -r)])
        m = (s >= b1) & (s < b2)
        th = -math.pi / 2 + (s[m] - b1) / r
        out[m] = np.column_stack([l + r * np.cos(th), r * np.sin(th)])
        m = (s >= b2) & (s < b3)
        out[m] = np.column_stack([l - (s[m] - b2), np.full(m.sum(), r)])
        m = s >= b3
        th = math.pi / 2 + (s[m] - b3) / r
        out[m] = np.column_stack([-l + r * np.cos(th), r * np.sin(th)])
        return out


class Ellipse(Domain):
    """``{x^2/a^2 + y^2/b^2 < 1}`` centred at the origin."""

    kind = "ellipse"

    def __init__(self, a=2.0, b=1.0):
        if a <= 0 or b <= 0:
            raise GeometryError("ellipse semi-axes must be positive")
        self.a, self.b = float(a), float(b)
        self.dim = 2
        # rolling-ball radius: reciprocal of the maximal curvature
        self.inner_ball_radius = min(a, b) ** 2 / max(a, b)
        self.strictly_convex = True
        self.bounded = True

    def params(self):
        return {"a": self.a, "b": self.b}

    def bounding_box(self):
        return np.array([-self.a, -self.b]), np.array([self.a, self.b])

    def scaled(self, lam):
        return Ellipse(lam * self.a, lam * self.b)

    def _inside(self, X):
        # scaled so that the defining function is 1-Lipschitz near the boundary
        return 0.5 * min(self.a, self.b) * (1.0 - (X[:, 0] / self.a) ** 2 - (X[:, 1] / self.b) ** 2)

    def _project(self, X):
        swap = self.a < self.b
        e0, e1 = (self.b, self.a) if swap else (self.a, self.b)
        P = X[:, ::-1] if swap else X
        y0, y1 = np.abs(P[:, 0]), np.abs(P[:, 1])
        m = X.shape[0]
        x0 = np.empty(m)
        x1 = np.empty(m)

        gen = (y0 > 0) & (y1 > 0)
        if gen.any():
            x0[gen], x1[gen] = self._root(e0, e1, y0[gen], y1[gen])
        on_minor = (y0 == 0) & (y1 > 0)
        x0[on_minor], x1[on_minor] = 0.0, e1
        on_major = y1 == 0
        lim = (e0 * e0 - e1 * e1) / e0
        inner = on_major & (y0 < lim)
        x0[inner] = e0 * e0 * y0[inner] / (e0 * e0 - e1 * e1)
        x1[inner] = e1 * np.sqrt(np.clip(1 - (x0[inner] / e0) ** 2, 0, None))
        outer = on_major & ~inner
        x0[outer], x1[outer] = e0, 0.0

        D = np.hypot(x0 - y0, x1 - y1)
        s0 = np.where(P[:, 0] > 0, 1.0, -1.0)
        # ties across the major axis resolve to the negative minor coordinate
        s1 = np.where(P[:, 1] > 0, 1.0, -1.0)
        Zs = np.column_stack([s0 * x0, s1 * x1])
        Z = Zs[:, ::-1] if swap else Zs
        N = -np.column_stack([Z[:, 0] / self.a ** 2, Z[:, 1] / self.b ** 2])
        N /= np.linalg.norm(N, axis=1, keepdims=True)
        return Z, D, N

    @staticmethod
    def _root(e0, e1, y0, y1):
        # Lagrange condition for the nearest point in u = 1 + multiplier/e1^2, so
        # that u keeps its relative precision when the root is tiny; the root
        # lies in [max(z1, n0 - c), max(1, |(n0, z1)|)] and G is convex decreasing there.
        c = (e0 / e1) ** 2 - 1
        z0, z1 = y0 / e0, y1 / e1
        n0 = (c + 1) * z0

        def G(u, n0, z1):
            return (n0 / (u + c)) ** 2 + (z1 / u) ** 2 - 1

        def dG(u, n0, z1):
            # written with ratios so that tiny u does not underflow
            a, q = n0 / (u + c), z1 / u
            return -2 * (a * a / (u + c) + q * q / u)

        g = z0 * z0 + z1 * z1 - 1
        # each term of G is at most 1 at the root
        lo = np.maximum(z1, n0 - c)
        hi = np.where(g < 0, 1.0, np.hypot(n0, z1))
        u = lo.copy()
        done = np.zeros(u.shape, dtype=bool)
        for _ in range(NEWTON_MAXITER):
            act = ~done
            if not act.any():
                break
            ua, na, za = u[act], n0[act], z1[act]
            Gv, dGv = G(ua, na, za), dG(ua, na, za)
            l = np.where(Gv > 0, ua, lo[act])
            h = np.where(Gv < 0, ua, hi[act])
            with np.errstate(divide="ignore", invalid="ignore"):
                unew = ua - Gv / dGv
            # landing on a bracket end means Newton is cycling in the last bits
            bad = ~np.isfinite(unew) | (unew <= l) | (unew >= h)
            unew = np.where(Gv == 0, ua, np.where(bad, 0.5 * (l + h), unew))
            eps = 4e-15 * ua
            conv = (np.abs(unew - ua) <= eps) | (Gv == 0) | (h - l <= eps)
            u[act], lo[act], hi[act] = unew, l, h
            done[act] = conv
        else:
            if not done.all():
                raise ProjectionError("ellipse projection did not converge")
        return (c + 1) * y0 / (u + c), y1 / u

    def sample_boundary_params(self, rng, k):
        return rng.uniform(0, 2 * math.pi, size=(k, 1))

    boundary_param_dim = 1

    def boundary_point(self, u):
        th = np.asarray(u, dtype=float).reshape(-1)
        return np.column_stack([self.a * np.cos(th), self.b * np.sin(th)])


_KINDS = {
    "interval": Interval,
    "box": Box,
    "ball": Ball,
    "halfspace": HalfSpaceDomain,
    "wedge": Wedge,
    "half_capsule": HalfCapsule,
    "power_domain": PowerDomain,
    "stadium": Stadium,
    "ellipse": Ellipse,
}

# parameter-free shorthands; "dim" is filled in from the caller's points
_DEFAULTS = {
    "interval": {"a": 0.0, "b": 1.0},
    "ball": {},
    "halfspace": None,
    "stadium": {},
    "ellipse": {"a": 2.0, "b": 1.0},
    "power_domain": {"a": 1.0, "p": 2.0},
    "half_capsule": {"R": 1.0, "L": 3.0},
}


def make_domain(spec, dim=None) -> Domain:
    """Build a catalog domain from ``{"kind": ..., "params": {...}}``.

    A bare kind name uses default parameters; ``dim`` fills in the dimension
    for kinds that have one.
    """
    if isinstance(spec, Domain):
        return spec
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    if kind not in _KINDS:
        raise GeometryError(f"unknown domain kind {kind!r}")
    params = dict(spec.get("params") or {})
    if not params and kind in _DEFAULTS:
        base = _DEFAULTS[kind]
        if base is None:
            n = dim or 2
            params = {"normal": [0.0] * (n - 1) + [1.0], "offset": 0.0}
        else:
            params = dict(base)
    if kind in ("ball", "power_domain", "half_capsule") and "dim" not in params and "center" not in params:
        params["dim"] = dim or 2
    try:
        return _KINDS[kind](**params)
    except TypeError as exc:
        raise GeometryError(f"bad parameters for {kind}: {exc}") from None


def contains(domain: Domain, x) -> bool:
    return domain.contains(x)


def dist_to_boundary(domain: Domain, x):
    return domain.dist(x)


def project_to_boundary(domain: Domain, x):
    return domain.project(x)


def supporting_halfspace(domain: Domain, x) -> HalfSpace:
    return domain.supporting_halfspace(x)
