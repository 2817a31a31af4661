"""Proper CAT(0) model spaces with a fixed basepoint.

Supported: Euclidean R^n, the hyperbolic plane (hyperboloid model), simplicial
trees with unit edges, and l2 products of these.  Each space knows its
geodesics from the basepoint, which is all the cone topology needs: the
ball projection ``p_r``, the cone neighbourhoods ``V(x, eps)`` and the
Lebesgue-style cover constants.

Boundary points are represented by geodesic rays from the basepoint.  Tree
rays are truncated at a finite depth; that depth is a certification
parameter and is reported by the callers that use it.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import CertificationError, CoverageError, DepthError, InvalidInputError

TOL = 1e-9


class Space:
    """Base class.  Subclasses implement ``distance`` and ``point_along``."""

    tag = "abstract"
    basepoint = None

    def distance(self, a, b) -> float:
        raise NotImplementedError

    def point_along(self, target, t):
        """Point at arclength ``t`` on the geodesic from the basepoint to ``target``."""
        raise NotImplementedError

    def ray_point(self, direction, t):
        raise NotImplementedError

    def norm(self, p) -> float:
        return self.distance(self.basepoint, p)

    def project_to_ball(self, y, r):
        if r <= 0:
            raise InvalidInputError("projection radius must be positive")
        if self.norm(y) <= r:
            return y
        return self.point_along(y, r)

    def geodesic_point(self, a, b, s):
        """Point at arclength ``s`` from ``a`` toward ``b``."""
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Euclidean space
# ---------------------------------------------------------------------------

class EuclideanSpace(Space):
    tag = "euclidean"

    def __init__(self, dim: int, basepoint=None):
        if dim < 1:
            raise InvalidInputError("dimension must be positive")
        self.dim = dim
        self.basepoint = np.zeros(dim) if basepoint is None else np.asarray(basepoint, float)

    def point(self, coords):
        p = np.asarray(coords, dtype=float)
        if p.shape != (self.dim,):
            raise InvalidInputError(f"expected a point of R^{self.dim}")
        return p

    def distance(self, a, b):
        return math.dist(a, b)

    def point_along(self, target, t):
        v = np.asarray(target, float) - self.basepoint
        d = np.linalg.norm(v)
        if d == 0:
            return self.basepoint.copy()
        return self.basepoint + v * (t / d)

    def ray_point(self, direction, t):
        return self.basepoint + t * np.asarray(direction, float)

    def geodesic_point(self, a, b, s):
        a = np.asarray(a, float)
        v = np.asarray(b, float) - a
        d = np.linalg.norm(v)
        return a.copy() if d == 0 else a + v * (s / d)

    def direction_to(self, p):
        v = np.asarray(p, float) - self.basepoint
        d = np.linalg.norm(v)
        return None if d == 0 else v / d

    def random_point(self, rng, radius):
        return self.basepoint + rng.uniform(-radius, radius, self.dim)

    def describe(self):
        return {"space": "euclidean", "dim": self.dim}


# ---------------------------------------------------------------------------
# hyperbolic plane, hyperboloid model
# ---------------------------------------------------------------------------

def minkowski(a, b):
    return a[0] * b[0] + a[1] * b[1] - a[2] * b[2]


class HyperbolicPlane(Space):
    """Points (x, y, z) with x^2 + y^2 - z^2 = -1, z > 0."""

    tag = "hyperbolic"

    def __init__(self, basepoint=None):
        self.basepoint = np.array([0.0, 0.0, 1.0]) if basepoint is None else self.point(basepoint)

    def point(self, coords):
        p = np.asarray(coords, dtype=float)
        if p.shape != (3,) or p[2] <= 0 or abs(minkowski(p, p) + 1) > 1e-9 * max(1.0, p[2] ** 2):
            raise InvalidInputError(f"{coords!r} is not on the hyperboloid sheet")
        return p

    def from_polar(self, r, angle):
        """Geodesic polar coordinates about the basepoint."""
        return self.ray_point(self.unit_tangent(angle), r)

    def unit_tangent(self, angle):
        # orthonormal frame of the tangent plane at the basepoint
        b = self.basepoint
        e1 = np.array([1.0, 0.0, 0.0]) + minkowski(np.array([1.0, 0.0, 0.0]), b) * b
        e1 /= math.sqrt(minkowski(e1, e1))
        e2 = np.array([0.0, 1.0, 0.0]) + minkowski(np.array([0.0, 1.0, 0.0]), b) * b
        e2 -= minkowski(e2, e1) * e1
        e2 /= math.sqrt(minkowski(e2, e2))
        return math.cos(angle) * e1 + math.sin(angle) * e2

    def distance(self, a, b):
        c = -minkowski(a, b)
        if c <= 1.0:
            return 0.0
        # arccosh loses precision near 1; use the chordal form there
        diff = np.asarray(a) - np.asarray(b)
        chord = minkowski(diff, diff)
        if chord < 1e-4 and chord >= 0:
            return 2.0 * math.asinh(math.sqrt(chord) / 2.0)
        return math.acosh(c)

    def log_map(self, p):
        """(radius, unit tangent) of ``p`` about the basepoint; tangent None at the base."""
        b = self.basepoint
        d = self.distance(b, p)
        if d == 0:
            return 0.0, None
        u = np.asarray(p) + minkowski(p, b) * b  # remove the normal component
        nu = math.sqrt(max(minkowski(u, u), 0.0))
        if nu == 0:
            return 0.0, None
        return d, u / nu

    def ray_point(self, direction, t):
        return math.cosh(t) * self.basepoint + math.sinh(t) * np.asarray(direction, float)

    def point_along(self, target, t):
        d, u = self.log_map(target)
        if u is None:
            return self.basepoint.copy()
        return self.ray_point(u, t)

    def geodesic_point(self, a, b, s):
        d = self.distance(a, b)
        if d == 0:
            return np.asarray(a, float).copy()
        u = (np.asarray(b) - math.cosh(d) * np.asarray(a)) / math.sinh(d)
        return math.cosh(s) * np.asarray(a) + math.sinh(s) * u

    def direction_to(self, p):
        return self.log_map(p)[1]

    def random_point(self, rng, radius):
        return self.from_polar(rng.uniform(0, radius), rng.uniform(0, 2 * math.pi))

    def describe(self):
        return {"space": "hyperbolic", "dim": 2}


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreePoint:
    """Point at distance ``offset`` from vertex ``a`` toward neighbour ``b``.

    Canonical form: ``a`` is the endpoint nearer the basepoint and
    0 <= offset < 1; vertices have ``b is None`` and offset 0.
    """

    a: object
    b: object = None
    offset: float = 0.0


class TreeSpace(Space):
    """Simplicial tree with unit-length edges.

    Subclasses provide ``base``, ``neighbors(v)``, ``vertex_distance(u, v)`` and
    ``vertex_path(u, v)`` (list of vertices from u to v inclusive).
    """

    tag = "tree"

    @property
    def basepoint(self):
        return TreePoint(self.base)

    def depth(self, v):
        return self.vertex_distance(self.base, v)

    def point(self, a, b=None, offset=0.0):
        if not 0.0 <= offset <= 1.0:
            raise InvalidInputError("tree offset must lie in [0, 1]")
        if b is None or offset == 0:
            return TreePoint(a)
        if offset == 1:
            return TreePoint(b)
        if self.depth(b) < self.depth(a):
            a, b, offset = b, a, 1.0 - offset
        return TreePoint(a, b, float(offset))

    def _ends(self, p):
        if p.b is None:
            return [(p.a, 0.0)]
        return [(p.a, p.offset), (p.b, 1.0 - p.offset)]

    def distance(self, p, q):
        if p.b is not None and q.b is not None and {p.a, p.b} == {q.a, q.b}:
            return abs(p.offset - q.offset)
        if p.b is not None and q.b is None and q.a in (p.a, p.b):
            return p.offset if q.a == p.a else 1.0 - p.offset
        if q.b is not None and p.b is None and p.a in (q.a, q.b):
            return q.offset if p.a == q.a else 1.0 - q.offset
        return min(s + self.vertex_distance(x, y) + t
                   for x, s in self._ends(p) for y, t in self._ends(q))

    def _walk(self, waypoints, s):
        """Point at arclength s along a vertex path given as a list."""
        if s <= 0:
            return TreePoint(waypoints[0])
        k = int(math.floor(s))
        if k >= len(waypoints) - 1:
            return TreePoint(waypoints[-1])
        frac = s - k
        return self.point(waypoints[k], waypoints[k + 1], frac)

    def geodesic_point(self, p, q, s):
        d = self.distance(p, q)
        s = min(max(s, 0.0), d)
        if p.b is not None and q.b is not None and {p.a, p.b} == {q.a, q.b}:
            step = math.copysign(s, q.offset - p.offset)
            return self.point(p.a, p.b, p.offset + step)
        # choose exit and entry endpoints realising the distance
        best = None
        for x, sx in self._ends(p):
            for y, ty in self._ends(q):
                total = sx + self.vertex_distance(x, y) + ty
                if best is None or total < best[0] - 1e-12:
                    best = (total, x, sx, y, ty)
        _, x, sx, y, ty = best
        if s <= sx:  # still on p's edge, heading to x
            other = p.b if x == p.a else p.a
            return self.point(x, other, sx - s) if p.b is not None else TreePoint(x)
        path = self.vertex_path(x, y)
        s2 = s - sx
        if s2 <= len(path) - 1:
            return self._walk(path, s2)
        rest = s2 - (len(path) - 1)
        other = q.b if y == q.a else q.a
        return self.point(y, other, rest)

    def point_along(self, target, t):
        return self.geodesic_point(self.basepoint, target, t)

    def ray_point(self, direction, t):
        # direction: tuple of vertices starting at the base
        if t > len(direction) - 1 + 1e-12:
            raise DepthError(f"ray truncated at depth {len(direction) - 1}, asked for t={t}")
        return self._walk(list(direction), t)

    def rays(self, depth):
        """All non-backtracking vertex paths of length ``depth`` from the base."""
        paths = [(self.base,)]
        for _ in range(depth):
            nxt = []
            for p in paths:
                prev = p[-2] if len(p) > 1 else None
                for w in self.neighbors(p[-1]):
                    if w != prev:
                        nxt.append(p + (w,))
            paths = nxt
        return paths

    def ball_vertices(self, radius):
        out = [self.base]
        frontier = [(self.base, None)]
        for _ in range(radius):
            nxt = []
            for v, parent in frontier:
                for w in self.neighbors(v):
                    if w != parent:
                        out.append(w)
                        nxt.append((w, v))
            frontier = nxt
        return out

    def random_point(self, rng, radius):
        v = self.base
        prev = None
        for _ in range(int(rng.integers(0, max(1, int(radius))))):
            nb = [w for w in self.neighbors(v) if w != prev]
            prev, v = v, nb[int(rng.integers(len(nb)))]
        nb = self.neighbors(v)
        return self.point(v, nb[int(rng.integers(len(nb)))], float(rng.uniform(0, 1)))


class RegularTree(TreeSpace):
    """The ``valence``-regular tree; vertices are reduced branch-index tuples."""

    def __init__(self, valence: int):
        if valence < 2:
            raise InvalidInputError("valence must be at least 2")
        self.valence = valence
        self.base = ()

    def neighbors(self, v):
        out = [] if not v else [v[:-1]]
        k = self.valence if not v else self.valence - 1
        out.extend(v + (c,) for c in range(k))
        return out

    @staticmethod
    def _common(u, v):
        k = 0
        for x, y in zip(u, v):
            if x != y:
                break
            k += 1
        return k

    def vertex_distance(self, u, v):
        return len(u) + len(v) - 2 * self._common(u, v)

    def vertex_path(self, u, v):
        k = self._common(u, v)
        up = [u[:i] for i in range(len(u), k - 1, -1)]
        down = [v[:i] for i in range(k + 1, len(v) + 1)]
        return up + down

    def describe(self):
        return {"space": "tree", "valence": self.valence}


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

class ProductSpace(Space):
    """l2 product; points and ray directions are pairs."""

    tag = "product"

    def __init__(self, left: Space, right: Space):
        self.left = left
        self.right = right

    @property
    def basepoint(self):
        return (self.left.basepoint, self.right.basepoint)

    def distance(self, a, b):
        return math.hypot(self.left.distance(a[0], b[0]), self.right.distance(a[1], b[1]))

    def components(self, p):
        return self.left.norm(p[0]), self.right.norm(p[1])

    def point_along(self, target, t):
        dl, dr = self.components(target)
        d = math.hypot(dl, dr)
        if d == 0:
            return self.basepoint
        return (self.left.point_along(target[0], t * dl / d),
                self.right.point_along(target[1], t * dr / d))

    def geodesic_point(self, a, b, s):
        dl = self.left.distance(a[0], b[0])
        dr = self.right.distance(a[1], b[1])
        d = math.hypot(dl, dr)
        if d == 0:
            return a
        return (self.left.geodesic_point(a[0], b[0], s * dl / d),
                self.right.geodesic_point(a[1], b[1], s * dr / d))

    def ray_point(self, direction, t):
        ld, rd, slope = direction
        theta = math.pi / 2 if slope == math.inf else math.atan(slope)
        left = self.left.basepoint if ld is None else self.left.ray_point(ld, t * math.cos(theta))
        right = self.right.basepoint if rd is None else self.right.ray_point(rd, t * math.sin(theta))
        return (left, right)

    def random_point(self, rng, radius):
        return (self.left.random_point(rng, radius), self.right.random_point(rng, radius))

    def describe(self):
        return {"space": "product", "children": [self.left.describe(), self.right.describe()]}


def space_from_dict(data) -> Space:
    try:
        kind = data["space"]
        if kind == "euclidean":
            return EuclideanSpace(int(data.get("dim", 1)))
        if kind == "hyperbolic":
            return HyperbolicPlane()
        if kind == "tree":
            return RegularTree(int(data.get("valence", 3)))
        if kind == "product":
            left, right = data["children"]
            return ProductSpace(space_from_dict(left), space_from_dict(right))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed space description: {exc}") from exc
    raise InvalidInputError(f"unknown space kind {data.get('space')!r}")


def space_from_json(text):
    try:
        return space_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


# ---------------------------------------------------------------------------
# tagged points and the module-level operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelPoint:
    space: Space = field(compare=False)
    coords: object = field(compare=False)


def distance(a: ModelPoint, b: ModelPoint) -> float:
    if a.space is not b.space:
        raise InvalidInputError("points live in different spaces")
    return a.space.distance(a.coords, b.coords)


def project_to_ball(y: ModelPoint, r: float) -> ModelPoint:
    return ModelPoint(y.space, y.space.project_to_ball(y.coords, r))


@dataclass(frozen=True)
class GeodesicRay:
    space: Space = field(compare=False)
    direction: object = field(compare=False)
    depth: float = math.inf

    @property
    def base(self):
        return self.space.basepoint

    def eval(self, t):
        if t < 0:
            raise InvalidInputError("ray parameter must be nonnegative")
        if t > self.depth + 1e-12:
            raise DepthError(f"ray truncated at depth {self.depth}")
        return self.space.ray_point(self.direction, t)


@dataclass(frozen=True)
class ConeNbhd:
    """V(x, eps): points beyond |x| whose projection to radius |x| is eps-close to x."""

    space: Space = field(compare=False)
    center: object = field(compare=False)
    epsilon: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        if self.radius <= 0:
            raise InvalidInputError("cone neighbourhood centre must differ from the basepoint")

    @property
    def radius(self):
        return self.space.norm(self.center)


def in_cone_nbhd(y, v: ConeNbhd) -> bool:
    space = v.space
    r = v.radius
    if isinstance(y, GeodesicRay):
        return space.distance(v.center, y.eval(r)) < v.epsilon
    if not space.norm(y) > r:
        return False
    return space.distance(v.center, space.project_to_ball(y, r)) < v.epsilon


@dataclass(frozen=True)
class CoverConstants:
    radius_R: float
    delta: float
    delta_prime: float = 0.0
    net_size: int = 0

    def __post_init__(self):
        if not (self.radius_R > 0 and self.delta > 0):
            raise InvalidInputError("cover constants must be positive")
        if self.delta > 1.0 / self.radius_R + 1e-15:
            raise InvalidInputError("delta must not exceed 1/R")


def eta_lower(space, x, v: ConeNbhd) -> float:
    """Certified lower bound for sup{eps : V(x, eps) inside v}, valid when |x| >= |centre|.

    Projection to the smaller sphere is 1-Lipschitz, so V(x, eps) lies in v once
    eps + d(p_r(x), centre) <= v.epsilon.
    """
    if space.norm(x) < v.radius:
        return 0.0
    return max(0.0, v.epsilon - space.distance(space.project_to_ball(x, v.radius), v.center))


def _covering_index(space, ray, cover):
    for i, v in enumerate(cover):
        if in_cone_nbhd(ray, v):
            return i
    return None


def cover_constants(space, cover: Sequence[ConeNbhd], net: Sequence[GeodesicRay],
                    margin: float = 1.0) -> CoverConstants:
    if margin <= 0:
        raise InvalidInputError("margin must be positive")
    for ray in net:
        if _covering_index(space, ray, cover) is None:
            raise CoverageError(f"boundary direction {_describe_ray(ray)} is not covered")
    R = max(v.radius for v in cover) + margin
    best = math.inf
    for ray in net:
        x = ray.eval(R)
        best = min(best, max(eta_lower(space, x, v) for v in cover))
    if not best > 0:
        raise CoverageError("some sphere point has no positive cover margin")
    delta = min(best / 2.0, 1.0 / R)
    return CoverConstants(R, delta, best, len(net))


def verify_cover_constants(space, cover, consts: CoverConstants, net, radii_steps: int = 3):
    """Return the list of net points (ray, t) at |x| >= R with no cover element containing V(x, delta)."""
    bad = []
    hint = 0  # neighbouring net points are usually absorbed by the same element
    for ray in net:
        top = min(ray.depth, consts.radius_R * 4)
        for k in range(radii_steps):
            t = consts.radius_R + (top - consts.radius_R) * k / max(radii_steps - 1, 1)
            x = ray.eval(t)
            order = [hint] + [i for i in range(len(cover)) if i != hint]
            hit = next((i for i in order if eta_lower(space, x, cover[i]) >= consts.delta), None)
            if hit is None:
                bad.append((_describe_ray(ray), t))
            else:
                hint = hit
    return bad


def _describe_ray(ray):
    d = ray.direction
    if isinstance(d, np.ndarray):
        return [round(float(c), 6) for c in d]
    return repr(d)


# ---------------------------------------------------------------------------
# standard nets and covers
# ---------------------------------------------------------------------------

def boundary_net(space, resolution: int, depth=None):
    """Deterministic sample of boundary directions.

    ``resolution`` is the number of angles for 2-d spaces, the ray depth for
    trees and the number of slope steps for products.
    """
    if isinstance(space, EuclideanSpace):
        if space.dim == 1:
            dirs = [np.array([1.0]), np.array([-1.0])]
        else:
            dirs = _sphere_dirs(space.dim, resolution)
        return [GeodesicRay(space, d) for d in dirs]
    if isinstance(space, HyperbolicPlane):
        return [GeodesicRay(space, space.unit_tangent(2 * math.pi * k / resolution))
                for k in range(resolution)]
    if isinstance(space, TreeSpace):
        dep = resolution if depth is None else depth
        return [GeodesicRay(space, p, dep) for p in space.rays(dep)]
    if isinstance(space, ProductSpace):
        left = boundary_net(space.left, resolution, depth)
        right = boundary_net(space.right, resolution, depth)
        out = []
        steps = max(resolution, 1)
        for k in range(steps + 1):
            theta = (math.pi / 2) * k / steps
            slope = math.inf if k == steps else math.tan(theta)
            ls = [None] if k == steps else left
            rs = [None] if k == 0 else right
            for lr in ls:
                for rr in rs:
                    dl = None if lr is None else lr.direction
                    dr = None if rr is None else rr.direction
                    cap = math.inf
                    if lr is not None and k < steps:
                        cap = lr.depth / math.cos(theta)
                    if rr is not None and k > 0:
                        cap = min(cap, rr.depth / math.sin(theta))
                    out.append(GeodesicRay(space, (dl, dr, slope), cap))
        return out
    raise InvalidInputError(f"no boundary net for {space!r}")


def _sphere_dirs(dim, resolution):
    if dim == 2:
        return [np.array([math.cos(a), math.sin(a)])
                for a in (2 * math.pi * k / resolution for k in range(resolution))]
    pts = []
    grid = np.linspace(-1, 1, resolution + 1)
    for c in itertools.product(grid, repeat=dim):
        c = np.array(c)
        if np.max(np.abs(c)) == 1.0:
            pts.append(c / np.linalg.norm(c))
    return pts


def standard_cover(space, net, radius: float, epsilon: float):
    """Cover by V(ray(radius), epsilon) over the given (coarse) net."""
    return [ConeNbhd(space, ray.eval(radius), epsilon) for ray in net]


# ---------------------------------------------------------------------------
# sublinear threshold
# ---------------------------------------------------------------------------

def sublinear_ball_threshold(consts: CoverConstants, phi: Callable, step: float = 1.0,
                             horizon: float = 1e6, certify=True) -> float:
    """Least grid value T = R + k*step (k >= 1) such that for all grid t >= T:

        phi(t) / (t - phi(t)) < delta^2   and   t - phi(t) > R.
    """
    from .compression import certify_sublinear

    if certify and not certify_sublinear(phi, horizon).certified:
        raise CertificationError("phi is not certified sublinear")
    R, d2 = consts.radius_R, consts.delta ** 2
    grid = R + step * np.arange(1, int((horizon - R) / step) + 1, dtype=float)
    vals = np.asarray(phi(grid), dtype=float) * np.ones_like(grid)
    gap = grid - vals
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (gap > R) & (vals / gap < d2)
    bad = np.nonzero(~ok)[0]
    if len(bad) == 0:
        return float(grid[0])
    if bad[-1] == len(grid) - 1:
        raise CertificationError("threshold not reached before the horizon")
    return float(grid[bad[-1] + 1])
