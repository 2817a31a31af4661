"""Translate statistics and nullity certification on T x R^n.

Pipeline: build a fundamental domain K, sweep its translates over a word ball,
fit a proper bound from the uncompressed sweep, compress, sweep again and
certify.  Tree data and the affine fiber maps are exact; compressed fiber
coordinates are floats.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .bass_serre import (
    BassSerreTree, TreeVertex, base_vertex, build_ball, theta, tree_act, tree_distance, vertex_of,
)
from .compression import (
    CompressionMap, ProperFunctionPair, conjugated_radius, envelope, hhat, parse_phi,
)
from .errors import (
    CertificationError, DepthError, DomainTooSmallError, FitError, InvalidInputError,
)
from .graph_of_groups import GraphOfGroups, NormalForm, enumerate_ball
from .metric_models import (
    CoverConstants, EuclideanSpace, ProductSpace, boundary_net, cover_constants,
    standard_cover, sublinear_ball_threshold,
)


# ---------------------------------------------------------------------------
# fundamental domain
# ---------------------------------------------------------------------------

@dataclass
class FundamentalDomain:
    graph: GraphOfGroups = field(repr=False)
    tree_part: list          # TreeVertex per graph vertex (lift of the spanning tree)
    cube_side: Fraction
    fiber_samples: list      # exact points of the cube used for visual diameters
    coverage: float = 1.0
    probe_count: int = 0

    @property
    def rank(self):
        return self.graph.rank

    def cube_corners(self):
        s = self.cube_side
        return [tuple(Fraction(c) * s for c in bits)
                for bits in itertools.product((0, 1), repeat=self.rank)]

    @property
    def float_samples(self):
        return np.array([[float(c) for c in p] for p in self.fiber_samples])

    def tree_diameter(self):
        return max((tree_distance(u, v) for u in self.tree_part for v in self.tree_part),
                   default=0)


def stabilizer_basis(g: GraphOfGroups, v):
    """Columns span the translation lattice of the stabiliser of the lift of v."""
    from .bass_serre import h_vertex
    return h_vertex(g, v).inverse().matrix


def default_cube_side(g: GraphOfGroups) -> Fraction:
    """Side of a cube containing a fundamental parallelepiped of every stabiliser lattice."""
    best = Fraction(0)
    for v in g.vertices:
        b = stabilizer_basis(g, v)
        best = max(best, max(sum(abs(x) for x in row) for row in b))
    return best


def _in_cube_plus_lattice(x, basis, side):
    """Is x in [0, side]^n + basis Z^n?  Exact search around the nearest lattice point."""
    from .bass_serre import _mat_inverse, _mat_vec
    n = len(x)
    inv = _mat_inverse(basis)
    centre = _mat_vec(inv, tuple(xi - side / 2 for xi in x))
    spread = int(math.ceil(float(side) * max(sum(abs(v) for v in row) for row in inv))) + 1
    base = [math.floor(c) for c in centre]
    for off in itertools.product(range(-spread, spread + 1), repeat=n):
        z = tuple(b + o for b, o in zip(base, off))
        y = tuple(xi - li for xi, li in zip(x, _mat_vec(basis, z)))
        if all(0 <= yi <= side for yi in y):
            return True
    return False


def _cover_mask(x, basis, side, margin=1e-9):
    """Float screen for _in_cube_plus_lattice on rows of ``x``.

    Returns a mask of the rows that are not clearly inside; those get the exact test.
    """
    from .bass_serre import _mat_inverse
    B = np.array([[float(v) for v in row] for row in basis])
    inv = np.array([[float(v) for v in row] for row in _mat_inverse(basis)])
    s = float(side)
    n = x.shape[1]
    centre = np.floor((x - s / 2) @ inv.T)
    spread = int(math.ceil(s * np.abs(inv).sum(axis=1).max())) + 1
    inside = np.zeros(len(x), dtype=bool)
    for off in itertools.product(range(-spread, spread + 1), repeat=n):
        y = x - (centre + np.array(off)) @ B.T
        inside |= np.all((y >= margin) & (y <= s - margin), axis=1)
    return ~inside


def build_domain(g: GraphOfGroups, cube_side=None, probe_radius: int = 3,
                 samples_per_side: int = 4, strict: bool = True) -> FundamentalDomain:
    side = default_cube_side(g) if cube_side is None else Fraction(cube_side)
    if side <= 0:
        raise InvalidInputError("cube side must be positive")
    tree_part = [vertex_of(g.identity() if not g.tree_paths[v] else
                           _path(g, g.tree_paths[v])) for v in g.vertices]
    n = g.rank
    grid = [side * Fraction(k, samples_per_side) for k in range(samples_per_side + 1)]
    fiber_samples = list(itertools.product(grid, repeat=n))
    dom = FundamentalDomain(g, tree_part, side, fiber_samples)

    # probe net: tree vertices near the base times a fiber grid
    depth, _, _ = build_ball(g, probe_radius)
    step = Fraction(1, 8) if n == 1 else Fraction(1, 4)
    count = int(probe_radius / step)
    fiber_grid = [k * step + Fraction(1, 97) for k in range(-count, count + 1)]
    probes = misses = 0
    lift = {v.type: v for v in tree_part}
    pts = list(itertools.product(fiber_grid, repeat=n))
    pts_f = np.array([[float(c) for c in p] for p in pts])
    for tv in sorted(depth, key=lambda v: v.sort_key()):
        pv = lift[tv.type].rep
        g0 = tv.rep.multiply(pv.invert())
        inv = theta(g, g0).inverse()
        basis = stabilizer_basis(g, tv.type)
        undecided = _cover_mask(inv.apply_float(pts_f), basis, side)
        probes += len(pts)
        for k in np.nonzero(undecided)[0]:
            if not _in_cube_plus_lattice(inv(pts[k]), basis, side):
                misses += 1
    dom.probe_count = probes
    dom.coverage = 1.0 - misses / probes
    if strict and misses:
        raise DomainTooSmallError(
            f"cube side {side} leaves {misses} of {probes} probe points uncovered; "
            f"try cube side >= {default_cube_side(g)}")
    return dom


def _path(g, letters):
    w = g.identity()
    for letter in letters:
        w = w.append_letter(letter)
    return w


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TranslateStats:
    rep: str
    wordlen: int
    tree_dist: int
    tree_diam: int
    fiber_diam: float
    visual_diam: float
    exact_fiber_diam: Fraction | None = None
    sort_key: tuple = field(default=(), compare=False, repr=False)


def _signed_radial(cmap, x):
    """Radial compression on R^1 or R^n, float arrays of shape (k, n)."""
    x = np.asarray(x, float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0, np.asarray(cmap(r)) / np.where(r > 0, r, 1.0), 0.0)
    return x * scale


def _diameter(points):
    p = np.asarray(points, float)
    if len(p) < 2:
        return 0.0
    diff = p[:, None, :] - p[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def _fiber_image(g, dom: FundamentalDomain, th, cmap):
    """(exact uncompressed diameter or None, float diameter, sample images)."""
    n = dom.rank
    corners = [th(c) for c in dom.cube_corners()]
    samples = th.apply_float(dom.float_samples)
    if cmap is None:
        if n == 1:
            exact = abs(corners[1][0] - corners[0][0])
            return exact, float(exact), samples
        d2 = max(sum((a - b) ** 2 for a, b in zip(p, q)) for p in corners for q in corners)
        return None, math.sqrt(d2), samples
    comp = _signed_radial(cmap, samples)
    if n == 1:
        ends = _signed_radial(cmap, np.array([[float(corners[0][0])], [float(corners[1][0])]]))
        return None, float(abs(ends[1, 0] - ends[0, 0])), comp
    # diameter of the compressed image sampled on a finer boundary grid
    fine = _boundary_grid(dom, 8)
    img = _signed_radial(cmap, np.array([[float(v) for v in th(p)] for p in fine]))
    return None, max(_diameter(img), _diameter(comp)), comp


def _boundary_grid(dom, k):
    s = dom.cube_side
    grid = [s * Fraction(i, k) for i in range(k + 1)]
    return [p for p in itertools.product(grid, repeat=dom.rank) if any(c in (0, s) for c in p)]


def _visual_diameter(tree_pts, fiber_pts, R0):
    """Diameter of the projection of {(tree_i, fiber_j)} onto the R0-ball in T x R^n.

    ``tree_pts`` is a list of (distance from base, {other index: gromov product}).
    Projection is radial in the product, so the tree coordinate slides along
    the geodesic from the base to the tree point.
    """
    d_tree = np.array([d for d, _ in tree_pts], float)
    fib = np.asarray(fiber_pts, float)
    if len(tree_pts) == 1:
        norm = np.sqrt(d_tree[0] ** 2 + (fib ** 2).sum(-1))
        scale = np.where(norm > R0, R0 / np.where(norm > 0, norm, 1.0), 1.0)
        pts = np.column_stack([d_tree[0] * scale, fib * scale[:, None]])
        return _diameter(pts)
    rows = []
    for i, dt in enumerate(d_tree):
        norm = np.sqrt(dt ** 2 + (fib ** 2).sum(-1))
        scale = np.where(norm > R0, R0 / np.where(norm > 0, norm, 1.0), 1.0)
        for j in range(len(fib)):
            rows.append((i, dt * scale[j], fib[j] * scale[j]))
    best = 0.0
    for (i, si, yi), (k, sk, yk) in itertools.combinations(rows, 2):
        if i == k:
            dt = abs(si - sk)
        else:
            c = tree_pts[i][1][k]
            dt = abs(si - sk) if min(si, sk) <= c else si + sk - 2 * c
        best = max(best, math.hypot(dt, float(np.linalg.norm(yi - yk))))
    return best


def translate_sweep(g: GraphOfGroups, dom: FundamentalDomain, L: int,
                    compressed: CompressionMap | None = None, R0: float = 5.0,
                    max_elements: int = 2_000_000):
    if R0 <= 0:
        raise InvalidInputError("reference radius must be positive")
    root = base_vertex(g)
    out = []
    for length, w in enumerate_ball(g, L, max_elements=max_elements):
        verts = [tree_act(w, v) for v in dom.tree_part]
        dists = [tree_distance(root, v) for v in verts]
        tree_pts = []
        for i, v in enumerate(verts if len(verts) > 1 else []):
            gp = {}
            for k, u in enumerate(verts):
                if k != i:
                    gp[k] = (dists[i] + dists[k] - tree_distance(v, u)) / 2
            tree_pts.append((dists[i], gp))
        if len(verts) == 1:
            tree_pts = [(dists[0], {})]
        tdiam = max((tree_distance(u, v) for u, v in itertools.combinations(verts, 2)),
                    default=0)
        th = theta(g, w)
        exact, fd, samples = _fiber_image(g, dom, th, compressed)
        out.append(TranslateStats(
            rep=str(w), wordlen=length, tree_dist=min(dists), tree_diam=tdiam,
            fiber_diam=fd, visual_diam=_visual_diameter(tree_pts, samples, R0),
            exact_fiber_diam=exact, sort_key=(length, w.sort_key())))
    out.sort(key=lambda s: s.sort_key)
    return out


# ---------------------------------------------------------------------------
# fitting and certification
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    S_star: int
    D: Fraction
    C: Fraction
    pair: ProperFunctionPair
    points: int
    c_max: float


def _round_up(x: float, step: Fraction) -> Fraction:
    q = Fraction(x).limit_denominator(10**9)
    k = math.ceil(q / step - Fraction(1, 10**12))
    out = k * step
    return out if out >= Fraction(x) - Fraction(1, 10**12) else out + step


def fit_psi(stats, step=Fraction(1, 64), lipschitz_C=2, graph: GraphOfGroups | None = None):
    """Fit D * C**R over (tree distance, fiber diameter) and return the hinted envelope.

    C is searched on the grid 1 + k*step up to ``c_max``, the larger of
    ``lipschitz_C`` and the largest operator norm of an edge map (if a graph
    is given); exceeding it is a fit error.
    """
    if not stats:
        raise FitError("no translate statistics to fit")
    step = Fraction(step)
    S_star = max(s.tree_diam for s in stats)
    by_r = {}
    for s in stats:
        if not math.isfinite(s.fiber_diam):
            raise FitError(f"non-finite fiber diameter for {s.rep}")
        by_r[s.tree_dist] = max(by_r.get(s.tree_dist, 0.0), s.fiber_diam)
    c_max = float(lipschitz_C)
    if graph is not None:
        from .bass_serre import lift_maps
        for eid in graph.edges:
            f = lift_maps(graph, eid)[2]
            for m in (f, f.inverse()):
                a = np.array([[float(x) for x in r] for r in m.matrix])
                c_max = max(c_max, float(np.linalg.norm(a, 2)))
    rs = sorted(r for r, v in by_r.items() if v > 0)
    ratio = 1.0
    if rs:
        r0 = rs[0]
        for r in rs[1:]:
            ratio = max(ratio, (by_r[r] / by_r[r0]) ** (1.0 / (r - r0)))
    C = _round_up(ratio, step) if ratio > 1 else 1 + step
    if C <= 1:
        C = 1 + step
    if float(C) > c_max + 1e-12:
        raise FitError(f"exponential rate {float(C)} exceeds the search cap {c_max}")
    D = Fraction(0)
    for r, v in by_r.items():
        D = max(D, Fraction(v).limit_denominator(10**6) / C ** r)
    # guard against rounding in limit_denominator
    while any(v > float(D * C ** r) * (1 + 1e-12) for r, v in by_r.items()):
        D += step
    pair = envelope(((r, v) for r, v in by_r.items()), growth_hint=(D, C))
    return FitReport(S_star, D, C, pair, len(stats), c_max)


def standard_product_cover(g: GraphOfGroups, depth: int = 3, resolution: int = 2,
                           radius: float = 2.0, epsilon: float = 1.5):
    space = ProductSpace(BassSerreTree(g), EuclideanSpace(g.rank))
    net = boundary_net(space, resolution, depth)
    cover = standard_cover(space, net, radius, epsilon)
    consts = cover_constants(space, cover, net, margin=1.0)
    return space, cover, net, consts


@dataclass
class Certificate:
    certified: bool
    threshold: float
    S_star: int
    wordlen_cap: int
    exceptional: list
    counterexample: dict | None
    max_ratio: float
    note: str = ("bounded verification: finiteness of the exceptional set is checked "
                 "within the enumerated word ball only; affine fiber action")

    def to_dict(self):
        return asdict(self)


def nullity_certify(stats, consts: CoverConstants, phi_star, S_star: int | None = None,
                    wordlen_cap: int | None = None, factor: float = 4.0,
                    tol: float = 1e-9) -> Certificate:
    """Per-translate bound fiber <= factor * phi_star(tree distance), then the threshold T*."""
    if not stats:
        raise InvalidInputError("empty sweep")
    S = max(s.tree_diam for s in stats) if S_star is None else S_star
    T = sublinear_ball_threshold(consts, lambda R: 2 * S + factor * np.asarray(phi_star(R)))
    worst, bad = 0.0, None
    for s in stats:
        bound = factor * float(phi_star(s.tree_dist))
        ratio = s.fiber_diam / bound if bound > 0 else math.inf
        if ratio > worst:
            worst = ratio
        if s.fiber_diam > bound + tol and bad is None:
            bad = {"rep": s.rep, "wordlen": s.wordlen, "tree_dist": s.tree_dist,
                   "fiber_diam": s.fiber_diam, "bound": bound}
    exceptional = [s.rep for s in stats if s.tree_dist <= T]
    return Certificate(bad is None, T, S,
                       wordlen_cap if wordlen_cap is not None else max(s.wordlen for s in stats),
                       exceptional, bad, worst)


def visual_diameter_trend(stats, R0: float | None = None):
    """Word length -> max visual diameter (R0 is fixed when the sweep is taken)."""
    table = {}
    for s in stats:
        table[s.wordlen] = max(table.get(s.wordlen, 0.0), s.visual_diam)
    return dict(sorted(table.items()))


# ---------------------------------------------------------------------------
# slope limits
# ---------------------------------------------------------------------------

@dataclass
class SlopeResult:
    m: float
    ratio: float
    inverse_ratio: float
    error: float
    errors: list            # (t, error) along the sampled grid
    tree_endpoint: tuple    # images of the truncated ray vertices
    fiber_endpoint: tuple   # normalised linear part applied to eta
    fiber_direction_observed: tuple
    isometry_checked: int


def _compressed_fiber_image(cmap, A, b, eta, t):
    """h(A h^-1(t eta) + b), with the asymptotic route once h^-1(t) overflows."""
    eta = np.asarray(eta, float)
    Aeta = A @ eta
    lam = float(np.linalg.norm(Aeta))
    x = cmap.inverse(t) if t > 0 else 0.0
    if math.isfinite(x) and x < 1e12:
        p = A @ (x * eta) + b
        return _signed_radial(cmap, p[None, :])[0]
    return conjugated_radius(cmap, lam, t) * Aeta / lam


def slope_limit(g: GraphOfGroups, w: NormalForm, xi, eta, m, cmap: CompressionMap,
                t_max: float = 1e5, points: int = 6) -> SlopeResult:
    """Push the slope-m ray (xi(t/m), t*eta) through the conjugated action of w."""
    if not cmap.log_precomposed:
        raise CertificationError("slope limits need a linearly controlled (log-precomposed) map")
    xi = tuple(xi)
    depth = len(xi) - 1
    root = base_vertex(g)
    if xi[0] != root:
        raise InvalidInputError("tree ray must start at the base vertex")
    moved = tree_distance(root, tree_act(w, root))
    if moved > depth:
        raise DepthError(f"w moves the base {moved} edges; ray depth {depth} is too short")
    image = tuple(tree_act(w, v) for v in xi)
    for k, v in enumerate(image):  # isometry on the truncated prefix
        if tree_distance(image[0], v) != k:
            raise AssertionError("tree action failed to preserve distances")
    th = theta(g, w)
    A = np.array([[float(x) for x in r] for r in th.matrix])
    b = np.array([float(x) for x in th.offset])
    eta = np.asarray(eta, float)
    eta = eta / np.linalg.norm(eta)
    lin = A @ eta
    fiber_end = tuple((lin / np.linalg.norm(lin)).tolist())
    y0 = _signed_radial(cmap, b[None, :])[0]
    m = float(m)
    errors = []
    observed = fiber_end
    ratio = inv_ratio = err = 0.0
    for t in np.geomspace(10.0, t_max, points):
        t = float(t)
        if m == math.inf:
            dx = 0.0
            y = _compressed_fiber_image(cmap, A, b, eta, t)
        elif m == 0:
            dx = t
            y = y0
        else:
            dx = t / m
            y = _compressed_fiber_image(cmap, A, b, eta, t)
        dy = float(np.linalg.norm(y - y0))
        if dy > 0:
            observed = tuple(((y - y0) / dy).tolist())
        ratio = dy / dx if dx > 0 else math.inf
        inv_ratio = dx / dy if dy > 0 else math.inf
        err = inv_ratio if m == math.inf else abs(ratio - m)
        errors.append((t, err))
    return SlopeResult(m, ratio, inv_ratio, err, errors, image, fiber_end, observed, len(image))


# ---------------------------------------------------------------------------
# end-to-end pipeline and serialisation
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("rep", "wordlen", "tree_dist", "tree_diam", "fiber_diam", "visual_diam")


def stats_csv(stats) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in stats:
        writer.writerow([s.rep, s.wordlen, s.tree_dist, s.tree_diam,
                         repr(float(s.fiber_diam)), repr(float(s.visual_diam))])
    return buf.getvalue()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def run_nullity(g: GraphOfGroups, L: int, compress: str = "log", cube_side=None,
                R0: float = 5.0, seed: int = 0, phi_name: str = "log",
                max_elements: int = 2_000_000, lipschitz_C=2):
    """Uncompressed sweep, fit, optional compressed sweep, certificate.

    Returns ``(report dict, stats used for the CSV)``.  ``compress`` is ``none``
    or a sublinear function name; with ``none`` the raw sweep is certified
    against the modulus the compressed pipeline would use.
    """
    config = {"graph": g.to_dict(), "wordlen": L, "compress": compress,
              "cube_side": None if cube_side is None else str(Fraction(cube_side)),
              "R0": R0, "seed": seed, "phi": phi_name}
    np.random.default_rng(seed)  # no randomness is consumed; kept for provenance
    dom = build_domain(g, cube_side)
    raw = translate_sweep(g, dom, L, None, R0, max_elements)
    fit = fit_psi(raw, lipschitz_C=lipschitz_C, graph=g)
    phi = parse_phi(compress if compress != "none" else phi_name)
    cmap = hhat(fit.pair, phi, log_precomposed=True, space_tag=f"EuclideanN({g.rank})")
    if compress == "none":
        stats = raw
    else:
        stats = translate_sweep(g, dom, L, cmap, R0, max_elements)
    _, _, _, consts = standard_product_cover(g)
    cert = nullity_certify(stats, consts, cmap.phi_star, S_star=dom.tree_diameter(),
                           wordlen_cap=L)
    exceptional = cert.exceptional
    report = {
        "provenance": {"version": __version__, "config_hash": config_hash(config),
                       "caveat": "net-certified and bounded-verification results; "
                                 "not a proof beyond the enumerated scale"},
        "config": config,
        "domain": {"cube_side": str(dom.cube_side), "coverage": dom.coverage,
                   "probes": dom.probe_count, "tree_diameter": dom.tree_diameter()},
        "fit": {"S_star": fit.S_star, "D": str(fit.D), "C": str(fit.C),
                "psi": fit.pair.to_dict(), "c_max": fit.c_max},
        "cover": asdict(consts),
        "certificate": {**{k: v for k, v in cert.to_dict().items() if k != "exceptional"},
                        "exceptional_count": len(exceptional),
                        "exceptional_sample": exceptional[:20]},
        "certified_at_scale": {"wordlen": L, "elements": len(stats),
                               "certified": cert.certified,
                               "threshold": cert.threshold,
                               "max_tree_dist": max(s.tree_dist for s in stats)},
        "visual_diameter_trend": {str(k): v for k, v in visual_diameter_trend(stats).items()},
    }
    return report, stats
