"""Bass-Serre tree, exact fiber action and the product action on T x R^n.

Tree vertices are left cosets g.G_v, stored as the path normal form with its
trailing vertex syllable cleared.  The fiber action sends a path word
z0 l1 z1 ... lk zk to the affine map T(z0) F(l1) T(z1) ... F(lk) T(zk), where
F(e, +1) = f_e = M+ (M-)^-1 and F(e, -1) = f_e^-1.  All of this is exact
rational arithmetic; floats only appear once compression is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InvalidInputError, InvalidMonomorphismError, ResourceGuardError
from .graph_of_groups import GraphOfGroups, NormalForm
from .metric_models import TreePoint, TreeSpace


# ---------------------------------------------------------------------------
# exact affine maps
# ---------------------------------------------------------------------------

def _mat_inverse(m):
    n = len(m)
    a = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)]
         for i, row in enumerate(m)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise InvalidMonomorphismError("singular matrix")
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [x / p for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                c = a[r][col]
                a[r] = [x - c * y for x, y in zip(a[r], a[col])]
    return tuple(tuple(row[n:]) for row in a)


def _mat_mul(x, y):
    n = len(x)
    return tuple(tuple(sum((x[i][k] * y[k][j] for k in range(n)), Fraction(0))
                       for j in range(n)) for i in range(n))


def _mat_vec(m, v):
    return tuple(sum((a * b for a, b in zip(row, v)), Fraction(0)) for row in m)


@dataclass(frozen=True)
class AffineMap:
    """x -> A x + b over the rationals."""

    matrix: tuple
    offset: tuple

    def __post_init__(self):
        if all(type(x) is Fraction for row in self.matrix for x in row) and all(
                type(x) is Fraction for x in self.offset):
            object.__setattr__(self, "matrix", tuple(map(tuple, self.matrix)))
            object.__setattr__(self, "offset", tuple(self.offset))
            return
        object.__setattr__(self, "matrix",
                           tuple(tuple(Fraction(x) for x in row) for row in self.matrix))
        object.__setattr__(self, "offset", tuple(Fraction(x) for x in self.offset))

    @property
    def n(self):
        return len(self.offset)

    @classmethod
    def identity(cls, n):
        return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)), (0,) * n)

    @classmethod
    def translation(cls, z):
        n = len(z)
        return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)), tuple(z))

    @classmethod
    def linear(cls, m):
        return cls(m, (0,) * len(m))

    def __call__(self, x):
        x = tuple(Fraction(v) for v in x)
        return tuple(a + b for a, b in zip(_mat_vec(self.matrix, x), self.offset))

    def apply_float(self, x):
        """Apply to float points; ``x`` has shape (..., n)."""
        a = np.array([[float(v) for v in row] for row in self.matrix])
        b = np.array([float(v) for v in self.offset])
        return np.asarray(x, float) @ a.T + b

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self o other."""
        return AffineMap(_mat_mul(self.matrix, other.matrix),
                         tuple(a + b for a, b in zip(_mat_vec(self.matrix, other.offset),
                                                     self.offset)))

    __matmul__ = compose

    def inverse(self) -> "AffineMap":
        inv = _mat_inverse(self.matrix)
        return AffineMap(inv, tuple(-x for x in _mat_vec(inv, self.offset)))

    def is_identity(self):
        return self == AffineMap.identity(self.n)

    def to_dict(self):
        return {"matrix": [[str(x) for x in row] for row in self.matrix],
                "offset": [str(x) for x in self.offset]}

    def __str__(self):
        if self.n == 1:
            a, b = self.matrix[0][0], self.offset[0]
            return f"x -> {a}*x + {b}"
        return f"x -> {[[str(v) for v in r] for r in self.matrix]} x + {[str(v) for v in self.offset]}"


# ---------------------------------------------------------------------------
# fiber action
# ---------------------------------------------------------------------------

def lift_maps(g: GraphOfGroups, edge_id):
    """(x -> M- x, x -> M+ x, f_e = M+ (M-)^-1)."""
    try:
        e = g.edges[edge_id]
    except KeyError as exc:
        raise InvalidInputError(f"unknown edge {edge_id!r}") from exc
    pm, pp = AffineMap.linear(e.minus), AffineMap.linear(e.plus)
    return pm, pp, pp.compose(pm.inverse())


def _letter_map(g, letter):
    cache = g.__dict__.setdefault("_letter_maps", {})
    if letter not in cache:
        f = lift_maps(g, letter[0])[2]
        cache[letter] = f if letter[1] > 0 else f.inverse()
    return cache[letter]


def theta(g: GraphOfGroups, w: NormalForm) -> AffineMap:
    """Affine fiber map of a path word (a homomorphism on closed paths)."""
    out = _theta_prefix(g, w.start, w.syllables[:-1], w.letters)
    z = w.syllables[-1]
    return out.compose(AffineMap.translation(z)) if any(z) else out


def _theta_prefix(g, start, syllables, letters):
    # map of z0 l1 z1 ... z_{k-1} l_k, memoised per graph on the prefix
    cache = g.__dict__.setdefault("_theta_cache", {})
    key = (start, syllables, letters)
    hit = cache.get(key)
    if hit is not None:
        return hit
    if not letters:
        out = AffineMap.identity(g.rank)
    else:
        out = _theta_prefix(g, start, syllables[:-1], letters[:-1])
        z = syllables[-1]
        if any(z):
            out = out.compose(AffineMap.translation(z))
        out = out.compose(_letter_map(g, letters[-1]))
    if len(cache) < 500_000:
        cache[key] = out
    return out


def h_vertex(g: GraphOfGroups, v) -> AffineMap:
    """h_v: composite of the edge maps along the tree path from the base to v."""
    h = AffineMap.identity(g.rank)
    for eid, sign in g.tree_paths[v]:
        f = lift_maps(g, eid)[2]
        # a step (e, -1) goes from i(e) to t(e) and contributes f_e
        h = (f if sign < 0 else f.inverse()).compose(h)
    return h


def theta_vertex(g: GraphOfGroups, v, alpha: AffineMap) -> AffineMap:
    h = h_vertex(g, v)
    return h.inverse().compose(alpha).compose(h)


def theta_edge(g: GraphOfGroups, edge_id) -> AffineMap:
    e = g.edges[edge_id]
    f = lift_maps(g, edge_id)[2]
    return h_vertex(g, e.target).inverse().compose(f).compose(h_vertex(g, e.source))


@dataclass
class RelatorReport:
    results: list
    tree_edges: list
    generator_checks: list

    @property
    def passed(self):
        return (all(r["ok"] for r in self.results) and all(r["ok"] for r in self.tree_edges)
                and all(r["ok"] for r in self.generator_checks))

    def failures(self):
        return [r for r in self.results + self.tree_edges + self.generator_checks if not r["ok"]]

    def to_dict(self):
        def clean(rows):
            return [{k: (v.to_dict() if isinstance(v, AffineMap) else v) for k, v in r.items()}
                    for r in rows]
        return {"passed": self.passed, "relators": clean(self.results),
                "tree_edges": clean(self.tree_edges),
                "generator_checks": clean(self.generator_checks)}


def verify_relators(g: GraphOfGroups) -> RelatorReport:
    """Check theta_F(e) theta_i(M- b) theta_F(e)^-1 == theta_t(M+ b) on basis vectors b.

    Uses the h_v / theta_v / theta_F description, independent of ``theta`` on
    words; a second table cross-checks ``theta`` on the generators.
    """
    n = g.rank
    results, tree_rows, gen_rows = [], [], []
    for e in g.edges.values():
        tf = theta_edge(g, e.id)
        for i in range(n):
            beta = tuple(int(k == i) for k in range(n))
            left = tf.compose(theta_vertex(g, e.source, AffineMap.translation(
                _mat_vec(e.minus, beta)))).compose(tf.inverse())
            right = theta_vertex(g, e.target, AffineMap.translation(_mat_vec(e.plus, beta)))
            results.append({"edge": e.id, "generator": i, "ok": left == right,
                            "left": left, "right": right})
        if e.tree:
            tree_rows.append({"edge": e.id, "ok": tf.is_identity(), "map": tf})
    for v in g.vertices:
        for i in range(n):
            z = tuple(int(k == i) for k in range(n))
            expect = theta_vertex(g, v, AffineMap.translation(z))
            got = theta(g, g.vertex_element(v, z))
            gen_rows.append({"generator": f"{v}:{i}", "ok": got == expect,
                             "left": got, "right": expect})
    for e in g.edges.values():
        if not e.tree:
            got = theta(g, g.stable_letter(e.id))
            expect = theta_edge(g, e.id)
            gen_rows.append({"generator": e.id, "ok": got == expect,
                             "left": got, "right": expect})
    return RelatorReport(results, tree_rows, gen_rows)


# ---------------------------------------------------------------------------
# Bass-Serre tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeVertex:
    rep: NormalForm

    @property
    def type(self):
        return self.rep.end

    def sort_key(self):
        return self.rep.sort_key()

    def __str__(self):
        return f"{self.rep}·G_{self.type}"


@dataclass(frozen=True)
class TreeEdge:
    """Edge between two adjacent vertices, stored in sort order."""

    low: TreeVertex
    high: TreeVertex
    type: str

    @classmethod
    def between(cls, u: TreeVertex, v: TreeVertex, edge_id):
        if v.sort_key() < u.sort_key():
            u, v = v, u
        return cls(u, v, edge_id)


def vertex_of(w: NormalForm) -> TreeVertex:
    return TreeVertex(w.coset_rep())


def base_vertex(g: GraphOfGroups) -> TreeVertex:
    return TreeVertex(g.identity())


def tree_neighbors(g: GraphOfGroups, v: TreeVertex):
    """Adjacent (TreeEdge, TreeVertex) pairs in a fixed order."""
    out = []
    rep = v.rep
    for eid in g.edges:
        for sign in (+1, -1):
            letter = (eid, sign)
            if g.letter_source(letter) != v.type:
                continue
            for r in g.absorb_lattice(letter).residues():
                w = vertex_of(rep.append_vector(r).append_letter(letter))
                out.append((TreeEdge.between(v, w, eid), w))
    return out


def expected_degree(g: GraphOfGroups, vertex_type):
    total = 0
    for e in g.edges.values():
        if e.source == vertex_type:
            total += abs(g.lattices[e.id, "minus"].det)
        if e.target == vertex_type:
            total += abs(g.lattices[e.id, "plus"].det)
    return total


def tree_act(w: NormalForm, v: TreeVertex) -> TreeVertex:
    return vertex_of(w.multiply(v.rep))


def tree_distance(u: TreeVertex, v: TreeVertex) -> int:
    if u.rep.is_identity():
        return v.rep.syllable_length()
    if v.rep.is_identity():
        return u.rep.syllable_length()
    return u.rep.invert().multiply(v.rep).syllable_length()


class BassSerreTree(TreeSpace):
    """The Bass-Serre tree as a lazily expanded metric tree."""

    def __init__(self, g: GraphOfGroups):
        self.graph = g
        self.base = base_vertex(g)
        self._nbrs = {}
        self._dist = {}

    def neighbors(self, v):
        if v not in self._nbrs:
            self._nbrs[v] = [w for _, w in tree_neighbors(self.graph, v)]
        return self._nbrs[v]

    def vertex_distance(self, u, v):
        key = (u, v)
        d = self._dist.get(key)
        if d is None:
            d = self._dist[key] = tree_distance(u, v)
        return d

    def vertex_path(self, u, v):
        w = u.rep.invert().multiply(v.rep)
        out = [u]
        prefix = u.rep
        for z, letter in zip(w.syllables, w.letters):
            prefix = prefix.append_vector(z).append_letter(letter)
            out.append(vertex_of(prefix))
        return out

    def describe(self):
        return {"space": "bass_serre_tree", "graph": self.graph.to_dict()}


def build_ball(g: GraphOfGroups, radius: int, max_vertices: int = 1_000_000):
    """BFS ball of the given radius: (vertices with depth, edges, parent map).

    Raises ResourceGuardError past ``max_vertices``.
    """
    root = base_vertex(g)
    depth = {root: 0}
    parent = {root: None}
    edges = []
    frontier = [root]
    for d in range(1, radius + 1):
        nxt = []
        for v in frontier:
            for edge, w in tree_neighbors(g, v):
                if w == parent[v]:
                    continue
                if w in depth:
                    raise AssertionError(f"cycle through {w}")  # would mean the quotient is wrong
                depth[w] = d
                parent[w] = v
                edges.append(edge)
                nxt.append(w)
                if len(depth) > max_vertices:
                    raise ResourceGuardError(f"tree ball exceeds {max_vertices} vertices",
                                             count=len(depth))
        frontier = nxt
    return depth, edges, parent


def tree_ball_document(g: GraphOfGroups, radius: int, max_vertices: int = 1_000_000):
    depth, edges, _ = build_ball(g, radius, max_vertices)
    order = sorted(depth, key=lambda v: (depth[v], v.sort_key()))
    index = {v: k for k, v in enumerate(order)}
    return {
        "radius": radius,
        "vertices": [{"id": index[v], "rep": v.rep.to_syllables(), "type": v.type,
                      "depth": depth[v]} for v in order],
        "edges": sorted(([index[e.low], index[e.high], e.type] for e in edges)),
        "actions": {name: theta(g, w).to_dict() for name, w in g.generators.items()},
    }


# ---------------------------------------------------------------------------
# product action
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductPoint:
    tree: TreeVertex
    fiber: tuple = field(compare=True)


def product_act(w: NormalForm, p: ProductPoint, compressed=None) -> ProductPoint:
    """Diagonal action; with a CompressionMap the fiber part is conjugated radially."""
    g = w.graph
    tree = tree_act(w, p.tree)
    th = theta(g, w)
    if compressed is None:
        return ProductPoint(tree, th(p.fiber) if _exact(p.fiber) else
                            tuple(th.apply_float(np.asarray(p.fiber, float)).tolist()))
    from .compression import radial_compress
    from .metric_models import EuclideanSpace
    space = EuclideanSpace(g.rank)
    y = radial_compress(compressed, space, np.asarray(p.fiber, float), inverse=True)
    y = th.apply_float(y)
    return ProductPoint(tree, tuple(radial_compress(compressed, space, y).tolist()))


def _exact(v):
    return all(isinstance(x, (int, Fraction)) for x in v)

