"""Finite graphs of free abelian groups and their Britton normal forms.

Every vertex and edge group is Z^n (one common rank n) and the two edge
monomorphisms are given by nonsingular integer matrices ``minus`` (into the
initial vertex i(e)) and ``plus`` (into the terminal vertex t(e)).

Elements are stored as reduced edge paths

    z0 . l1 . z1 . l2 ... lk . zk

where each ``z`` is an integer vector in the vertex group at that point of the
path and each letter ``l = (edge_id, sign)``.  Words are read left to right and
the defining relation is

    t_e . M-(g) . t_e^-1 = M+(g),

so a letter ``(e, +1)`` steps from t(e) to i(e) and ``(e, -1)`` steps from
i(e) to t(e).  Group elements are closed paths at the base vertex; open paths
(base vertex to some other vertex) represent cosets and are used by the
Bass-Serre tree.

A path is in normal form when every syllable except the last is the canonical
residue of its class modulo the image lattice that the following letter
"absorbs", and no pinch ``e^s z e^-s`` with z in that image remains.  Because
the letters are appended one at a time from the right (see
:meth:`NormalForm.append_letter`), normal forms are unique.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

from .errors import InvalidInputError, InvalidMonomorphismError, ResourceGuardError

Vector = tuple  # tuple[int, ...]
Matrix = tuple  # tuple[tuple[int, ...], ...] (row major)


# ---------------------------------------------------------------------------
# integer lattice arithmetic
# ---------------------------------------------------------------------------

def _det(m):
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total = 0
    for j in range(n):
        minor = tuple(tuple(row[k] for k in range(n) if k != j) for row in m[1:])
        total += (-1) ** j * m[0][j] * _det(minor)
    return total


def mat_vec(m, v):
    return tuple(sum(a * b for a, b in zip(row, v)) for row in m)


class Lattice:
    """The sublattice M.Z^n with a lower-triangular column Hermite basis.

    ``H = M U`` with U unimodular, H lower triangular, ``H[i][i] > 0`` and
    ``0 <= H[i][j] < H[i][i]`` for j < i.
    """

    def __init__(self, matrix):
        m = tuple(tuple(int(x) for x in row) for row in matrix)
        n = len(m)
        if n == 0 or any(len(row) != n for row in m):
            raise InvalidInputError(f"matrix must be square and nonempty: {matrix!r}")
        det = _det(m)
        if det == 0:
            raise InvalidMonomorphismError(f"singular edge matrix {m!r}")
        self.matrix = m
        self.n = n
        self.det = abs(det)
        self.hnf, self.unimodular = _column_hnf(m)

    def residue(self, z):
        """Return ``(r, q)`` with ``z = M q + r`` and r canonical for z + M Z^n."""
        h = self.hnf
        n = self.n
        r = list(z)
        qh = [0] * n
        for i in range(n):
            c = r[i] // h[i][i]
            if c:
                qh[i] = c
                for row in range(i, n):
                    r[row] -= c * h[row][i]
        return tuple(r), mat_vec(self.unimodular, qh)

    def contains(self, z):
        r, _ = self.residue(z)
        return not any(r)

    def residues(self):
        """All |det M| canonical residues, in lexicographic order."""
        out = [()]
        for i in range(self.n):
            out = [p + (k,) for p in out for k in range(self.hnf[i][i])]
        # the box prod [0, h_ii) is exactly the set of canonical residues
        return out

    def image(self, q):
        return mat_vec(self.matrix, q)


def _column_hnf(m):
    n = len(m)
    # work on columns; cols[j] is column j of H, ucols[j] column j of U
    cols = [[m[i][j] for i in range(n)] for j in range(n)]
    ucols = [[1 if i == j else 0 for i in range(n)] for j in range(n)]

    def sub(j, k, c):  # column j -= c * column k
        if c:
            cols[j] = [a - c * b for a, b in zip(cols[j], cols[k])]
            ucols[j] = [a - c * b for a, b in zip(ucols[j], ucols[k])]

    for i in range(n):
        while True:
            nz = [j for j in range(i, n) if cols[j][i] != 0]
            pivot = min(nz, key=lambda j: abs(cols[j][i]))
            if pivot != i:
                cols[i], cols[pivot] = cols[pivot], cols[i]
                ucols[i], ucols[pivot] = ucols[pivot], ucols[i]
            done = True
            for j in range(i + 1, n):
                if cols[j][i]:
                    sub(j, i, cols[j][i] // cols[i][i])
                    if cols[j][i]:
                        done = False
            if done:
                break
        if cols[i][i] < 0:
            cols[i] = [-a for a in cols[i]]
            ucols[i] = [-a for a in ucols[i]]
        for j in range(i):
            sub(j, i, cols[j][i] // cols[i][i])
    h = tuple(tuple(cols[j][i] for j in range(n)) for i in range(n))
    u = tuple(tuple(ucols[j][i] for j in range(n)) for i in range(n))
    return h, u


def residue(z, matrix):
    """Canonical residue of ``z`` modulo ``matrix . Z^n`` and the quotient."""
    return Lattice(matrix).residue(tuple(z))


# ---------------------------------------------------------------------------
# graphs of groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Edge:
    id: str
    source: str  # i(e)
    target: str  # t(e)
    minus: Matrix
    plus: Matrix
    tree: bool = False


class GraphOfGroups:
    """A connected finite graph of Z^n groups with finite-index edge maps."""

    def __init__(self, vertices, edges: Sequence[Edge], base: str):
        self.vertices = dict(vertices)  # id -> rank
        ranks = set(self.vertices.values())
        if len(ranks) != 1:
            raise InvalidInputError("all vertex groups must have the same rank")
        self.rank = ranks.pop()
        if base not in self.vertices:
            raise InvalidInputError(f"base vertex {base!r} not in graph")
        self.base = base
        self.edges = {}
        for e in edges:
            if e.id in self.edges:
                raise InvalidInputError(f"duplicate edge id {e.id!r}")
            if e.source not in self.vertices or e.target not in self.vertices:
                raise InvalidInputError(f"edge {e.id!r} has an unknown endpoint")
            self.edges[e.id] = e
        self.edge_order = {eid: k for k, eid in enumerate(self.edges)}
        self.lattices = {}
        for e in self.edges.values():
            for side, mat in (("minus", e.minus), ("plus", e.plus)):
                lat = Lattice(mat)
                if lat.n != self.rank:
                    raise InvalidInputError(f"edge {e.id!r} matrix has wrong size")
                self.lattices[e.id, side] = lat
        self._check_tree()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def baumslag_solitar(cls, m: int, n: int):
        """BS(m, n) = <a, t | t a^m t^-1 = a^n>."""
        return cls({"v": 1}, [Edge("t", "v", "v", ((m,),), ((n,),))], "v")

    @classmethod
    def from_dict(cls, data):
        try:
            vertices = {v["id"]: int(v["rank"]) for v in data["vertices"]}
            edges = [
                Edge(
                    str(e["id"]), str(e["from"]), str(e["to"]),
                    tuple(tuple(int(x) for x in row) for row in e["minus"]),
                    tuple(tuple(int(x) for x in row) for row in e["plus"]),
                    bool(e.get("tree", False)),
                )
                for e in data.get("edges", [])
            ]
            base = data["base"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed graph-of-groups document: {exc}") from exc
        return cls(vertices, edges, base)

    @classmethod
    def from_json(cls, text: str):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(
                f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return {
            "vertices": [{"id": v, "rank": r} for v, r in self.vertices.items()],
            "edges": [
                {"id": e.id, "from": e.source, "to": e.target,
                 "minus": [list(r) for r in e.minus], "plus": [list(r) for r in e.plus],
                 "tree": e.tree}
                for e in self.edges.values()
            ],
            "base": self.base,
        }

    def _check_tree(self):
        # the flagged edges must form a spanning tree; records the tree path
        # from the base vertex to each vertex as a tuple of letters
        tree_edges = [e for e in self.edges.values() if e.tree]
        if len(tree_edges) != len(self.vertices) - 1:
            raise InvalidInputError("tree-flagged edges do not form a spanning tree")
        paths = {self.base: ()}
        frontier = [self.base]
        while frontier:
            v = frontier.pop()
            for e in tree_edges:
                if e.source == v and e.target not in paths:
                    paths[e.target] = paths[v] + ((e.id, -1),)
                    frontier.append(e.target)
                elif e.target == v and e.source not in paths:
                    paths[e.source] = paths[v] + ((e.id, +1),)
                    frontier.append(e.source)
        if len(paths) != len(self.vertices):
            raise InvalidInputError("graph is not connected through its spanning tree")
        self.tree_paths = paths

    # -- letters -------------------------------------------------------------

    def letter_source(self, letter):
        e = self.edges[letter[0]]
        return e.target if letter[1] > 0 else e.source

    def letter_end(self, letter):
        e = self.edges[letter[0]]
        return e.source if letter[1] > 0 else e.target

    def absorb_lattice(self, letter):
        """Lattice a syllable is reduced modulo when followed by ``letter``."""
        return self.lattices[letter[0], "plus" if letter[1] > 0 else "minus"]

    def emit_lattice(self, letter):
        """Lattice the quotient re-enters on the far side of ``letter``."""
        return self.lattices[letter[0], "minus" if letter[1] > 0 else "plus"]

    def letter_key(self, letter):
        return (self.edge_order[letter[0]], -letter[1])

    # -- elements ------------------------------------------------------------

    def zero(self):
        return (0,) * self.rank

    def identity(self, vertex=None):
        return NormalForm(self, vertex or self.base, (self.zero(),), ())

    def vertex_element(self, vertex, z):
        """The path p_v . z . p_v^-1 (z in G_v transported to the base)."""
        p = self.tree_paths[vertex]
        word = path_word(self, self.base, p) if p else self.identity()
        word = word.append_vector(tuple(z))
        return word.multiply(word_from_letters(self, vertex, invert_letters(p)))

    def stable_letter(self, edge_id):
        """t_e = p_t(e) . e . p_i(e)^-1 as a closed path at the base."""
        e = self.edges[edge_id]
        pt = self.tree_paths[e.target]
        pi = self.tree_paths[e.source]
        letters = pt + ((edge_id, +1),) + invert_letters(pi)
        return word_from_letters(self, self.base, letters)

    @cached_property
    def generators(self):
        """Weighted-1 generating set: vertex basis vectors and non-tree t_e.

        Returned as ``{name: NormalForm}`` including inverses, in a fixed order.
        """
        gens = {}
        many = len(self.vertices) > 1
        for v in self.vertices:
            for i in range(self.rank):
                z = tuple(1 if k == i else 0 for k in range(self.rank))
                name = "a" if not many and self.rank == 1 else (
                    f"a{i}" if not many else f"a[{v}]{i}")
                g = self.vertex_element(v, z)
                gens[name] = g
                gens[name + "^-1"] = g.invert()
        for e in self.edges.values():
            if e.tree:
                continue
            g = self.stable_letter(e.id)
            gens[e.id] = g
            gens[e.id + "^-1"] = g.invert()
        return gens


def invert_letters(letters):
    return tuple((e, -s) for e, s in reversed(letters))


def word_from_letters(g: GraphOfGroups, start, letters):
    w = g.identity(start)
    for letter in letters:
        w = w.append_letter(letter)
    return w


def path_word(g, start, letters):
    return word_from_letters(g, start, letters)


@dataclass(frozen=True)
class NormalForm:
    """Britton-reduced path; see the module docstring for conventions."""

    graph: GraphOfGroups = field(compare=False, hash=False, repr=False)
    start: str
    syllables: tuple  # k+1 integer vectors
    letters: tuple  # k letters (edge_id, +-1)

    @property
    def end(self):
        if not self.letters:
            return self.start
        return self.graph.letter_end(self.letters[-1])

    def syllable_length(self):
        return len(self.letters)

    def is_identity(self):
        return not self.letters and not any(self.syllables[0])

    def is_closed(self):
        return self.end == self.start

    # -- right multiplication by generators -----------------------------------

    def append_vector(self, z):
        if not any(z):
            return self
        last = tuple(a + b for a, b in zip(self.syllables[-1], z))
        return NormalForm(self.graph, self.start, self.syllables[:-1] + (last,), self.letters)

    def append_letter(self, letter):
        g = self.graph
        if g.letter_source(letter) != self.end:
            raise InvalidInputError(f"letter {letter} does not start at vertex {self.end!r}")
        z = self.syllables[-1]
        absorb = g.absorb_lattice(letter)
        r, q = absorb.residue(z)
        if self.letters and self.letters[-1] == (letter[0], -letter[1]) and not any(r):
            # pinch: previous letter, z, this letter collapse to one vertex element
            pushed = g.emit_lattice(letter).image(q)
            prev = tuple(a + b for a, b in zip(self.syllables[-2], pushed))
            return NormalForm(g, self.start, self.syllables[:-2] + (prev,), self.letters[:-1])
        pushed = g.emit_lattice(letter).image(q)
        return NormalForm(g, self.start, self.syllables[:-1] + (r, pushed),
                          self.letters + (letter,))

    # -- group operations -----------------------------------------------------

    def multiply(self, other: "NormalForm"):
        if self.end != other.start:
            raise InvalidInputError(
                f"cannot compose path ending at {self.end!r} with one starting at {other.start!r}")
        w = self
        for z, letter in zip(other.syllables, other.letters):
            w = w.append_vector(z).append_letter(letter)
        return w.append_vector(other.syllables[-1])

    __mul__ = multiply

    def invert(self):
        g = self.graph
        w = g.identity(self.end)
        syl = self.syllables
        for k in range(len(self.letters) - 1, -1, -1):
            w = w.append_vector(tuple(-a for a in syl[k + 1]))
            e, s = self.letters[k]
            w = w.append_letter((e, -s))
        return w.append_vector(tuple(-a for a in syl[0]))

    def coset_rep(self):
        """Representative of the left coset w.G_end (trailing syllable cleared)."""
        if not any(self.syllables[-1]):
            return self
        return NormalForm(self.graph, self.start, self.syllables[:-1] + (self.graph.zero(),),
                          self.letters)

    def sort_key(self):
        g = self.graph
        return (len(self.letters), tuple(g.letter_key(x) for x in self.letters),
                tuple(self.syllables))

    def to_syllables(self):
        """Serialisable form: [z0, [edge, sign], z1, ...]."""
        out = [list(self.syllables[0])]
        for z, (e, s) in zip(self.syllables[1:], self.letters):
            out.append([e, s])
            out.append(list(z))
        return out

    def __str__(self):
        parts = []
        for k, z in enumerate(self.syllables):
            if any(z):
                parts.append("a" + ("" if len(z) > 1 else "^") + (
                    str(z[0]) if len(z) == 1 else str(list(z))))
            if k < len(self.letters):
                e, s = self.letters[k]
                parts.append(e if s > 0 else e + "^-1")
        return "*".join(parts) or "1"


def from_syllables(graph, data, start=None):
    w = graph.identity(start or graph.base)
    w = w.append_vector(tuple(data[0]))
    for k in range(1, len(data), 2):
        e, s = data[k]
        w = w.append_letter((e, int(s))).append_vector(tuple(data[k + 1]))
    return w


def multiply(u, w):
    return u.multiply(w)


def invert(u):
    return u.invert()


def syllable_length(u):
    return u.syllable_length()


def is_identity(u):
    return u.is_identity()


def enumerate_ball(graph: GraphOfGroups, L: int, max_elements: int = 2_000_000,
                   generators=None) -> Iterator[tuple[int, NormalForm]]:
    """Yield ``(word_length, element)`` for every element of length <= L.

    Graded order, and lexicographic on canonical forms inside each sphere.
    """
    if L < 0:
        raise InvalidInputError("word length bound must be nonnegative")
    gens = list((generators or graph.generators).values())
    one = graph.identity()
    seen = {one}
    sphere = [one]
    yield 0, one
    count = 1
    for length in range(1, L + 1):
        new = set()
        for w in sphere:
            for s in gens:
                x = w.multiply(s)
                if x not in seen:
                    seen.add(x)
                    new.add(x)
        count += len(new)
        if count > max_elements:
            raise ResourceGuardError(
                f"ball of radius {length} exceeds {max_elements} elements", count=count)
        sphere = sorted(new, key=NormalForm.sort_key)
        for x in sphere:
            yield length, x
