"""Finite witnesses behind noncompressibility.

* component counts outside balls in the 4-valent tree, and the index past which
  a sublinear bound can no longer match them;
* growth functions of right-angled Coxeter groups (RACGs);
* the index from the Davis-manifold argument at which the ball sandwich and a
  sublinear diameter bound contradict each other.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .compression import certify_sublinear
from .errors import CertificationError, InvalidInputError, ResourceGuardError
from .metric_models import RegularTree


def _require_sublinear(phi, horizon=1e6):
    cert = certify_sublinear(phi, horizon)
    if not cert.certified:
        raise CertificationError(
            f"function is not certified sublinear (phi(x)/x = {cert.ratio_at_horizon:.3g} "
            f"at {horizon:g})")
    return cert


# ---------------------------------------------------------------------------
# T4
# ---------------------------------------------------------------------------

def t4_components(r: int) -> int:
    """Unbounded components of T4 minus the open r-ball around the base vertex.

    Counted by building the tree to depth r + 2, deleting the open ball and
    labelling components of what is left; a component is unbounded when it
    reaches the last layer.
    """
    if r < 1:
        raise InvalidInputError("radius must be at least 1")
    tree = RegularTree(4)
    verts = [v for v in tree.ball_vertices(r + 2) if len(v) >= r]
    keep = set(verts)
    label = {}
    count = 0
    for v in verts:
        if v in label:
            continue
        stack = [v]
        label[v] = count
        deep = False
        while stack:
            u = stack.pop()
            deep = deep or len(u) == r + 2
            for w in tree.neighbors(u):
                if w in keep and w not in label:
                    label[w] = count
                    stack.append(w)
        count += 1 if deep else 0
    return count


def t4_formula(r: int) -> int:
    return 4 * 3 ** (r - 1)


@dataclass(frozen=True)
class ContradictionIndex:
    n: int
    left: int       # components outside the n-ball
    right: int      # components outside the ball of radius max(1, ceil(phi(2n) + C))
    radius: int


def t4_contradiction_index(phi, C: float, max_n: int = 10**6) -> ContradictionIndex:
    """Least n whose component count beats the one at radius ceil(phi(2n) + C)."""
    _require_sublinear(phi)
    for n in range(1, max_n + 1):
        rad = max(1, math.ceil(float(phi(2 * n)) + C))
        if n > rad:
            return ContradictionIndex(n, t4_formula(n), t4_formula(rad), rad)
    raise CertificationError(f"no index found below {max_n}")


# ---------------------------------------------------------------------------
# right-angled Coxeter groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RACG:
    generators: tuple
    commuting: frozenset = field(default_factory=frozenset)  # pairs (i, j), i < j

    def __post_init__(self):
        k = len(self.generators)
        if len(set(self.generators)) != k:
            raise InvalidInputError("generator names must be distinct")
        clean = set()
        for pair in self.commuting:
            i, j = pair
            if i == j or not (0 <= i < k and 0 <= j < k):
                raise InvalidInputError(f"bad commuting pair {pair}")
            clean.add((min(i, j), max(i, j)))
        object.__setattr__(self, "commuting", frozenset(clean))

    @property
    def rank(self):
        return len(self.generators)

    def commute(self, i, j):
        return i != j and (min(i, j), max(i, j)) in self.commuting

    @classmethod
    def from_dict(cls, data):
        try:
            gens = tuple(str(x) for x in data["generators"])
            pairs = frozenset(tuple(int(x) for x in p) for p in data.get("commuting", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed RACG document: {exc}") from exc
        return cls(gens, pairs)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InvalidInputError(
                f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc

    @classmethod
    def cycle(cls, k):
        """Flag graph a k-cycle (k = 5 is the pentagon)."""
        return cls(tuple(f"s{i}" for i in range(k)),
                   frozenset((i, (i + 1) % k) for i in range(k)))

    @classmethod
    def free(cls, k):
        return cls(tuple(f"s{i}" for i in range(k)))


def racg_multiply(g: RACG, word: tuple, s: int) -> tuple:
    """Right-multiply a ShortLex normal form by a generator."""
    for i in range(len(word) - 1, -1, -1):
        if word[i] == s:
            return word[:i] + word[i + 1:]
        if not g.commute(word[i], s):
            break
    return _shortlex(g, word + (s,))


def _shortlex(g: RACG, word):
    """Lexicographically least word in the commutation class (greedy heap extension)."""
    rest = list(word)
    out = []
    while rest:
        best = None
        for j, x in enumerate(rest):
            if all(g.commute(x, y) for y in rest[:j]) and (best is None or x < rest[best]):
                best = j
        out.append(rest.pop(best))
    return tuple(out)


@dataclass
class GrowthTable:
    beta: list
    complete: bool = True

    def spheres(self):
        return [self.beta[0]] + [b - a for a, b in zip(self.beta, self.beta[1:])]


def racg_growth(g: RACG, N: int, max_states: int = 5_000_000) -> GrowthTable:
    """Cumulative ball sizes beta(0..N) by BFS on normal forms."""
    if N < 0:
        raise InvalidInputError("N must be nonnegative")
    seen = {()}
    sphere = [()]
    beta = [1]
    for _ in range(N):
        new = []
        for w in sphere:
            for s in range(g.rank):
                x = racg_multiply(g, w, s)
                if x not in seen:
                    seen.add(x)
                    new.append(x)
        if len(seen) > max_states:
            raise ResourceGuardError(f"RACG ball exceeds {max_states} elements",
                                     count=len(seen), partial=GrowthTable(beta, False))
        sphere = new
        beta.append(len(seen))
    return GrowthTable(beta)


# ---------------------------------------------------------------------------
# Davis-manifold index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DavisIndex:
    n: int
    phi_value: float        # phi(2 (K (n + S + 1) + eps + R))
    half_inner_radius: float  # (n / K - eps - R) / 2


def davis_index(K: float, eps: float, R: float, S: int, phi, max_n: int = 10**7,
                chunk: int = 65536) -> DavisIndex:
    if K < 1 or eps < 0 or R <= 0 or S < 0:
        raise InvalidInputError("need K >= 1, eps >= 0, R > 0, S >= 0")
    _require_sublinear(phi)
    start = 1
    while start <= max_n:
        n = np.arange(start, min(start + chunk, max_n + 1), dtype=float)
        lhs = np.asarray(phi(2 * (K * (n + S + 1) + eps + R)), float) * np.ones_like(n)
        half = 0.5 * (n / K - eps - R)
        ok = np.nonzero((lhs < half) & (R < half))[0]
        if len(ok):
            k = ok[0]
            return DavisIndex(int(n[k]), float(lhs[k]), float(half[k]))
        start += chunk
    raise CertificationError(f"no index found below {max_n}")


# ---------------------------------------------------------------------------
# ball sandwich on T4
# ---------------------------------------------------------------------------

def growth_sandwich_check(n_max: int = 6, offsets=(0.0, 0.25, 0.5, 0.75)):
    """Check the three ball containments on T4 = Cayley graph of the free RACG on 4 generators.

    Setup: x0 the base vertex, chamber Q the closed 1/2-ball at x0 (so R = 1/2,
    S = 0), f(g) = g x0, K = 1, eps = 0; T_beta(m) is the union of the chambers
    at word length <= m.  Sample points sit at the given offsets along every
    edge out to depth n + 1.  Returns a list of failures (empty on success).
    """
    K, eps, R, S = 1, 0.0, 0.5, 0
    growth = racg_growth(RACG.free(4), n_max + 1).beta
    tree = RegularTree(4)
    failures = []
    for n in range(n_max + 1):
        verts = tree.ball_vertices(n + 1)
        if len(tree.ball_vertices(n)) != growth[n]:
            failures.append(("beta", n))
        for v in verts:
            for w in tree.neighbors(v):
                if len(w) <= len(v):
                    continue
                for off in offsets:
                    depth = len(v) + off
                    # distance to the vertex set of word length <= m
                    def dist_to(m):
                        if len(w) <= m:
                            return min(off, 1 - off)
                        if len(v) <= m:
                            return off
                        return off + len(v) - m
                    in_nbhd = dist_to(n) <= R          # N_d[f(B(e, n)), R]
                    if depth <= n / K - eps - R and not in_nbhd:
                        failures.append(("item1", n, v, off))
                    if in_nbhd and not dist_to(n + S) <= 0.5:
                        failures.append(("item2", n, v, off))
                    if dist_to(n) <= 0.5 and depth > K * n + eps + R:
                        failures.append(("item3", n, v, off))
    return failures
