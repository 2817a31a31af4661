"""Proper bounds, sublinear moduli and radial compressing homeomorphisms.

A proper bound is stored as ``psi(R) = psi0 + f(R)`` with

    f(x) = a * (C**x - 1) + b * x,   a, b >= 0,  C > 1,  a*ln(C) + b >= 1,

so f is convex, f(0) = 0 and f'(0) >= 1.  The one-dimensional compression is

    hhat(x) = x                              for x <= psi0
    hhat(x) = phi(f^-1(x - psi0)) + psi0     for x >= psi0

and, when ``log_precomposed`` is set, ``x -> hhat(log(1 + x))``.  For any pair
with |a - b| <= psi(R),

    |hhat(a) - hhat(b)| <= phi_bar(R + kappa) + psi0,   kappa = f^-1(psi0),

which is the modulus ``phi_star`` carried by every :class:`CompressionMap`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import mpmath as mp
import numpy as np

from .errors import CertificationError, InvalidInputError, NotCertifiedError
from .metric_models import EuclideanSpace, HyperbolicPlane

# beyond this log-size, quantities are handled in the log domain only
_LOG_LIMIT = 10_000


# ---------------------------------------------------------------------------
# sublinear functions
# ---------------------------------------------------------------------------

class SublinearFn:
    """Concave increasing homeomorphism of [0, inf) with phi(0) = 0.

    Kinds: ``log`` (log(1+x)), ``pow`` (c * x**p, 0 < p < 1) and compositions.
    Besides float/array evaluation it supports the log-domain queries the
    linear-control computation needs when arguments exceed float range.
    """

    def __init__(self, kind, p=None, c=1.0, outer=None, inner=None, name=None):
        self.kind = kind
        self.p = p
        self.c = c
        self.outer = outer
        self.inner = inner
        if kind == "pow" and not (0 < p < 1 and c > 0):
            raise InvalidInputError("pow requires 0 < p < 1 and c > 0")
        self.name = name or {"log": "log", "pow": f"pow:{p}" + ("" if c == 1 else f":{c}"),
                             "compose": f"{outer.name}∘{inner.name}" if outer else ""}[kind]

    # float / numpy
    def __call__(self, x):
        x = np.asarray(x, dtype=float) if not np.isscalar(x) else x
        if self.kind == "log":
            return np.log1p(x)
        if self.kind == "pow":
            return self.c * np.power(x, self.p)
        return self.outer(self.inner(x))

    def inverse(self, y):
        if self.kind == "log":
            return np.expm1(y)
        if self.kind == "pow":
            return np.power(np.asarray(y, float) / self.c, 1.0 / self.p)
        return self.inner.inverse(self.outer.inverse(y))

    def derivative(self, x):
        if self.kind == "log":
            return 1.0 / (1.0 + np.asarray(x, float))
        if self.kind == "pow":
            return self.c * self.p * np.power(x, self.p - 1.0)
        return self.outer.derivative(self.inner(x)) * self.inner.derivative(x)

    def modulus(self, t):
        """phi_bar(t) = max_{|x-y|=t} |phi(x) - phi(y)|; equals phi(t) for concave phi, phi(0)=0."""
        return self(t)

    # mpmath, log domain
    def mp_value(self, s):
        if self.kind == "log":
            return mp.log1p(s)
        if self.kind == "pow":
            return self.c * mp.power(s, self.p)
        return self.outer.mp_value(self.inner.mp_value(s))

    def mp_diff(self, s, sigma):
        """phi(s + sigma) - phi(s) without cancellation."""
        if sigma == 0:
            return mp.mpf(0)
        if self.kind == "log":
            return mp.log1p(sigma / (1 + s))
        if self.kind == "pow":
            return self.c * mp.power(s, self.p) * mp.expm1(self.p * mp.log1p(sigma / s))
        inner_s = self.inner.mp_value(s)
        return self.outer.mp_diff(inner_s, self.inner.mp_diff(s, sigma))

    def mp_log_inverse(self, y):
        """log(phi^-1(y)) for y > 0, finite even when phi^-1(y) overflows."""
        y = mp.mpf(y)
        if self.kind == "log":
            return y + mp.log(-mp.expm1(-y))
        if self.kind == "pow":
            return mp.log(y / self.c) / self.p
        mid = self.outer.mp_log_inverse(y)
        if mid > _LOG_LIMIT * 1000:
            raise NotCertifiedError(f"{self.name}: inverse beyond evaluable range")
        return self.inner.mp_log_inverse(mp.exp(mid))

    def mp_value_from_log(self, ls):
        """phi(exp(ls))."""
        if self.kind == "log":
            return ls + mp.log1p(mp.exp(-ls))
        if self.kind == "pow":
            return self.c * mp.exp(self.p * ls)
        return self.outer.mp_value(self.inner.mp_value_from_log(ls))

    def mp_log_derivative(self, ls):
        """log(phi'(exp(ls)))."""
        if self.kind == "log":
            return -(ls + mp.log1p(mp.exp(-ls))) if ls > 0 else -mp.log1p(mp.exp(ls))
        if self.kind == "pow":
            return mp.log(self.c * self.p) + (self.p - 1) * ls
        inner_val = self.inner.mp_value_from_log(ls)
        return self.outer.mp_log_derivative(mp.log(inner_val)) + self.inner.mp_log_derivative(ls)

    def __repr__(self):
        return f"SublinearFn({self.name})"


def compose(outer: SublinearFn, inner: SublinearFn) -> SublinearFn:
    return SublinearFn("compose", outer=outer, inner=inner)


def parse_phi(name: str) -> SublinearFn:
    """``log``, ``loglog``, ``pow:p`` or ``pow:p:c``."""
    if name == "log":
        return SublinearFn("log")
    if name == "loglog":
        return compose(SublinearFn("log"), SublinearFn("log"))
    if name.startswith("pow:"):
        parts = name.split(":")
        try:
            p = float(parts[1])
            c = float(parts[2]) if len(parts) > 2 else 1.0
        except (IndexError, ValueError) as exc:
            raise InvalidInputError(f"bad pow specification {name!r}") from exc
        return SublinearFn("pow", p=p, c=c)
    raise InvalidInputError(f"unknown sublinear function {name!r}")


@dataclass(frozen=True)
class SublinearCertificate:
    certified: bool
    ratio_at_horizon: float
    decreasing_tail: bool
    horizon: float
    threshold: float
    label: str = "heuristic (sampled on a geometric grid)"


def certify_sublinear(phi_like: Callable, horizon: float = 1e6,
                      threshold: float = 1e-2) -> SublinearCertificate:
    """phi(x)/x below ``threshold`` at the horizon and nonincreasing over its last decade."""
    grid = np.geomspace(horizon / 10.0, horizon, 41)
    vals = np.asarray([float(phi_like(float(x))) for x in grid])
    ratios = vals / grid
    decreasing = bool(np.all(np.diff(ratios) <= 1e-15 * np.abs(ratios[:-1]) + 1e-300))
    ok = bool(abs(ratios[-1]) < threshold and decreasing and np.all(np.isfinite(vals)))
    return SublinearCertificate(ok, float(ratios[-1]), decreasing, horizon, threshold)


# ---------------------------------------------------------------------------
# proper bounds
# ---------------------------------------------------------------------------

def _frac(x):
    return x if isinstance(x, Fraction) else Fraction(str(x)) if isinstance(x, str) else Fraction(x)


@dataclass(frozen=True)
class ProperFunctionPair:
    """psi(R) = psi0 + a*(C**R - 1) + b*R."""

    psi0: Fraction
    a: Fraction
    C: Fraction
    b: Fraction

    def __post_init__(self):
        for name in ("psi0", "a", "C", "b"):
            object.__setattr__(self, name, _frac(getattr(self, name)))
        if self.psi0 < 0 or self.a < 0 or self.b < 0:
            raise InvalidInputError("psi0, a and b must be nonnegative")
        if self.a > 0 and self.C <= 1:
            raise InvalidInputError("exponential base C must exceed 1")
        if self.derivative_at_zero() < 1 - 1e-12:
            raise InvalidInputError("f'(0) = a ln C + b must be at least 1")

    def derivative_at_zero(self):
        slope = float(self.b)
        if self.a > 0:
            slope += float(self.a) * math.log(float(self.C))
        return slope

    @property
    def lnC(self):
        return math.log(float(self.C))

    def f(self, x):
        x = np.asarray(x, float) if not np.isscalar(x) else float(x)
        out = float(self.b) * x
        if self.a > 0:
            out = out + float(self.a) * np.expm1(x * self.lnC)
        return out

    def f_prime(self, x):
        out = float(self.b)
        if self.a > 0:
            out = out + float(self.a) * self.lnC * np.exp(np.asarray(x, float) * self.lnC)
        return out

    def psi(self, R):
        return float(self.psi0) + self.f(R)

    def f_inv(self, y):
        """Inverse of f: closed form for pure members, Newton to 1e-12 otherwise."""
        if np.isscalar(y):
            return self._f_inv_scalar(float(y))
        y = np.asarray(y, dtype=float)
        if self.a == 0:
            return y / float(self.b)
        if self.b == 0:
            return np.log1p(y / float(self.a)) / self.lnC
        # Newton from an upper bound; f is convex, so iterates decrease to the root
        a, b, lnc = float(self.a), float(self.b), self.lnC
        x = np.minimum(y / b, np.log1p(y / a) / lnc)
        for _ in range(100):
            step = (a * np.expm1(x * lnc) + b * x - y) / (a * lnc * np.exp(x * lnc) + b)
            x = np.maximum(x - step, 0.0)
            if np.all(np.abs(step) <= 1e-13 * np.maximum(1.0, x)):
                break
        return x

    def _f_inv_scalar(self, y):
        if self.a == 0:
            return y / float(self.b)
        if self.b == 0:
            return math.log1p(y / float(self.a)) / self.lnC
        a, b, lnc = float(self.a), float(self.b), self.lnC
        if not math.isfinite(y):
            return y
        x = min(y / b, math.log1p(y / a) / lnc)
        for _ in range(100):
            step = (a * math.expm1(x * lnc) + b * x - y) / (a * lnc * math.exp(x * lnc) + b)
            x = max(x - step, 0.0)
            if abs(step) <= 1e-13 * max(1.0, x):
                break
        return x

    def kappa(self):
        return _kappa(self)

    def to_dict(self):
        return {k: f"{v.numerator}/{v.denominator}" for k, v in
                (("psi0", self.psi0), ("a", self.a), ("C", self.C), ("b", self.b))}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(*(Fraction(str(data[k])) for k in ("psi0", "a", "C", "b")))
        except (KeyError, ValueError, ZeroDivisionError) as exc:
            raise InvalidInputError(f"malformed proper-function document: {exc}") from exc


@functools.lru_cache(maxsize=256)
def _kappa(pair):
    return pair.f_inv(float(pair.psi0))


def envelope(raw_samples, growth_hint=None) -> ProperFunctionPair:
    """Majorise ``(R, bound)`` samples by a member of the family.

    With ``growth_hint=(D, C)``: psi0 = D and f = D*(C**R - 1) + R, so
    psi(R) >= D*C**R for all R >= 0.  Without a hint: psi0 = max bound, f(R) = R.
    """
    from .errors import FitError

    samples = [(float(r), float(v)) for r, v in raw_samples]
    for r, v in samples:
        if not (math.isfinite(r) and math.isfinite(v)) or v < 0 or r < 0:
            raise FitError(f"sample {(r, v)} is not a finite nonnegative bound")
    if growth_hint is None:
        top = max((v for _, v in samples), default=0.0)
        return ProperFunctionPair(Fraction(top).limit_denominator(10**6) + (
            0 if Fraction(top).limit_denominator(10**6) >= Fraction(top) else Fraction(1, 10**6)),
            0, 2, 1)
    D, C = (_frac(x) for x in growth_hint)
    if C <= 1 or D < 0:
        raise InvalidInputError("growth hint needs D >= 0 and C > 1")
    pair = ProperFunctionPair(D, D, C, 1)
    bad = [(r, v) for r, v in samples if v > pair.psi(r) * (1 + 1e-12)]
    if bad:
        raise FitError(f"samples not majorised by the hinted envelope: {bad[:5]}")
    return pair


# ---------------------------------------------------------------------------
# compressing homeomorphisms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompressionMap:
    pair: ProperFunctionPair
    phi: SublinearFn = field(compare=False)
    log_precomposed: bool = False
    space_tag: str = "ray"

    @property
    def psi0(self):
        return float(self.pair.psi0)

    @property
    def kappa(self):
        return self.pair.kappa()

    def phi_star(self, R):
        """Shifted modulus phi_bar(R + kappa) + psi0 (the certified contract)."""
        return self.phi.modulus(np.asarray(R, float) + self.kappa) + self.psi0

    def phi_star_unshifted(self, R):
        return self.phi.modulus(R) + self.psi0

    def base(self, x):
        psi0 = self.psi0
        if np.isscalar(x):
            x = float(x)
            return x if x <= psi0 else float(self.phi(self.pair.f_inv(x - psi0))) + psi0
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            curved = self.phi(self.pair.f_inv(np.maximum(np.asarray(x) - psi0, 0.0))) + psi0
        out = np.where(np.asarray(x) <= psi0, x, curved)
        return float(out) if np.ndim(out) == 0 else out

    def base_inv(self, y):
        psi0 = self.psi0
        y_arr = np.asarray(y, float)
        with np.errstate(over="ignore", invalid="ignore"):
            curved = self.pair.f(self.phi.inverse(np.maximum(y_arr - psi0, 0.0))) + psi0
        out = np.where(y_arr <= psi0, y_arr, curved)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, x):
        if self.log_precomposed:
            x = np.log1p(x)
        return self.base(x)

    def inverse(self, y):
        x = self.base_inv(y)
        if self.log_precomposed:
            with np.errstate(over="ignore"):
                x = np.expm1(x)
        return float(x) if np.ndim(x) == 0 else x


def hhat(pair: ProperFunctionPair, phi: SublinearFn, log_precomposed=False,
         space_tag="ray") -> CompressionMap:
    if not isinstance(phi, SublinearFn):
        raise InvalidInputError("phi must be a SublinearFn")
    return CompressionMap(pair, phi, log_precomposed, space_tag)


def radial_compress(cmap: CompressionMap, space, p, inverse=False):
    """Move ``p`` along the geodesic ray from the basepoint to radius hhat(|p|)."""
    prof = cmap.inverse if inverse else cmap
    if isinstance(space, EuclideanSpace):
        v = np.asarray(p, float) - space.basepoint
        r = float(np.linalg.norm(v))
        if r == 0:
            return space.basepoint.copy()
        return space.basepoint + v * (prof(r) / r)
    if isinstance(space, HyperbolicPlane):
        r, u = space.log_map(p)
        if u is None:
            return space.basepoint.copy()
        return space.ray_point(u, prof(r))
    raise InvalidInputError("radial compression needs Euclidean space or the hyperbolic plane")


@dataclass
class ContractReport:
    n_pairs: int
    max_ratio: float
    violations: list
    bound_factor: float = 4.0

    @property
    def passed(self):
        return not self.violations


def compression_contract_check(cmap: CompressionMap, space, pairs, R_of_pair,
                               tol=1e-9, factor=4.0) -> ContractReport:
    """Check d(hx, hy) <= factor * phi_star(R) for pairs with d(x, y) <= psi(R)."""
    worst = 0.0
    bad = []
    for (x, y), R in zip(pairs, R_of_pair):
        d = space.distance(x, y)
        if d > cmap.pair.psi(R) * (1 + 1e-12):
            raise InvalidInputError(f"pair at distance {d} exceeds psi({R})")
        bound = factor * float(cmap.phi_star(R))
        dh = space.distance(radial_compress(cmap, space, x), radial_compress(cmap, space, y))
        worst = max(worst, dh / bound)
        if dh > bound + tol:
            bad.append({"x": np.asarray(x).tolist(), "y": np.asarray(y).tolist(),
                        "R": R, "image_distance": dh, "bound": bound})
    return ContractReport(len(pairs), worst, bad, factor)


def minimal_R(pair: ProperFunctionPair, d):
    """Smallest R with psi(R) >= d."""
    return max(0.0, pair.f_inv(max(d - float(pair.psi0), 0.0)))


# ---------------------------------------------------------------------------
# linear control
# ---------------------------------------------------------------------------

def _conjugate_delta(cmap: CompressionMap, lam, t):
    """Return (delta, log|delta|) for delta = hhat(lam * hhat^-1(t)) - t.

    Only for log-precomposed maps, where log(1 + lam*X) - log(1 + X) is an
    explicit quantity and everything else is a difference of phi values.
    ``delta`` is None when it underflows mp range (the log is still exact to
    leading order).
    """
    if not cmap.log_precomposed:
        raise NotCertifiedError("linear control is only certified for log-precomposed maps")
    if t <= 0 or lam <= 0:
        raise InvalidInputError("t and the slope must be positive")
    if lam == 1:
        return mp.mpf(0), mp.ninf
    pair, phi = cmap.pair, cmap.phi
    psi0 = mp.mpf(float(pair.psi0))
    if isinstance(lam, Fraction):
        lam = mp.mpf(lam.numerator) / lam.denominator
    lam = mp.mpf(lam)
    t = mp.mpf(t)
    with mp.workdps(40):
        if t <= psi0:
            # u = t; stay in exact arithmetic
            u = t
            x_big = mp.expm1(u)
            v = u + mp.log((1 + lam * x_big) / (1 + x_big))
            delta = _mp_base(cmap, v) - t
            return delta, (mp.log(abs(delta)) if delta else mp.ninf)
        ls = phi.mp_log_inverse(t - psi0)
        s = mp.exp(ls)
        a, b = mp.mpf(float(pair.a)), mp.mpf(float(pair.b))
        lnC = mp.log(mp.mpf(float(pair.C))) if pair.a > 0 else mp.mpf(0)
        log_A = mp.log(a) + s * lnC if pair.a > 0 else mp.ninf
        if pair.a > 0 and log_A > _LOG_LIMIT:
            # u is astronomically large: e^-u = 0 exactly at any precision we use
            d1 = mp.log(lam)
            log_slope = _logaddexp(log_A + mp.log(lnC), mp.log(b) if b > 0 else mp.ninf)
            log_sigma = mp.log(abs(d1)) - log_slope
            log_delta = phi.mp_log_derivative(ls) + log_sigma
            return None, log_delta
        A = mp.exp(log_A) if pair.a > 0 else mp.mpf(0)
        u = psi0 + (A - a if pair.a > 0 else 0) + b * s
        d1 = mp.log(lam) if u > _LOG_LIMIT else mp.log(lam + (1 - lam) / (1 + mp.expm1(u)))
        if u + d1 <= psi0:
            delta = _mp_base(cmap, u + d1) - t
            return delta, (mp.log(abs(delta)) if delta else mp.ninf)
        sigma = _solve_sigma(A, lnC, b, d1)
        delta = phi.mp_diff(s, sigma)
        return delta, (mp.log(abs(delta)) if delta else mp.ninf)


def _logaddexp(x, y):
    if x == mp.ninf:
        return y
    if y == mp.ninf:
        return x
    hi, lo = (x, y) if x > y else (y, x)
    return hi + mp.log1p(mp.exp(lo - hi)) if hi - lo < 1e6 else hi


def _solve_sigma(A, lnC, b, d1):
    """Solve A*(C**sigma - 1) + b*sigma = d1 for sigma (monotone in sigma)."""
    def g(x):
        return A * mp.expm1(x * lnC) + b * x - d1

    slope = A * lnC + b
    lo, hi = (mp.mpf(0), d1 / slope) if d1 > 0 else (d1 / slope, mp.mpf(0))
    if d1 < 0:
        # expm1 is bounded below by -1, so the root may sit further left
        while g(lo) > 0:
            lo *= 2
    for _ in range(400):
        mid = (lo + hi) / 2
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= abs(mid) * mp.mpf(10) ** (-35):
            break
    return (lo + hi) / 2


def _mp_base(cmap, x):
    """hhat before log-precomposition, in mpmath, for moderate arguments."""
    pair = cmap.pair
    psi0 = mp.mpf(float(pair.psi0))
    if x <= psi0:
        return mp.mpf(x)
    y = x - psi0
    a, b = mp.mpf(float(pair.a)), mp.mpf(float(pair.b))
    lnC = mp.log(mp.mpf(float(pair.C)))

    def f(z):
        return (a * mp.expm1(z * lnC) if pair.a > 0 else 0) + b * z

    lo, hi = mp.mpf(0), (y / b if b > 0 else mp.log1p(y / a) / lnC)
    for _ in range(400):
        mid = (lo + hi) / 2
        if f(mid) > y:
            hi = mid
        else:
            lo = mid
        if hi - lo <= mp.mpf(10) ** (-35) * max(1, hi):
            break
    return cmap.phi.mp_value((lo + hi) / 2) + psi0


def linear_control_log_defect(cmap: CompressionMap, m, t):
    """log |hhat(m * hhat^-1(t)) / t - 1| (minus infinity when the defect is zero)."""
    _, log_delta = _conjugate_delta(cmap, m, t)
    return log_delta - mp.log(t)


def linear_control_defect(cmap: CompressionMap, m, t) -> float:
    if t <= 0:
        raise InvalidInputError("t must be positive")
    ld = linear_control_log_defect(cmap, m, t)
    if ld == mp.ninf or ld < -745:
        return 0.0
    return float(mp.exp(ld))


def conjugated_radius(cmap: CompressionMap, lam, t):
    """hhat(lam * hhat^-1(t)) as a float (used for slope limits)."""
    delta, log_delta = _conjugate_delta(cmap, lam, t)
    if delta is None:
        return float(t)  # relative change below exp(-LOG_LIMIT)
    return float(mp.mpf(t) + delta)
