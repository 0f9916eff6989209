"""Exact arithmetic in PGL(2, Z[1/p]) and PSL(2, Z).

Elements are stored as primitive integer matrices.  Congruence subgroups
of the modular group are described by their image in SL(2, Z/p^k)/{+-1},
so membership is a lookup in a finite table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import (BadDenominator, NegativeDeterminant, NonConvergence,
                     NotInGroup, SingularMatrix)


def p_valuation(x: int, p: int) -> int:
    x = abs(x)
    if x == 0:
        raise ValueError("valuation of zero")
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    return all(p % q for q in range(2, math.isqrt(p) + 1))


def _canonical_tuple(a, b, c, d):
    g = math.gcd(math.gcd(a, b), math.gcd(c, d))
    a, b, c, d = a // g, b // g, c // g, d // g
    lead = next(v for v in (a, b, c, d) if v != 0)
    if lead < 0:
        a, b, c, d = -a, -b, -c, -d
    return a, b, c, d


@dataclass(frozen=True, order=True)
class PElement:
    """Projective class of an invertible matrix over Z[1/p].

    The stored matrix ``(a, b, c, d)`` is primitive, its first nonzero entry
    is positive and its determinant is +-p^e.  Use :func:`normalize` or
    :meth:`from_ints` to build instances.
    """

    a: int
    b: int
    c: int
    d: int
    p: int = field(default=2, compare=False)

    @classmethod
    def from_ints(cls, a, b, c, d, p):
        return normalize([[a, b], [c, d]], p)

    @property
    def entries(self):
        return (self.a, self.b, self.c, self.d)

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    @property
    def det_exponent(self) -> int:
        return p_valuation(self.det, self.p)

    def matrix(self):
        return [[self.a, self.b], [self.c, self.d]]

    def __mul__(self, other: "PElement") -> "PElement":
        return mul(self, other)

    def __repr__(self):
        return f"PElement([[{self.a}, {self.b}], [{self.c}, {self.d}]], p={self.p})"


def normalize(raw, p: int) -> PElement:
    """Canonical representative of the projective class of ``raw``.

    ``raw`` is a 2x2 nested sequence of integers, fractions or strings such
    as ``"1/2"``.  Denominators must be powers of ``p``.
    """
    q = [[Fraction(v) for v in row] for row in raw]
    if len(q) != 2 or any(len(row) != 2 for row in q):
        raise ValueError("expected a 2x2 matrix")
    flat = [q[0][0], q[0][1], q[1][0], q[1][1]]
    if flat[0] * flat[3] - flat[1] * flat[2] == 0:
        raise SingularMatrix("determinant is zero")
    den = 1
    for v in flat:
        den = den * v.denominator // math.gcd(den, v.denominator)
    rest = den
    while rest % p == 0:
        rest //= p
    if rest != 1:
        raise BadDenominator(f"denominator {den} is not a power of {p}")
    ints = [int(v * den) for v in flat]
    a, b, c, d = _canonical_tuple(*ints)
    det = a * d - b * c
    rest = abs(det)
    while rest % p == 0:
        rest //= p
    if rest != 1:
        raise NotInGroup(f"determinant {det} is not +-{p}^e")
    return PElement(a, b, c, d, p)


def _from_canonical_ints(a, b, c, d, p) -> PElement:
    a, b, c, d = _canonical_tuple(a, b, c, d)
    return PElement(a, b, c, d, p)


def mul(x: PElement, y: PElement) -> PElement:
    if x.p != y.p:
        raise ValueError("elements belong to different primes")
    return _from_canonical_ints(x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d,
                                x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d, x.p)


def inv(x: PElement) -> PElement:
    # the adjugate is a projective inverse
    return _from_canonical_ints(x.d, -x.b, -x.c, x.a, x.p)


def eq(x: PElement, y: PElement) -> bool:
    return x.p == y.p and x.entries == y.entries


def identity(p: int) -> PElement:
    return PElement(1, 0, 0, 1, p)


def power(x: PElement, k: int) -> PElement:
    if k < 0:
        x, k = inv(x), -k
    out = identity(x.p)
    for _ in range(k):
        out = mul(out, x)
    return out


def in_gamma(x: PElement) -> bool:
    return x.det == 1


def height(x: PElement) -> int:
    return max(abs(v) for v in x.entries)


# ---------------------------------------------------------------------------
# upper half-plane


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("point must be finite")
        if not self.y > 0:
            raise ValueError("point must lie in the upper half-plane")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "HPoint":
        return cls(z.real, z.imag)


def moebius(g: PElement, z: HPoint):
    """Return ``(g z, c z + d)`` for the canonical representative of ``g``."""
    if g.det < 0:
        raise NegativeDeterminant(f"{g!r} has no representative with positive determinant")
    zz = z.z
    j = g.c * zz + g.d
    w = (g.a * zz + g.b) / j
    # imaginary part from the exact formula, immune to cancellation
    y = g.det * z.y / abs(j) ** 2
    return HPoint(w.real, y), j


def reduce_to_F(z: HPoint, p: int = 2, max_iter: int = 10000):
    """Move ``z`` into the standard fundamental domain.

    Returns ``(z0, gamma)`` with ``gamma z = z0``, ``|Re z0| <= 1/2`` and
    ``|z0| >= 1``.  Ties go to ``Re z0 in [-1/2, 1/2)`` and, on the unit
    circle, to ``Re z0 <= 0``.
    """
    x, y = z.x, z.y
    a, b, c, d = 1, 0, 0, 1
    eps = 1e-14
    for _ in range(max_iter):
        n = math.floor(x + 0.5)
        if n:
            x -= n
            a, b = a - n * c, b - n * d
        r2 = x * x + y * y
        if r2 < 1 - eps:
            x, y = -x / r2, y / r2
            a, b, c, d = -c, -d, a, b
            continue
        break
    else:
        raise NonConvergence("fundamental domain reduction did not terminate")
    if abs(x * x + y * y - 1) <= eps and x > eps:
        # S maps the right half of the arc onto the left half
        x = -x
        a, b, c, d = -c, -d, a, b
    return HPoint(x, y), _from_canonical_ints(a, b, c, d, p)


# ---------------------------------------------------------------------------
# finite quotients SL(2, Z/N)/{+-1}


def _canon_mod(a, b, c, d, N):
    """Vectorised choice of representative of {g, -g} mod N; returns codes."""
    a, b, c, d = (np.mod(v, N) for v in (a, b, c, d))
    na, nb, nc, nd = (np.mod(-v, N) for v in (a, b, c, d))
    code = ((a * N + b) * N + c) * N + d
    ncode = ((na * N + nb) * N + nc) * N + nd
    return np.minimum(code, ncode)


def decode(codes, N):
    codes = np.asarray(codes, dtype=np.int64)
    d = codes % N
    c = (codes // N) % N
    b = (codes // (N * N)) % N
    a = codes // (N * N * N)
    return a, b, c, d


@lru_cache(maxsize=None)
def psl2_codes(N: int) -> np.ndarray:
    """Sorted codes of all elements of SL(2, Z/N)/{+-1}."""
    if N == 1:
        return np.zeros(1, dtype=np.int64)
    r = np.arange(N, dtype=np.int64)
    A, C = np.meshgrid(r, r, indexing="ij")
    A, C = A.ravel(), C.ravel()
    out = []
    for a, c in zip(A.tolist(), C.tolist()):
        if math.gcd(math.gcd(a, c), N) != 1:
            continue
        if math.gcd(a, N) == 1:
            ainv = pow(a, -1, N)
            b = r
            d = (1 + b * c) * ainv % N
        else:
            cinv = pow(c, -1, N)
            d = r
            b = (a * d - 1) * cinv % N
        out.append(_canon_mod(np.full(N, a), b, np.full(N, c), d, N))
    return np.unique(np.concatenate(out))


def psl2_order(N: int) -> int:
    return len(psl2_codes(N))


@dataclass(frozen=True, eq=False)
class CongruenceLevel:
    """A subgroup of PSL(2, Z) containing the principal congruence subgroup
    of level p^k, stored as its image in SL(2, Z/p^k)/{+-1}."""

    p: int
    k: int
    codes: np.ndarray
    label: str = "custom"

    @property
    def modulus(self) -> int:
        return self.p ** self.k

    @property
    def index_in_gamma(self) -> int:
        return psl2_order(self.modulus) // len(self.codes)

    @property
    def haar_weight(self) -> Fraction:
        return Fraction(1, self.index_in_gamma)

    @property
    def members(self):
        a, b, c, d = decode(self.codes, self.modulus)
        return [tuple(int(v) for v in t) for t in zip(a, b, c, d)]

    def contains_arrays(self, a, b, c, d) -> np.ndarray:
        """Membership of integer matrices of determinant one (arrays)."""
        N = self.modulus
        a = np.asarray(a, dtype=np.int64)
        if N == 1:
            return np.ones(a.shape, dtype=bool)
        code = _canon_mod(a, np.asarray(b, dtype=np.int64),
                          np.asarray(c, dtype=np.int64), np.asarray(d, dtype=np.int64), N)
        pos = np.searchsorted(self.codes, code)
        pos = np.minimum(pos, len(self.codes) - 1)
        return self.codes[pos] == code

    def contains(self, g: PElement) -> bool:
        if g.det != 1:
            return False
        return bool(self.contains_arrays(g.a, g.b, g.c, g.d))

    def lift_to(self, k2: int) -> "CongruenceLevel":
        """Same subgroup described modulo p^k2 (k2 >= k)."""
        if k2 < self.k:
            raise ValueError("can only lift to a finer modulus")
        if k2 == self.k:
            return self
        N2 = self.p ** k2
        a, b, c, d = decode(psl2_codes(N2), N2)
        keep = self.contains_arrays(a, b, c, d)
        return CongruenceLevel(self.p, k2, psl2_codes(N2)[keep], self.label)

    def same_group(self, other: "CongruenceLevel") -> bool:
        k = max(self.k, other.k)
        return np.array_equal(self.lift_to(k).codes, other.lift_to(k).codes)

    def __repr__(self):
        return f"CongruenceLevel({self.label}, p={self.p}, k={self.k}, index={self.index_in_gamma})"


def gamma_level(p: int) -> CongruenceLevel:
    return CongruenceLevel(p, 0, np.zeros(1, dtype=np.int64), "gamma")


def gamma0_level(p: int, k: int = 1) -> CongruenceLevel:
    N = p ** k
    codes = psl2_codes(N)
    a, b, c, d = decode(codes, N)
    return CongruenceLevel(p, k, codes[c % N == 0], f"gamma0:{p}^{k}")


def principal_level(p: int, k: int = 1) -> CongruenceLevel:
    N = p ** k
    one = _canon_mod(np.int64(1), np.int64(0), np.int64(0), np.int64(1), N)
    return CongruenceLevel(p, k, np.atleast_1d(np.int64(one)), f"principal:{p}^{k}")


def parse_level(text: str, p: int) -> CongruenceLevel:
    """Parse ``gamma``, ``gamma0:p^k`` or ``principal:p^k``."""
    text = text.strip().lower()
    if text == "gamma":
        return gamma_level(p)
    kind, _, mod = text.partition(":")
    if kind not in ("gamma0", "principal") or not mod:
        raise ValueError(f"unknown level {text!r}")
    if "^" in mod:
        base, k = (int(v) for v in mod.split("^"))
    else:
        base, k = int(mod), 1
        while base > 1 and base % p == 0 and base != p:
            base //= p
            k += 1
    if base != p:
        raise ValueError(f"level modulus must be a power of p={p}")
    return gamma0_level(p, k) if kind == "gamma0" else principal_level(p, k)


def gamma_sigma(level: CongruenceLevel, sigma: PElement) -> CongruenceLevel:
    """The subgroup level ∩ sigma level sigma^{-1}."""
    p = level.p
    if sigma.p != p:
        raise ValueError("prime mismatch")
    e = sigma.det_exponent
    k2 = level.k + e
    base = level.lift_to(k2)
    if e == 0 and level.k == 0:
        return base
    N2, pe = p ** k2, p ** e
    a, b, c, d = decode(base.codes, N2)
    # sigma^{-1} gamma sigma = adj(sigma) gamma sigma / det(sigma)
    sa, sb, sc, sd = sigma.entries
    ia, ib, ic, id_ = sd, -sb, -sc, sa
    ma = ia * a + ib * c
    mb = ia * b + ib * d
    mc = ic * a + id_ * c
    md = ic * b + id_ * d
    ra = ma * sa + mb * sc
    rb = ma * sb + mb * sd
    rc = mc * sa + md * sc
    rd = mc * sb + md * sd
    ok = np.ones(len(a), dtype=bool)
    for v in (ra, rb, rc, rd):
        ok &= (v % pe) == 0
    det = sigma.det
    sign = 1 if det > 0 else -1
    # divide by the determinant; the sign only flips the projective class
    qa, qb, qc, qd = (sign * (v // pe) for v in (ra, rb, rc, rd))
    ok &= level.contains_arrays(qa, qb, qc, qd)
    return CongruenceLevel(p, k2, base.codes[ok], f"({level.label})_sigma")
