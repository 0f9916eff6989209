"""Double cosets and the Hecke algebra of PSL(2, Z) in PGL(2, Z[1/p]).

Right cosets ``Gamma alpha`` are labelled by the Hermite normal form of
``alpha``; double cosets of positive determinant are labelled by the single
integer ``m`` of their Smith form ``diag(1, p^m)``.  Subsets of G of the form
``A Gamma_0 B`` (and finite unions of them) are handled by
:class:`CosetSet`, whose bounded-height members are enumerated exactly.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .arith_core import (CongruenceLevel, PElement, _canon_mod, decode,
                         gamma_level, gamma_sigma, identity, inv, mul,
                         normalize, psl2_codes)
from .errors import BudgetExceeded, NegativeDeterminant

DEFAULT_MAX_CANDIDATES = 5_000_000
# each determinant class has at least this many times H^2 members of height <= H
_MIN_DENSITY = 4


# ---------------------------------------------------------------------------
# enumeration of integer matrices


def _egcd_vec(a, c):
    """Vectorised extended gcd: returns g >= 0, s, t with a s + c t = g."""
    r0, r1 = a.copy(), c.copy()
    s0, s1 = np.ones_like(a), np.zeros_like(a)
    t0, t1 = np.zeros_like(a), np.ones_like(a)
    while np.any(r1 != 0):
        nz = r1 != 0
        q = np.zeros_like(r0)
        q[nz] = r0[nz] // r1[nz]
        r0, r1 = np.where(nz, r1, r0), np.where(nz, r0 - q * r1, r1)
        s0, s1 = np.where(nz, s1, s0), np.where(nz, s0 - q * s1, s1)
        t0, t1 = np.where(nz, t1, t0), np.where(nz, t0 - q * t1, t1)
    neg = r0 < 0
    return np.where(neg, -r0, r0), np.where(neg, -s0, s0), np.where(neg, -t0, t0)


def _k_range(base, step, H):
    """Integers k with |base + k step| <= H, as (lo, hi); step may be 0."""
    big = np.int64(1 << 40)
    lo = np.full(base.shape, -big)
    hi = np.full(base.shape, big)
    pos, neg, zero = step > 0, step < 0, step == 0
    sp_, sn_ = step[pos], step[neg]
    lo[pos] = -((H + base[pos]) // sp_)
    hi[pos] = (H - base[pos]) // sp_
    lo[neg] = -((H - base[neg]) // (-sn_))
    hi[neg] = (H + base[neg]) // (-sn_)
    bad = zero & (np.abs(base) > H)
    hi[bad] = lo[bad] - 1
    return lo, hi


def sort_by_height(mats: np.ndarray) -> np.ndarray:
    if len(mats) == 0:
        return mats
    h = np.abs(mats).max(axis=1)
    order = np.lexsort((mats[:, 3], mats[:, 2], mats[:, 1], mats[:, 0], h))
    return mats[order]


@lru_cache(maxsize=64)
def _enumerate_det_cached(delta: int, H: int) -> np.ndarray:
    out = []
    cs = np.arange(-H, H + 1, dtype=np.int64)
    for a in range(0, H + 1):
        c = cs if a > 0 else cs[cs != 0]
        av = np.full(c.shape, a, dtype=np.int64)
        g, s, t = _egcd_vec(av, c)
        ok = (delta % g) == 0
        c, g, s, t, av = c[ok], g[ok], s[ok], t[ok], av[ok]
        q = delta // g
        d0, b0 = s * q, -t * q
        sd, sb = c // g, av // g
        lo1, hi1 = _k_range(d0, sd, H)
        lo2, hi2 = _k_range(b0, sb, H)
        lo, hi = np.maximum(lo1, lo2), np.minimum(hi1, hi2)
        cnt = np.maximum(hi - lo + 1, 0)
        total = int(cnt.sum())
        if total == 0:
            continue
        idx = np.repeat(np.arange(len(c)), cnt)
        start = np.repeat(np.cumsum(cnt) - cnt, cnt)
        k = lo[idx] + (np.arange(total) - start)
        A = av[idx]
        C = c[idx]
        B = b0[idx] + k * sb[idx]
        D = d0[idx] + k * sd[idx]
        keep = np.gcd(np.gcd(A, B), np.gcd(C, D)) == 1
        if a == 0:
            keep &= B > 0
        out.append(np.stack([A[keep], B[keep], C[keep], D[keep]], axis=1))
    if not out:
        return np.zeros((0, 4), dtype=np.int64)
    mats = sort_by_height(np.concatenate(out))
    mats.setflags(write=False)
    return mats


def enumerate_det(delta: int, H: int) -> np.ndarray:
    """All canonical primitive integer matrices of determinant ``delta`` with
    entries bounded by ``H`` in absolute value, ordered by height then
    lexicographically.  Returned as an ``(M, 4)`` int64 array."""
    if delta == 0:
        raise ValueError("determinant must be nonzero")
    if H < 1:
        return np.zeros((0, 4), dtype=np.int64)
    return _enumerate_det_cached(int(delta), int(H))


def heights(mats: np.ndarray) -> np.ndarray:
    return np.abs(mats).max(axis=1)


def to_elements(mats: np.ndarray, p: int):
    return [PElement(int(a), int(b), int(c), int(d), p) for a, b, c, d in mats]


# ---------------------------------------------------------------------------
# Hermite forms, double cosets


def hnf(theta: PElement) -> PElement:
    """Representative ``[[a, b], [0, d]]`` with ``0 <= b < d`` of ``Gamma theta``."""
    if theta.det < 0:
        raise NegativeDeterminant(f"{theta!r}")
    a, b, c, d = theta.entries
    if c != 0:
        g = math.gcd(a, c)
        # s a + t c = g
        s, t = _egcd_int(a, c)
        a, b, c, d = g, s * b + t * d, 0, (-c // g) * b + (a // g) * d
    if a < 0:
        a, b, d = -a, -b, -d
    b %= d
    return PElement(a, b, 0, d, theta.p)


def _egcd_int(a, c):
    r0, r1, s0, s1, t0, t1 = a, c, 1, 0, 0, 1
    while r1:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if r0 < 0:
        s0, t0 = -s0, -t0
    return s0, t0


def classify(theta: PElement) -> int:
    """Label ``m`` of the double coset ``Gamma diag(1, p^m) Gamma`` of ``theta``."""
    if theta.det < 0:
        raise NegativeDeterminant(f"{theta!r} lies outside the positive-determinant double cosets")
    # canonical elements are primitive, so the elementary divisors are 1, p^e
    return theta.det_exponent


def hnf_reps(m: int, p: int):
    """Hermite forms of the primitive matrices of determinant p^m."""
    reps = []
    for i in range(m + 1):
        a, d = p ** i, p ** (m - i)
        for b in range(d):
            if math.gcd(math.gcd(a, b), d) == 1:
                reps.append(PElement(a, b, 0, d, p))
    return reps


def degree(m: int, p: int) -> int:
    return 1 if m == 0 else p ** (m - 1) * (p + 1)


@dataclass(frozen=True)
class DoubleCoset:
    m: int
    p: int
    right_reps: tuple

    @property
    def canonical_sigma(self) -> PElement:
        return PElement(1, 0, 0, self.p ** self.m, self.p)

    @property
    def degree(self) -> int:
        return len(self.right_reps)


def double_coset_decomp(sigma: PElement) -> DoubleCoset:
    m = classify(sigma)
    return DoubleCoset(m, sigma.p, tuple(hnf_reps(m, sigma.p)))


# ---------------------------------------------------------------------------
# Hecke algebra


@dataclass(frozen=True)
class HeckeElement:
    """Integer combination of double cosets ``T_m = [Gamma diag(1,p^m) Gamma]``."""

    p: int
    terms: tuple = ()

    @classmethod
    def from_dict(cls, p, d):
        return cls(p, tuple(sorted((int(m), int(c)) for m, c in d.items() if c != 0)))

    @classmethod
    def T(cls, m, p):
        return cls(p, ((m, 1),))

    def as_dict(self):
        return dict(self.terms)

    def __add__(self, other):
        acc = Counter(self.as_dict())
        acc.update(other.as_dict())
        return HeckeElement.from_dict(self.p, acc)

    def __rmul__(self, k: int):
        return HeckeElement.from_dict(self.p, {m: k * c for m, c in self.terms})

    def __mul__(self, other):
        if isinstance(other, int):
            return other * self
        return hecke_product(self, other)

    @property
    def max_m(self) -> int:
        return max((m for m, _ in self.terms), default=0)


@lru_cache(maxsize=None)
def _structure_constants(m1: int, m2: int, p: int):
    reps1, reps2 = hnf_reps(m1, p), hnf_reps(m2, p)
    counts = Counter()
    for x in reps1:
        for y in reps2:
            r = hnf(mul(x, y))
            # Gamma x y = Gamma diag(1,p^m) exactly when the Hermite form is that diagonal
            if r.a == 1 and r.b == 0:
                counts[r.det_exponent] += 1
    return dict(counts)


def hecke_product(x: HeckeElement, y: HeckeElement) -> HeckeElement:
    if x.p != y.p:
        raise ValueError("prime mismatch")
    acc = Counter()
    for m1, c1 in x.terms:
        for m2, c2 in y.terms:
            for m, c in _structure_constants(m1, m2, x.p).items():
                acc[m] += c1 * c2 * c
    return HeckeElement.from_dict(x.p, acc)


def hecke_degree(h: HeckeElement) -> int:
    return sum(c * degree(m, h.p) for m, c in h.terms)


# ---------------------------------------------------------------------------
# transversals of congruence subgroups


@dataclass(frozen=True)
class CosetRepSet:
    level: CongruenceLevel
    reps: tuple


def _right_coset_ids(level: CongruenceLevel) -> np.ndarray:
    """Index of the right coset ``level * x`` for every element x of the quotient."""
    N = level.modulus
    codes = psl2_codes(N)
    ids = np.full(len(codes), -1, dtype=np.int64)
    ma, mb, mc, md = decode(level.codes, N)
    nxt = 0
    for pos in range(len(codes)):
        if ids[pos] >= 0:
            continue
        xa, xb, xc, xd = (int(v) for v in decode(codes[pos], N))
        prod = _canon_mod(ma * xa + mb * xc, ma * xb + mb * xd,
                          mc * xa + md * xc, mc * xb + md * xd, N)
        ids[np.searchsorted(codes, prod)] = nxt
        nxt += 1
    return ids


@lru_cache(maxsize=128)
def _right_coset_reps_cached(p, k, codes_bytes):
    level = CongruenceLevel(p, k, np.frombuffer(codes_bytes, dtype=np.int64))
    N = level.modulus
    index = level.index_in_gamma
    if index == 1:
        return (identity(p),)
    ids = _right_coset_ids(level)
    all_codes = psl2_codes(N)
    chosen = {}
    H = 2
    while len(chosen) < index:
        mats = enumerate_det(1, H)
        code = _canon_mod(mats[:, 0], mats[:, 1], mats[:, 2], mats[:, 3], N)
        cid = ids[np.searchsorted(all_codes, code)]
        chosen = {}
        for row, c in zip(mats, cid.tolist()):
            if c not in chosen:
                chosen[c] = row
        H *= 2
    order = sorted(chosen.values(), key=lambda r: (int(np.abs(r).max()), tuple(int(v) for v in r)))
    return tuple(PElement(*(int(v) for v in r), p) for r in order)


def right_coset_reps(level: CongruenceLevel) -> CosetRepSet:
    """Transversal ``{s_i}`` with ``Gamma = union of level * s_i``, lifted to
    minimal-height elements of PSL(2, Z)."""
    reps = _right_coset_reps_cached(level.p, level.k, level.codes.tobytes())
    return CosetRepSet(level, reps)


def double_coset_transversal(level: CongruenceLevel, sigma: PElement):
    """Elements ``r_j`` of the level with ``level sigma level = union level sigma r_j``."""
    sub = gamma_sigma(level, inv(sigma))
    reps = right_coset_reps(sub).reps
    return tuple(r for r in reps if level.contains(r))


# ---------------------------------------------------------------------------
# subsets of G built from cosets


@dataclass(frozen=True, eq=False)
class CosetSet:
    """Multiset union of pieces ``A level B``; an element's multiplicity is
    the number of pieces containing it."""

    level: CongruenceLevel
    pieces: tuple
    label: str = ""

    @property
    def p(self):
        return self.level.p

    def key(self):
        return (self.level.p, self.level.k, self.level.codes.tobytes(),
                tuple((a.entries, b.entries) for a, b in self.pieces))

    def det_classes(self):
        """Possible (sign, exponent) of canonical determinants of members."""
        out = set()
        for A, B in self.pieces:
            sign = 1 if A.det * B.det > 0 else -1
            e = A.det_exponent + B.det_exponent
            while e >= 0:
                out.add((sign, e))
                e -= 2
        return sorted(out, key=lambda t: (t[1], -t[0]))

    def multiplicity(self, mats: np.ndarray) -> np.ndarray:
        mult = np.zeros(len(mats), dtype=np.int64)
        if len(mats) == 0:
            return mult
        t = [mats[:, i].astype(np.int64) for i in range(4)]
        det_t = t[0] * t[3] - t[1] * t[2]
        for A, B in self.pieces:
            # theta in A level B  <=>  adj(A) theta adj(B) is a p-power multiple of a level element
            aa, ab, ac, ad = A.d, -A.b, -A.c, A.a
            ba, bb, bc, bd = B.d, -B.b, -B.c, B.a
            xa = aa * t[0] + ab * t[2]
            xb = aa * t[1] + ab * t[3]
            xc = ac * t[0] + ad * t[2]
            xd = ac * t[1] + ad * t[3]
            ya = xa * ba + xb * bc
            yb = xa * bb + xb * bd
            yc = xc * ba + xd * bc
            yd = xc * bb + xd * bd
            det = A.det * B.det * det_t
            ok = det > 0
            lam = np.zeros(len(mats), dtype=np.int64)
            for e in {int(v) for v in np.unique(np.abs(det[ok]))}:
                r = math.isqrt(e)
                if r * r == e:
                    lam[np.abs(det) == e] = r
            ok &= lam > 0
            safe = np.where(ok, lam, 1)
            for v in (ya, yb, yc, yd):
                ok &= (v % safe) == 0
            if not ok.any():
                continue
            ga, gb, gc, gd = (np.where(ok, v // safe, 0) for v in (ya, yb, yc, yd))
            idx = np.nonzero(ok)[0]
            inside = self.level.contains_arrays(ga[idx], gb[idx], gc[idx], gd[idx])
            mult[idx[inside]] += 1
        return mult

    def enumerate(self, H: int, max_candidates: int = DEFAULT_MAX_CANDIDATES):
        """Members of height at most H with multiplicities, in (height, lex) order."""
        p = self.level.p
        blocks, mults = [], []
        classes = self.det_classes()
        # refuse before allocating anything
        if _MIN_DENSITY * H * H * len(classes) > max_candidates:
            raise BudgetExceeded(f"height {H} needs more than {max_candidates} candidate matrices")
        total = 0
        for sign, e in classes:
            cand = enumerate_det(sign * p ** e, H)
            total += len(cand)
            if total > max_candidates:
                raise BudgetExceeded(f"more than {max_candidates} candidate matrices")
            m = self.multiplicity(cand)
            keep = m > 0
            blocks.append(cand[keep])
            mults.append(m[keep])
        if not blocks:
            return np.zeros((0, 4), dtype=np.int64), np.zeros(0, dtype=np.int64)
        mats = np.concatenate(blocks)
        mult = np.concatenate(mults)
        h = heights(mats)
        order = np.lexsort((mats[:, 3], mats[:, 2], mats[:, 1], mats[:, 0], h))
        return mats[order], mult[order]


def right_coset(level: CongruenceLevel, g: PElement) -> CosetSet:
    return CosetSet(level, ((identity(level.p), g),), f"{level.label} g")


def left_coset(level: CongruenceLevel, g: PElement) -> CosetSet:
    return CosetSet(level, ((g, identity(level.p)),), f"g {level.label}")


def two_sided(level: CongruenceLevel, left: PElement, right: PElement) -> CosetSet:
    return CosetSet(level, ((left, right),), f"s1 {level.label} s2")


def double_coset_set(level: CongruenceLevel, sigma: PElement) -> CosetSet:
    e = identity(level.p)
    rs = double_coset_transversal(level, sigma)
    return CosetSet(level, tuple((e, mul(sigma, r)) for r in rs), f"{level.label} sigma {level.label}")


def block_set(level: CongruenceLevel, sigma: PElement, i: int, j: int) -> CosetSet:
    """The set ``s_i^{-1} level sigma level s_j`` of a block Hecke matrix."""
    s = right_coset_reps(level).reps
    rs = double_coset_transversal(level, sigma)
    return CosetSet(level, tuple((inv(s[i]), mul(mul(sigma, r), s[j])) for r in rs),
                    f"block {i},{j}")


def trace_set(level: CongruenceLevel, sigma: PElement) -> CosetSet:
    """Multiset union over i of ``s_i^{-1} level sigma level s_i``."""
    s = right_coset_reps(level).reps
    rs = double_coset_transversal(level, sigma)
    pieces = tuple((inv(si), mul(mul(sigma, r), si)) for si in s for r in rs)
    return CosetSet(level, pieces, f"trace {level.label}")


def enumerate_coset_elements(level: CongruenceLevel, g: PElement, H: int,
                             max_candidates: int = DEFAULT_MAX_CANDIDATES):
    """All elements of ``level * g`` of height at most H."""
    mats, _ = right_coset(level, g).enumerate(H, max_candidates)
    return to_elements(mats, level.p)


# ---------------------------------------------------------------------------
# truncated regular representation on functions on Gamma \ G


@dataclass(frozen=True, eq=False)
class TruncatedRegularRep:
    radius: int
    p: int
    basis: tuple
    coset_index: dict
    matrix: sp.csr_matrix
    interior: np.ndarray

    def interior_rows(self, mat=None):
        mat = self.matrix if mat is None else mat
        return mat.tocsr()[np.nonzero(self.interior)[0], :]


@lru_cache(maxsize=None)
def _ball_basis(radius: int, p: int):
    basis = []
    for e in range(radius + 1):
        basis.extend(hnf_reps(e, p))
    return tuple(basis)


def regular_rep_matrix(h: HeckeElement, radius: int) -> TruncatedRegularRep:
    """Matrix of ``(T f)(Gamma g) = sum_i f(Gamma alpha_i g)`` on cosets of
    determinant exponent at most ``radius``; rows of exponent at most
    ``radius - max_m`` are exact."""
    p = h.p
    basis = _ball_basis(radius, p)
    index = {b.entries: i for i, b in enumerate(basis)}
    rows, cols, vals = [], [], []
    for m, coeff in h.terms:
        reps = hnf_reps(m, p)
        for i, g in enumerate(basis):
            for alpha in reps:
                tgt = hnf(mul(alpha, g)).entries
                j = index.get(tgt)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
                    vals.append(coeff)
    n = len(basis)
    mat = sp.csr_matrix((np.array(vals, dtype=np.int64), (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    interior = np.array([b.det_exponent <= radius - h.max_m for b in basis])
    return TruncatedRegularRep(radius, p, basis, index, mat, interior)


# ---------------------------------------------------------------------------
# the two decompositions of a double coset


@dataclass(frozen=True)
class CosetIdentityReport:
    sigma: PElement
    degree: int
    right_factors: tuple
    left_factors: tuple
    checked_elements: int
    right_ok: bool
    left_ok: bool

    @property
    def ok(self):
        return self.right_ok and self.left_ok


def coset_identity_check(sigma: PElement, ball_height: int = 12) -> CosetIdentityReport:
    """Check ``union Gamma sigma s_i = Gamma sigma Gamma = union r_j sigma Gamma``
    with both families of the same size, element by element inside a ball."""
    p = sigma.p
    G = gamma_level(p)
    m = classify(sigma)
    deg = degree(m, p)
    s = right_coset_reps(gamma_sigma(G, inv(sigma))).reps
    r = tuple(inv(x) for x in right_coset_reps(gamma_sigma(G, sigma)).reps)
    right = [mul(sigma, x) for x in s]
    left = [mul(x, sigma) for x in r]
    right_keys = [hnf(a).entries for a in right]
    left_keys = [hnf(_transpose(a)).entries for a in left]
    ok_r = len(right) == deg and len(set(right_keys)) == deg
    ok_l = len(left) == deg and len(set(left_keys)) == deg
    mats = enumerate_det(p ** m, ball_height)
    hit_r, hit_l = Counter(), Counter()
    rk, lk = set(right_keys), set(left_keys)
    for row in mats:
        th = PElement(*(int(v) for v in row), p)
        kr = hnf(th).entries
        kl = hnf(_transpose(th)).entries
        ok_r &= kr in rk
        ok_l &= kl in lk
        hit_r[kr] += 1
        hit_l[kl] += 1
    ok_r &= len(hit_r) == deg
    ok_l &= len(hit_l) == deg
    return CosetIdentityReport(sigma, deg, tuple(right), tuple(left), len(mats), bool(ok_r), bool(ok_l))


def _transpose(x: PElement) -> PElement:
    return normalize([[x.a, x.c], [x.b, x.d]], x.p)
