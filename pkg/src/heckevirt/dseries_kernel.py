"""Discrete series kernels and their traces over the fundamental domain.

Conventions.  The weight-n space is holomorphic functions on the upper
half-plane with measure ``y^(n-2) dx dy`` and reproducing kernel
``c_n ((z - conj(w)) / 2i)^(-n)``, ``c_n = (n-1)/(4 pi)``.  For
``theta^{-1} = [[a, b], [c, d]]`` (adjugate of the canonical matrix, det D)
the diagonal of the kernel of ``pi_n(theta) P_0`` against ``dx dy / y^2`` is

    c_n (2i)^n D^(n/2) y^n (a z + b - conj(z)(c z + d))^(-n).

Integrals over the fundamental domain F use ``u = 1/y``, which turns F into
the compact region ``|x| <= 1/2, 0 <= u <= (1 - x^2)^(-1/2)`` with measure
``dx du``.

Coset sums contain infinite families of upper triangular elements
``[[A, B + k s], [0, D]]``.  Those are integrated over the truncated domain
``y <= y_max`` only, and the part above ``y_max`` is added back for the whole
family at once through the Lipschitz summation formula.  Integrating every
family member over all of F instead gives a wrong, conditionally convergent
answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .arith_core import PElement
from .cosets import CosetSet, heights, right_coset
from .errors import NegativeDeterminant, NonHyperbolic, QuadratureFailure
from .parallel import chunked, ordered_map

AREA_F = math.pi / 3
SQRT3_2 = math.sqrt(3) / 2


def check_weight(n: int) -> int:
    if int(n) != n or n < 4 or n % 2:
        raise ValueError(f"weight must be an even integer >= 4, got {n}")
    return int(n)


def c_n(n: int) -> float:
    return (n - 1) / (4 * math.pi)


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature and truncation settings.

    ``y_max`` is the height where infinite upper triangular families are cut
    (the rest is summed analytically) and where the Galerkin model splits off
    its cusp panel.  ``rel_tol``/``abs_tol`` drive the adaptive cell rule of
    order ``order`` (per axis) up to ``max_depth`` bisections.  Terms whose
    a-priori bound is below ``skip_tol`` are dropped, their bound going into
    the error.
    """

    y_max: float = 10.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-13
    max_depth: int = 14
    order: int = 6
    skip_tol: float = 1e-13
    galerkin_skip_tol: float = 1e-9
    galerkin_nx: int = 14
    galerkin_nu: int = 8
    galerkin_ncusp: int = 6
    galerkin_panels: int = 3

    def __post_init__(self):
        if not self.y_max >= 2:
            raise ValueError("y_max must be at least 2")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.order < 2 or self.max_depth < 1:
            raise ValueError("invalid adaptive scheme parameters")


@dataclass(frozen=True)
class TraceValue:
    value: complex
    err: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.err) or self.err < 0:
            raise ValueError("err must be finite and nonnegative")

    def __add__(self, other):
        if isinstance(other, TraceValue):
            return TraceValue(self.value + other.value, self.err + other.err)
        return TraceValue(self.value + other, self.err)

    __radd__ = __add__

    def __mul__(self, k):
        return TraceValue(self.value * k, self.err * abs(k))

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1) * other

    def __repr__(self):
        return f"TraceValue({self.value:.10g} +- {self.err:.2g})"


def fsum_complex(values) -> complex:
    values = np.asarray(values, dtype=complex)
    return complex(math.fsum(values.real.tolist()), math.fsum(values.imag.tolist()))


# ---------------------------------------------------------------------------
# kernel


def bergman_kernel(n: int, z: complex, w: complex) -> complex:
    return c_n(n) * ((z - np.conj(w)) / 2j) ** (-n)


def ipow(z, n: int):
    """Integer power by repeated squaring (much faster than complex pow)."""
    result = None
    base = z
    while n:
        if n & 1:
            result = base if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return result


def _as_rows(mats) -> np.ndarray:
    mats = np.asarray(mats, dtype=np.int64)
    return mats.reshape(-1, 4)


def term_coefficients(mats, n: int):
    """``(a, b, c, d, C)`` of the inverse of each canonical matrix, where C is
    the constant ``c_n (2i)^n det^(n/2)``."""
    m = _as_rows(mats).astype(float)
    A, B, C, D = m[:, 0], m[:, 1], m[:, 2], m[:, 3]
    det = A * D - B * C
    if np.any(det <= 0):
        raise NegativeDeterminant("kernel terms need positive determinant")
    const = c_n(n) * (2j) ** n * det ** (n // 2)
    return D, -B, -C, A, const


def diagonal_integrand(x, u, coef, n):
    a, b, c, d, C = coef
    den = u * u * ((a - d) * x + b - c * x * x) - c + 1j * (a + d) * u
    return C * ipow(u / den, n)


# ---------------------------------------------------------------------------
# adaptive cell quadrature over (x, s), u = u_lo + s (U(x) - u_lo)


def _tensor_rule(order):
    g, w = np.polynomial.legendre.leggauss(order)
    g = (g + 1) / 2
    w = w / 2
    X, S = np.meshgrid(g, g, indexing="ij")
    W = np.outer(w, w)
    return X.ravel(), S.ravel(), W.ravel()


def _cell_integrals(x0, x1, s0, s1, ulo, coef, n, rule):
    gx, gs, gw = rule
    hx = (x1 - x0)[:, None]
    hs = (s1 - s0)[:, None]
    x = x0[:, None] + hx * gx[None, :]
    s = s0[:, None] + hs * gs[None, :]
    U = 1.0 / np.sqrt(1.0 - x * x)
    u = ulo[:, None] + s * (U - ulo[:, None])
    jac = hx * hs * (U - ulo[:, None])
    co = tuple(v[:, None] for v in coef)
    vals = diagonal_integrand(x, u, co, n)
    return (vals * jac * gw[None, :]).sum(axis=1)


def integrate_terms(mats, ulo, n: int, q: QuadratureSpec, strict: bool = True,
                    max_cells: int = 8192):
    """Integrate the diagonal kernel of each term over F (``ulo = 0``) or over
    the part ``u >= ulo`` of F.  Returns (values, errors, failed_mask).

    Refinement decisions only use data of the term itself, so results do not
    depend on how terms are batched.
    """
    a, b, c, d, C = term_coefficients(mats, n)
    K = len(a)
    ulo = np.broadcast_to(np.asarray(ulo, dtype=float), (K,))
    rule = _tensor_rule(q.order)
    # four initial cells per term
    tid = np.repeat(np.arange(K), 4)
    x0 = np.tile([-0.5, -0.5, 0.0, 0.0], K)
    x1 = np.tile([0.0, 0.0, 0.5, 0.5], K)
    s0 = np.tile([0.0, 0.5, 0.0, 0.5], K)
    s1 = np.tile([0.5, 1.0, 0.5, 1.0], K)
    parent = None
    val = np.zeros(K, dtype=complex)
    err = np.zeros(K)
    failed = np.zeros(K, dtype=bool)
    for depth in range(q.max_depth + 1):
        if len(tid) == 0:
            break
        coef_cells = (a[tid], b[tid], c[tid], d[tid], C[tid])
        if parent is None:
            parent = _batched(_cell_integrals, x0, x1, s0, s1, ulo[tid], coef_cells, n, rule, max_cells)
        xm, sm = (x0 + x1) / 2, (s0 + s1) / 2
        kids = []
        for cx0, cx1, cs0, cs1 in ((x0, xm, s0, sm), (x0, xm, sm, s1), (xm, x1, s0, sm), (xm, x1, sm, s1)):
            kids.append(_batched(_cell_integrals, cx0, cx1, cs0, cs1, ulo[tid], coef_cells, n, rule, max_cells))
        fine = kids[0] + kids[1] + kids[2] + kids[3]
        cell_err = np.abs(fine - parent)
        est = val.copy()
        np.add.at(est, tid, fine)
        tol = np.maximum(q.rel_tol * np.abs(est), q.abs_tol)
        area = (x1 - x0) * (s1 - s0) * 2.0  # parameter area of F is 1/2 * 2
        ok = cell_err <= tol[tid] * area
        if depth == q.max_depth:
            failed[np.unique(tid[~ok])] = True
            ok[:] = True
        np.add.at(val, tid[ok], fine[ok])
        np.add.at(err, tid[ok], cell_err[ok])
        keep = ~ok
        tid, x0, x1, s0, s1 = tid[keep], x0[keep], x1[keep], s0[keep], s1[keep]
        xm, sm = xm[keep], sm[keep]
        kids = [k[keep] for k in kids]
        # split unresolved cells; their children integrals become parents
        tid = np.repeat(tid, 4)
        nx0 = np.stack([x0, x0, xm, xm], axis=1).ravel()
        nx1 = np.stack([xm, xm, x1, x1], axis=1).ravel()
        ns0 = np.stack([s0, sm, s0, sm], axis=1).ravel()
        ns1 = np.stack([sm, s1, sm, s1], axis=1).ravel()
        parent = np.stack(kids, axis=1).ravel()
        x0, x1, s0, s1 = nx0, nx1, ns0, ns1
    if strict and failed.any():
        raise QuadratureFailure(f"{int(failed.sum())} term(s) did not reach rel_tol={q.rel_tol}")
    return val, err, failed


def _batched(fn, x0, x1, s0, s1, ulo, coef, n, rule, max_cells):
    out = np.empty(len(x0), dtype=complex)
    for lo, hi in chunked(len(x0), max_cells):
        sl = slice(lo, hi)
        out[sl] = fn(x0[sl], x1[sl], s0[sl], s1[sl], ulo[sl], tuple(v[sl] for v in coef), n, rule)
    return out


def trace_PL_pi_PL(n: int, theta: PElement, q: QuadratureSpec = QuadratureSpec()) -> TraceValue:
    """Trace of the compression of ``pi_n(theta) P_0`` to functions on F."""
    n = check_weight(n)
    if theta.det < 0:
        raise NegativeDeterminant(f"{theta!r} has no representative with positive determinant")
    val, err, _ = integrate_terms(np.array([theta.entries]), 0.0, n, q)
    return TraceValue(complex(val[0]), float(err[0]))


# ---------------------------------------------------------------------------
# a-priori bounds


BOUND_PANELS = 16


def rho_lower_bound(mats, y_cut=None) -> np.ndarray:
    """Lower bound over z in F of ``cosh^2(d(theta^{-1} z, z) / 2)``.

    In the ``(x, u)`` chart this equals ``((u P(x) - c/u)^2 + (a + d)^2) / (4 det)``
    with ``P(x) = (a - d) x + b - c x^2``.  The x range is cut into panels on
    which the ranges of P and of ``u <= U(x)`` give a bound for the first
    square.  With ``y_cut`` upper triangular terms are bounded on the
    truncated domain ``u >= 1/y_cut``.
    """
    a, b, c, d, _ = term_coefficients(mats, 4)
    det = a * d - b * c
    edges = np.linspace(-0.5, 0.5, BOUND_PANELS + 1)
    x0, x1 = edges[:-1][None, :], edges[1:][None, :]
    a_, b_, c_, d_ = (v[:, None] for v in (a, b, c, d))
    p0 = (a_ - d_) * x0 + b_ - c_ * x0 ** 2
    p1 = (a_ - d_) * x1 + b_ - c_ * x1 ** 2
    safe_c = np.where(c_ == 0, 1.0, c_)
    xv = np.clip((a_ - d_) / (2 * safe_c), x0, x1)
    pv = np.where(c_ == 0, p0, (a_ - d_) * xv + b_ - c_ * xv ** 2)
    pmin = np.minimum(np.minimum(p0, p1), pv)
    pmax = np.maximum(np.maximum(p0, p1), pv)
    umax = 1.0 / np.sqrt(1.0 - np.maximum(x0 ** 2, x1 ** 2))
    pos = np.maximum(0.0, c_ / umax - umax * pmax)
    neg = np.maximum(0.0, -c_ / umax + umax * pmin)
    g = np.where(c_ > 0, pos, np.where(c_ < 0, neg, 0.0))
    if y_cut is not None:
        # u |P| with u >= 1/y_cut; only used for upper triangular terms
        pabs = np.where((pmin <= 0) & (pmax >= 0), 0.0, np.minimum(np.abs(pmin), np.abs(pmax)))
        g = np.where(c_ == 0, pabs / y_cut, g)
    gmin = g.min(axis=1)
    rho = (gmin ** 2 + (a + d) ** 2) / (4 * det)
    return np.maximum(rho, 1.0)


def term_bounds(mats, n: int, y_cut=None) -> np.ndarray:
    """Bound for the absolute trace (and Hilbert-Schmidt norm) of one term."""
    return c_n(n) * AREA_F * rho_lower_bound(mats, y_cut) ** (-n / 2)


# ---------------------------------------------------------------------------
# upper triangular families and their cusp part


@dataclass(frozen=True)
class TriangularFamily:
    """Members ``[[A, B], [0, D]]`` with multiplicity ``weights[B mod s]``."""

    A: int
    D: int
    period: int
    weights: tuple


def find_families(mats, mult, H: int):
    """Detect periodic upper triangular families in an enumerated set.

    Returns ``(families, member_mask)``.  A group with fixed diagonal is a
    family when its multiplicity pattern in B is periodic inside the window
    ``|B| <= H`` with a period of at most H/2.
    """
    mats = _as_rows(mats)
    mult = np.asarray(mult)
    tri = mats[:, 2] == 0
    member = np.zeros(len(mats), dtype=bool)
    fams = []
    if not tri.any():
        return fams, member
    idx = np.nonzero(tri)[0]
    keys = sorted({(int(mats[i, 0]), int(mats[i, 3])) for i in idx})
    for A, D in keys:
        sel = idx[(mats[idx, 0] == A) & (mats[idx, 3] == D)]
        w = np.zeros(2 * H + 1, dtype=np.int64)
        w[mats[sel, 1] + H] = mult[sel]
        period = None
        for s in range(1, H // 2 + 1):
            if np.array_equal(w[s:], w[:-s]):
                period = s
                break
        if period is None:
            continue
        weights = tuple(int(w[H + r]) for r in range(period))
        if not any(weights):
            continue
        fams.append(TriangularFamily(A, D, period, weights))
        member[sel] = True
    return fams, member


def family_cusp_integral(fam: TriangularFamily, n: int, y_cut: float, absolute: bool = False):
    """Sum over the whole family of the integral over ``Im z > y_cut`` of F.

    Uses ``sum_j (tau + j)^-n = (-2 pi i)^n/(n-1)! sum_m m^(n-1) e(m tau)``.
    With ``absolute`` a bound for the same quantity is returned instead.
    """
    a, d = fam.D, fam.A  # diagonal of the inverse
    s = fam.period
    det = fam.A * fam.D
    const = c_n(n) * (2j) ** n * det ** (n // 2) * s ** (-n) * (-2j * math.pi) ** n / (n - 1)
    total = 0.0 if absolute else 0j
    for m in range(1, 100000):
        beta = 2 * math.pi * m * (a + d) / s
        tail = special.gammaincc(n - 1, beta * y_cut) / beta ** (n - 1)
        if absolute:
            term = m ** (n - 1) * tail * sum(abs(w) for w in fam.weights)
        else:
            xarg = math.pi * m * (a - d) / s
            sinc = 1.0 if a == d else math.sin(xarg) / xarg
            # b = -B runs over -r mod s for the residues r of B
            phase = sum(w * np.exp(-2j * math.pi * m * r / s) for r, w in enumerate(fam.weights) if w)
            term = m ** (n - 1) * sinc * tail * phase
        total += term
        if abs(term) < 1e-30 * max(1.0, abs(total)) or tail == 0.0:
            break
    return abs(const) * total if absolute else const * total


# ---------------------------------------------------------------------------
# tail bound


TAIL_REFERENCE_HEIGHT = 48
TAIL_DECAY = 2


def family_tail_bound(fam: TriangularFamily, n: int, H: int, y_cut: float, block: int = 4096) -> float:
    """Sum of the term bounds of the family members with ``|B| > H``."""
    total = []
    start = H + 1
    w = np.asarray(fam.weights, dtype=float)
    while True:
        B = np.arange(start, start + block)
        rows = []
        for sgn in (1, -1):
            m = np.zeros((block, 4), dtype=np.int64)
            m[:, 0], m[:, 1], m[:, 3] = fam.A, sgn * B, fam.D
            rows.append(term_bounds(m, n, y_cut) * np.abs(w[(sgn * B) % fam.period]))
        chunk = rows[0] + rows[1]
        if not total:
            first = max(chunk.max(), 1e-300)
        total.extend(chunk.tolist())
        if chunk[-2:].max() < 1e-18 * first:
            break
        start += block
    return math.fsum(total)


def _tail_from_set(cset, n: int, H: int, y_cut: float, fams=None) -> float:
    """Tail estimate for the terms of height above H.

    Upper triangular families are bounded member by member.  For the other
    terms, shell sums of the term bounds on the fixed window ``(24, 48]``
    fix the constant K of an envelope ``K h^-2``, which is then summed beyond
    H.  The envelope is an empirical model of the shell decay, not a proof;
    since K does not depend on H the estimate is nonincreasing in H.
    """
    href = TAIL_REFERENCE_HEIGHT
    mats, mult, _ = prepare_terms(cset, max(H, href))
    if fams is None:
        fams, _ = find_families(mats, mult, max(H, href))
    fam_tail = math.fsum(family_tail_bound(f, n, H, y_cut) for f in fams)
    gen = (mats[:, 2] != 0) & (heights(mats) <= href)
    h = heights(mats[gen])
    b = term_bounds(mats[gen], n) * mult[gen]
    K = 0.0
    for hv in range(href // 2 + 1, href + 1):
        K = max(K, float(b[h == hv].sum()) * hv ** TAIL_DECAY)
    Hs = max(H, 1)
    # sum_{h > H} h^-2 < 1/H
    return fam_tail + K / Hs


def tail_bound(n: int, level, g: PElement, H: int, q: QuadratureSpec = QuadratureSpec()) -> float:
    n = check_weight(n)
    return _tail_from_set(right_coset(level, g), n, H, q.y_max)


# ---------------------------------------------------------------------------
# sums over coset sets


@dataclass
class SumDetail:
    terms_total: int = 0
    terms_used: int = 0
    excluded_negative: int = 0
    skipped_bound: float = 0.0
    quad_err: float = 0.0
    cusp_correction: complex = 0j
    tail_bound: float = 0.0
    families: int = 0

    def as_dict(self):
        return {"terms_total": self.terms_total, "terms_used": self.terms_used,
                "excluded_negative_det": self.excluded_negative,
                "skipped_bound": self.skipped_bound, "quad_err": self.quad_err,
                "cusp_correction": [self.cusp_correction.real, self.cusp_correction.imag],
                "tail_bound": self.tail_bound, "families": self.families}


def prepare_terms(cset, H: int):
    """Enumerate a term source (anything with ``enumerate(H) -> (mats, mult)``,
    e.g. a CosetSet) and split off negative-determinant members."""
    mats, mult = cset.enumerate(H)
    if len(mats):
        det = mats[:, 0] * mats[:, 3] - mats[:, 1] * mats[:, 2]
        pos = det > 0
    else:
        pos = np.zeros(0, dtype=bool)
    return mats[pos], mult[pos], int((~pos).sum())


def sum_over_set(n: int, cset: CosetSet, H: int, q: QuadratureSpec = QuadratureSpec(),
                 threads=None, chunk: int = 256, with_tail: bool = True) -> TraceValue:
    """``sum_{theta in cset, height <= H} mult(theta) Tr(P_L pi_n(theta) P_L)``."""
    n = check_weight(n)
    det_info = SumDetail()
    if H == 0:
        mats, mult, neg = base_points(cset)
    else:
        mats, mult, neg = prepare_terms(cset, H)
    det_info.terms_total = len(mats) + neg
    det_info.excluded_negative = neg
    fams, member = find_families(mats, mult, H) if H > 0 else ([], np.zeros(len(mats), bool))
    y_cut = q.y_max
    bounds = np.where(member, term_bounds(mats, n, y_cut), term_bounds(mats, n)) * mult if len(mats) else np.zeros(0)
    use = bounds > q.skip_tol
    det_info.skipped_bound = float(math.fsum(bounds[~use].tolist()))
    mats_u, mult_u, mem_u = mats[use], mult[use], member[use]
    det_info.terms_used = int(use.sum())
    ulo = np.where(mem_u, 1.0 / y_cut, 0.0)

    def work(span):
        lo, hi = span
        return integrate_terms(mats_u[lo:hi], ulo[lo:hi], n, q)

    vals, errs = [], []
    for v, e, _ in ordered_map(work, chunked(len(mats_u), chunk), threads):
        vals.append(v)
        errs.append(e)
    vals = np.concatenate(vals) if vals else np.zeros(0, complex)
    errs = np.concatenate(errs) if errs else np.zeros(0)
    total = fsum_complex(vals * mult_u)
    det_info.quad_err = float(math.fsum((errs * mult_u).tolist()))
    cusp = 0j
    for f in fams:
        cusp += family_cusp_integral(f, n, y_cut)
    det_info.cusp_correction = cusp
    det_info.families = len(fams)
    if with_tail and H > 0:
        det_info.tail_bound = _tail_from_set(cset, n, H, y_cut, fams)
    info = det_info.as_dict()
    # upper triangular members outside any detected family (window too small)
    info["unresolved_triangular"] = int(((mats[:, 2] == 0) & ~member).sum()) if len(mats) else 0
    err = det_info.quad_err + det_info.skipped_bound + det_info.tail_bound
    return TraceValue(total + cusp, err, info)


def base_points(cset: CosetSet):
    """Members ``A B`` of the pieces (the height-0 convention: base points only)."""
    from .arith_core import mul
    rows = {}
    for A, B in cset.pieces:
        g = mul(A, B)
        rows[g.entries] = None
    mats = np.array(sorted(rows), dtype=np.int64).reshape(-1, 4)
    mult = cset.multiplicity(mats) if len(mats) else np.zeros(0, np.int64)
    keep = mult > 0
    mats, mult = mats[keep], mult[keep]
    det = mats[:, 0] * mats[:, 3] - mats[:, 1] * mats[:, 2]
    return mats[det > 0], mult[det > 0], int((det <= 0).sum())


def sum_over_coset(n: int, level, g: PElement, H: int, q: QuadratureSpec = QuadratureSpec(),
                   threads=None) -> TraceValue:
    """Sum of ``Tr(P_L pi_n(theta) P_L)`` over ``theta`` in ``level * g`` up to height H."""
    return sum_over_set(n, right_coset(level, g), H, q, threads)


# ---------------------------------------------------------------------------
# symbol integral over the whole half-plane


def split_eigenvectors(sigma: PElement):
    """Eigenvalues and integer eigenvectors of a split hyperbolic element."""
    if sigma.det <= 0:
        raise NegativeDeterminant(f"{sigma!r}")
    a, b, c, d = sigma.entries
    t, det = a + d, sigma.det
    disc = t * t - 4 * det
    if disc <= 0:
        raise NonHyperbolic(f"{sigma!r} is elliptic or parabolic")
    r = math.isqrt(disc)
    if r * r != disc:
        raise NonHyperbolic(f"{sigma!r} has irrational fixed points; the horoball regularisation needs cusps")
    lam1, lam2 = (t + r) // 2, (t - r) // 2
    vecs = []
    for lam in (lam1, lam2):
        if b != 0:
            v = (b, lam - a)
        elif c != 0:
            v = (lam - d, c)
        else:
            v = (1, 0) if lam == a else (0, 1)
        g = math.gcd(*v)
        vecs.append((v[0] // g, v[1] // g))
    return (lam1, lam2), vecs


def symbol_integral_over_H(n: int, sigma: PElement, q: QuadratureSpec = QuadratureSpec()) -> TraceValue:
    """Integral of the diagonal kernel of ``pi_n(sigma) P_0`` over the upper
    half-plane minus horoballs at the two (rational) fixed points of sigma.

    Conjugating the fixed points to 0 and infinity by a rational matrix g,
    the integrand ``k(g z, g z)`` depends on ``arg z`` only; the radial
    integral between the horoballs is exact and the angular one is done by
    adaptive quadrature.  The result does not depend on the horoball sizes
    because the angular integral of the integrand vanishes.
    """
    n = check_weight(n)
    (l1, l2), (v1, v2) = split_eigenvectors(sigma)
    # columns: attracting fixed point to infinity, the other to 0
    g = np.array([[v1[0], v2[0]], [v1[1], v2[1]]], dtype=float)
    if np.linalg.det(g) < 0:
        g[:, 1] *= -1
    g /= math.sqrt(np.linalg.det(g))
    A, B, C, D = (float(v) for v in sigma.entries)
    det = A * D - B * C
    ia, ib, ic, id_ = D, -B, -C, A
    const = c_n(n) * (2j) ** n * det ** (n / 2)

    def f(phi):
        z = complex(math.cos(phi), math.sin(phi))
        w = (g[0, 0] * z + g[0, 1]) / (g[1, 0] * z + g[1, 1])
        y = w.imag
        Q = ia * w + ib - w.conjugate() * (ic * w + id_)
        # diagonal kernel times d nu_0, written in polar coordinates of z
        return const * (y / Q) ** n / math.sin(phi) ** 2

    def part(fn, weight):
        return integrate.quad(lambda t: fn(t) * weight(t), 0.0, math.pi, epsabs=q.abs_tol,
                              epsrel=q.rel_tol, limit=400)

    logw = lambda t: -2.0 * math.log(math.sin(t))
    one = lambda t: 1.0
    re, e1 = part(lambda t: f(t).real, logw)
    im, e2 = part(lambda t: f(t).imag, logw)
    r0, e3 = part(lambda t: f(t).real, one)
    i0, e4 = part(lambda t: f(t).imag, one)
    err = e1 + e2 + e3 + e4 + abs(complex(r0, i0))
    return TraceValue(complex(re, im), err, {"angular_integral": [r0, i0],
                                             "eigenvalues": [l1, l2]})
