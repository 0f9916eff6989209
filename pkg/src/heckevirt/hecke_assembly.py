"""Galerkin compressions of Hecke operators and character estimates.

The Galerkin model of ``L^2(F)`` works in the rescaled picture
``f -> y^(n/2) f`` where the measure becomes ``dx dy / y^2`` (``dx du`` in the
``u = 1/y`` chart).  Operators ``chi_F pi_n(theta) P_0 chi_F`` have range and
co-range inside ``chi_F`` times holomorphic functions, so the basis is built
from the holomorphic family ``y^(n/2) (z + ci)^(-n) w^k`` with the Cayley
variable ``w = (z - ci)/(z + ci)``, orthonormalised by an Arnoldi process in
the discrete inner product of a fixed node set on F.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arith_core import (CongruenceLevel, PElement, gamma_level, gamma_sigma, identity, inv,
                         principal_level)
from .cosets import (CosetSet, block_set, enumerate_det,
                     right_coset, right_coset_reps, left_coset, two_sided, trace_set)
from .dseries_kernel import (QuadratureSpec, TraceValue, check_weight, family_cusp_integral,
                             find_families, prepare_terms, split_eigenvectors, sum_over_set,
                             symbol_integral_over_H, term_bounds, term_coefficients,
                             _tail_from_set, ipow)
from .errors import IllConditioned, NontrivialStabilizer
from .parallel import chunked, ordered_map

DEFAULT_CENTER = 2.0
BREAKDOWN_TOL = 1e-12


# ---------------------------------------------------------------------------
# basis


@dataclass(frozen=True, eq=False)
class GalerkinBasis:
    n: int
    D: int
    x: np.ndarray
    u: np.ndarray
    weights: np.ndarray
    n_main: int  # nodes with Im z <= y_max come first
    funcs: np.ndarray  # (nodes, D), rescaled values y^(n/2) f(z)
    gram_residual: float
    center: float
    y_max: float
    coeffs: np.ndarray = field(repr=False)  # Arnoldi recurrence
    norms: np.ndarray = field(repr=False)

    @property
    def z(self):
        return self.x + 1j / self.u

    @property
    def n_nodes(self):
        return len(self.x)

    def evaluate(self, z) -> np.ndarray:
        """Rescaled basis values ``y^(n/2) f_k(z)`` at arbitrary points."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        c = self.center
        w = (z - 1j * c) / (z + 1j * c)
        out = np.empty((len(z), self.D), dtype=complex)
        out[:, 0] = z.imag ** (self.n / 2) * (z + 1j * c) ** (-self.n) / self.norms[0]
        for k in range(1, self.D):
            v = w * out[:, k - 1] - out[:, :k] @ self.coeffs[:k, k]
            out[:, k] = v / self.norms[k]
        return out

    def inner(self, f, g):
        return np.sum(np.conj(f) * g * self.weights)


def galerkin_nodes(q: QuadratureSpec):
    """Tensor Gauss nodes on F in the (x, u) chart, main part first then cusp."""
    gx, gw = np.polynomial.legendre.leggauss(q.galerkin_nx)
    g, w = np.polynomial.legendre.leggauss(q.galerkin_nu)
    gc, wc = np.polynomial.legendre.leggauss(q.galerkin_ncusp)
    lo = 1.0 / q.y_max
    main, cusp = ([], [], []), ([], [], [])
    for xi, wi in zip(gx / 2, gw / 2):
        top = 1.0 / math.sqrt(1.0 - xi * xi)
        edges = lo + (top - lo) * np.concatenate([[0.0], np.geomspace(0.1, 1.0, q.galerkin_panels)])
        for a, b in zip(edges[:-1], edges[1:]):
            main[0].extend([xi] * len(g))
            main[1].extend((a + b) / 2 + (b - a) / 2 * g)
            main[2].extend(wi * (b - a) / 2 * w)
        cusp[0].extend([xi] * len(gc))
        cusp[1].extend(lo / 2 + lo / 2 * gc)
        cusp[2].extend(wi * lo / 2 * wc)
    x = np.array(main[0] + cusp[0])
    u = np.array(main[1] + cusp[1])
    wt = np.array(main[2] + cusp[2])
    return x, u, wt, len(main[0])


def build_basis(n: int, D: int, q: QuadratureSpec = QuadratureSpec(),
                center: float = DEFAULT_CENTER) -> GalerkinBasis:
    """Orthonormal basis of ``D`` functions on F (Arnoldi with reorthogonalisation).

    The order of the construction is fixed, so the first ``k`` functions do
    not depend on ``D``.
    """
    n = check_weight(n)
    if D < 1:
        raise ValueError("D must be at least 1")
    x, u, wt, n_main = galerkin_nodes(q)
    if D > len(x):
        raise IllConditioned(f"D={D} exceeds the number of quadrature nodes {len(x)}")
    z = x + 1j / u
    y = 1.0 / u
    w = (z - 1j * center) / (z + 1j * center)

    def ip(f, g):
        return np.sum(np.conj(f) * g * wt)

    cols = []
    coeffs = np.zeros((D, D), dtype=complex)
    norms = np.zeros(D)
    v = y ** (n / 2) * (z + 1j * center) ** (-n)
    for k in range(D):
        if k:
            v = w * cols[-1]
        before = math.sqrt(ip(v, v).real)
        for _ in range(2):
            for j, qj in enumerate(cols):
                h = ip(qj, v)
                coeffs[j, k] += h
                v = v - h * qj
        nv = math.sqrt(ip(v, v).real)
        if nv <= BREAKDOWN_TOL * before:
            raise IllConditioned(f"dictionary degenerate at k={k} (ratio {nv / before:.2e})")
        norms[k] = nv
        cols.append(v / nv)
    G = np.array(cols).T
    gram = (G.conj().T * wt) @ G
    resid = float(np.linalg.norm(gram - np.eye(D)))
    return GalerkinBasis(n, D, x, u, wt, n_main, G, resid, center, q.y_max, coeffs, norms)


# ---------------------------------------------------------------------------
# compressed operators


@dataclass(frozen=True)
class CompressedOp:
    mat: np.ndarray
    err: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.mat)):
            raise FloatingPointError("non-finite entries in compressed operator")

    def __add__(self, other):
        return CompressedOp(self.mat + other.mat, self.err + other.err)

    def __matmul__(self, other):
        na = np.linalg.norm(self.mat, 2)
        nb = np.linalg.norm(other.mat, 2)
        return CompressedOp(self.mat @ other.mat,
                            self.err * (nb + other.err) + other.err * na)

    def scale(self, k):
        return CompressedOp(self.mat * k, self.err * abs(k), self.info)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    def adjoint(self):
        return CompressedOp(self.mat.conj().T, self.err)


def _kernel_block(basis: GalerkinBasis, rows: np.ndarray, member: np.ndarray, n: int) -> np.ndarray:
    """Sum over terms of the rescaled kernel ``C (sqrt(y_z y_w)/Q)^n`` on the
    node grid; members of upper triangular families only on the main block."""
    z = basis.z
    zb = np.conj(z)
    ry = np.sqrt(1.0 / basis.u)
    N, nm = len(z), basis.n_main
    S = np.zeros((N, N), dtype=complex)
    if len(rows) == 0:
        return S
    a, b, c, d, C = term_coefficients(rows, n)
    for t in range(len(rows)):
        k = nm if member[t] else N
        zz, zw, yy = z[:k], zb[:k], ry[:k]
        Q = (a[t] * zz + b[t])[:, None] - (c[t] * zz + d[t])[:, None] * zw[None, :]
        R = np.multiply.outer(yy, yy) / Q
        S[:k, :k] += C[t] * ipow(R, n)
    return S


_PHI_CACHE: dict = {}


def clear_cache():
    _PHI_CACHE.clear()


def _weighted(basis):
    return basis.funcs * basis.weights[:, None]


def _compress_kernel(basis, S):
    GW = _weighted(basis)
    return GW.conj().T @ S @ GW


def identity_defect(basis: GalerkinBasis) -> float:
    """Relative trace defect of the model on the identity term."""
    S = _kernel_block(basis, np.array([[1, 0, 0, 1]]), np.array([False]), basis.n)
    tr = np.trace(_compress_kernel(basis, S)).real
    exact = (basis.n - 1) / 12
    return abs(tr - exact) / exact


def compress_op(n: int, theta: PElement, basis: GalerkinBasis,
                q: QuadratureSpec = QuadratureSpec()) -> CompressedOp:
    """``mat[a, b] = <chi_F pi_n(theta) P_0 f_b, f_a>`` on the Galerkin basis."""
    n = check_weight(n)
    if n != basis.n:
        raise ValueError("basis weight mismatch")
    S = _kernel_block(basis, np.array([theta.entries]), np.array([False]), n)
    mat = _compress_kernel(basis, S)
    bound = float(term_bounds(np.array([theta.entries]), n)[0])
    return CompressedOp(mat, identity_defect(basis) * bound, {"terms": 1})


def _as_set(coset) -> CosetSet:
    if isinstance(coset, CosetSet):
        return coset
    level, g = coset
    return right_coset(level, g)


def phi_map(coset, H: int, basis: GalerkinBasis, q: QuadratureSpec = QuadratureSpec(),
            threads=None, chunk: int = 64) -> CompressedOp:
    """Compression of ``sum_{theta in coset, height <= H} P_L pi_n(theta) P_L``.

    ``coset`` is a CosetSet or a pair ``(level, g)`` standing for ``level g``.
    Terms below ``q.galerkin_skip_tol`` are dropped.  Members of periodic upper
    triangular families are restricted to ``Im z <= y_max``; their missing
    cusp part is added to the error.
    """
    cset = _as_set(coset)
    # the basis is a deterministic function of these parameters
    key = (cset.key(), H, basis.n, basis.D, basis.center, basis.y_max, basis.n_nodes, q)
    if key in _PHI_CACHE:
        return _PHI_CACHE[key][1]
    n = basis.n
    mats, mult, neg = prepare_terms(cset, H)
    fams, member = find_families(mats, mult, H) if len(mats) else ([], np.zeros(0, bool))
    bounds = (np.where(member, term_bounds(mats, n, q.y_max), term_bounds(mats, n)) * mult
              if len(mats) else np.zeros(0))
    use = bounds > q.galerkin_skip_tol
    rows, wts, mem = mats[use], mult[use], member[use]

    work = _weighted_work(basis, rows, mem, wts, n)
    total = np.zeros((basis.n_nodes, basis.n_nodes), dtype=complex)
    for S in ordered_map(work, chunked(len(rows), chunk), threads):
        total += S
    mat = _compress_kernel(basis, total)
    skipped = math.fsum(bounds[~use].tolist())
    tail = _tail_from_set(cset, n, H, q.y_max, fams) if H > 0 else 0.0
    cusp = math.fsum(float(family_cusp_integral(f, n, q.y_max, absolute=True)) for f in fams)
    l1 = math.fsum(bounds[use].tolist())
    disc = identity_defect(basis) * l1
    err = skipped + tail + cusp + disc
    info = {"terms_used": int(use.sum()), "terms_total": int(len(mats) + neg),
            "excluded_negative_det": neg, "skipped_bound": skipped, "tail_bound": tail,
            "cusp_bound": cusp, "discretisation": disc, "families": len(fams)}
    op = CompressedOp(mat, err, info)
    _PHI_CACHE[key] = (cset, op)
    return op


def _weighted_work(basis, rows, mem, wts, n):
    # multiplicities enter by repeating the term
    def work(span):
        lo, hi = span
        r = np.repeat(rows[lo:hi], wts[lo:hi], axis=0)
        m = np.repeat(mem[lo:hi], wts[lo:hi])
        return _kernel_block(basis, r, m, n)
    return work


def verify_phi_multiplicativity(sigma1: PElement, sigma2: PElement, H: int, basis: GalerkinBasis,
                                q: QuadratureSpec = QuadratureSpec(), level=None, threads=None) -> dict:
    """Residual of ``Phi(sigma1 K) Phi(K sigma2) = Phi(sigma1 K sigma2)``."""
    level = level or gamma_level(sigma1.p)
    a = phi_map(left_coset(level, sigma1), H, basis, q, threads)
    b = phi_map(right_coset(level, sigma2), H, basis, q, threads)
    c = phi_map(two_sided(level, sigma1, sigma2), H, basis, q, threads)
    prod = a @ b
    resid = float(np.linalg.norm(prod.mat - c.mat))
    return {"residual": resid, "bound": prod.err + c.err,
            "sigma1": list(sigma1.entries), "sigma2": list(sigma2.entries)}


# ---------------------------------------------------------------------------
# block Hecke matrices


NORMALIZATION_EXPONENT = 0.5


def unitary_normalization(sigma: PElement) -> float:
    """Factor ``p^(-m/2)`` taking raw compressed sums to unitary-normalised values."""
    return sigma.p ** (-NORMALIZATION_EXPONENT * sigma.det_exponent)


def coset_index(level: CongruenceLevel, sigma: PElement) -> int:
    """``[level : level ∩ sigma level sigma^-1]``, exact."""
    sub = gamma_sigma(level, inv(sigma))
    return sub.index_in_gamma // level.index_in_gamma


@dataclass(frozen=True, eq=False)
class BlockHeckeMatrix:
    level: CongruenceLevel
    reps: tuple
    blocks: dict
    sigma: PElement
    normalization: int
    scale: float

    @property
    def size(self):
        return len(self.reps)

    def full(self) -> np.ndarray:
        r = self.size
        return np.block([[self.blocks[i, j].mat for j in range(r)] for i in range(r)])

    @property
    def err(self) -> float:
        return math.fsum(b.err for b in self.blocks.values())

    def trace(self) -> TraceValue:
        """Raw trace (sum of the diagonal block traces)."""
        r = self.size
        val = sum(self.blocks[i, i].trace for i in range(r))
        return TraceValue(val, math.fsum(self.blocks[i, i].err for i in range(r)))

    def normalized_trace(self) -> TraceValue:
        return self.trace() * self.scale


def hecke_block_matrix(level: CongruenceLevel, sigma: PElement, H: int, basis: GalerkinBasis,
                       q: QuadratureSpec = QuadratureSpec(), threads=None) -> BlockHeckeMatrix:
    """Blocks ``(i, j) = Phi(s_i^-1 level sigma level s_j)``, raw (unnormalised)."""
    reps = right_coset_reps(level).reps
    r = len(reps)
    blocks = {}
    for i in range(r):
        for j in range(r):
            blocks[i, j] = phi_map(block_set(level, sigma, i, j), H, basis, q, threads)
    return BlockHeckeMatrix(level, tuple(reps), blocks, sigma, coset_index(level, sigma),
                            unitary_normalization(sigma))


def projection_residual(M: np.ndarray) -> float:
    return float(np.linalg.norm(M @ M - M) / np.linalg.norm(M))


def range_basis(Me: np.ndarray):
    """Orthonormal basis of the numerical range of an (almost) projection.

    For the Hermitian part M with ``r = ||M^2 - M||_2`` every eigenvalue
    satisfies ``|lam^2 - lam| <= r``, so for ``r < 1/4`` the cut at 1/2
    separates the eigenvalues near 1 from those near 0 unambiguously.
    """
    Hm = (Me + Me.conj().T) / 2
    r = float(np.linalg.norm(Hm @ Hm - Hm, 2))
    if r >= 0.25:
        raise IllConditioned(f"projection model not idempotent enough (residual {r:.3g})")
    ev, V = np.linalg.eigh(Hm)
    keep = ev > 0.5
    return V[:, keep], ev[keep]


def eigenvalues_on_range(Me: np.ndarray, Ms: np.ndarray) -> np.ndarray:
    V, _ = range_basis(Me)
    if V.shape[1] == 0:
        return np.zeros(0, dtype=complex)
    A = V.conj().T @ Ms @ V
    ev = np.linalg.eigvals(A)
    return ev[np.lexsort((ev.imag, ev.real))]


def hecke_eigenvalues(level: CongruenceLevel, sigma: PElement, H: int, basis: GalerkinBasis,
                      q: QuadratureSpec = QuadratureSpec(), threads=None) -> dict:
    """Normalised eigenvalues of the sigma Hecke matrix on the invariant range."""
    Pe = hecke_block_matrix(level, identity(level.p), H, basis, q, threads)
    Ps = hecke_block_matrix(level, sigma, H, basis, q, threads)
    Me, Ms = Pe.full(), Ps.full()
    ev = eigenvalues_on_range(Me, Ms) * Ps.scale
    return {"eigenvalues": ev, "rank": len(ev), "idempotency_residual": projection_residual(Me),
            "err": (Pe.err + Ps.err), "normalization": Ps.normalization,
            "trace": Ps.trace(), "projection": Pe, "matrix": Ps}


def hecke_trace(n: int, level: CongruenceLevel, sigma: PElement, H: int,
                q: QuadratureSpec = QuadratureSpec(), threads=None) -> TraceValue:
    """Unitary-normalised trace ``sum_i sum_{theta in s_i^-1 level sigma level s_i} Tr(...)``
    from scalar traces only."""
    raw = sum_over_set(n, trace_set(level, sigma), H, q, threads)
    k = unitary_normalization(sigma)
    return TraceValue(raw.value * k, raw.err * k, raw.info)


def invariant_scalar_product(h1, h2, level: CongruenceLevel, H: int, basis: GalerkinBasis,
                             q: QuadratureSpec = QuadratureSpec(), threads=None) -> TraceValue:
    """``<P h1, h2>`` where P is the model of the level-invariant projection."""
    P = phi_map((level, identity(level.p)), H, basis, q, threads)
    h1 = np.asarray(h1, dtype=complex)
    h2 = np.asarray(h2, dtype=complex)
    val = complex(np.vdot(h2, P.mat @ h1))
    return TraceValue(val, P.err * np.linalg.norm(h1) * np.linalg.norm(h2))


# ---------------------------------------------------------------------------
# characters


def _split_data(sigma: PElement):
    (l1, l2), (v1, v2) = split_eigenvectors(sigma)
    return l1, l2, v1, v2


@dataclass(frozen=True, eq=False)
class ConjugacyClassSet:
    """Gamma-conjugates ``gamma sigma gamma^-1`` of a split hyperbolic sigma."""

    sigma: PElement

    def key(self):
        return ("class", self.sigma.entries, self.sigma.p)

    def enumerate(self, H: int):
        s = self.sigma
        l1, l2, v1, v2 = _split_data(s)
        t = l1 + l2
        cand = enumerate_det(s.det, H)
        tr = cand[:, 0] + cand[:, 3]
        cand = cand[np.abs(tr) == abs(t)]
        flip = np.where(cand[:, 0] + cand[:, 3] == t, 1, -1)[:, None]
        m = cand * flip
        ok = _conjugate_mask(m, (l1, l2), v1, v2)
        mats = cand[ok]
        return mats, np.ones(len(mats), dtype=np.int64)


def _eigvec(m, lam):
    a, b, c, d = (m[:, i] for i in range(4))
    x = np.where(b != 0, b, np.where(c != 0, lam - d, np.where(a == lam, 1, 0)))
    y = np.where(b != 0, lam - a, np.where(c != 0, c, np.where(a == lam, 0, 1)))
    g = np.gcd(x, y)
    g = np.where(g == 0, 1, g)
    return x // g, y // g


def _conjugate_mask(m, lams, v1, v2):
    """Exact SL2(Z)-conjugacy to sigma via primitive eigenvector frames.

    ``theta = g sigma g^-1`` forces ``g v_i = ±w_i`` for the primitive
    eigenvectors, so ``g = P_theta diag(1, beta) P_sigma^-1`` with
    ``beta = ±1`` chosen to make ``det g = 1``; it remains to test
    integrality.
    """
    x1, y1 = _eigvec(m, lams[0])
    x2, y2 = _eigvec(m, lams[1])
    dt = x1 * y2 - x2 * y1
    ds = v1[0] * v2[1] - v2[0] * v1[1]
    ok = np.abs(dt) == abs(ds)
    beta = np.where(dt != 0, ds // np.where(dt == 0, 1, dt), 1)
    # adj(P_sigma) = [[s22, -s12], [-s21, s11]] with columns v1, v2
    s11, s12, s21, s22 = v1[0], v2[0], v1[1], v2[1]
    # P_theta diag(1, beta)
    p11, p12, p21, p22 = x1, beta * x2, y1, beta * y2
    g11 = p11 * s22 - p12 * s21
    g12 = -p11 * s12 + p12 * s11
    g21 = p21 * s22 - p22 * s21
    g22 = -p21 * s12 + p22 * s11
    for g in (g11, g12, g21, g22):
        ok &= g % ds == 0
    return ok


def stabilizer_check(sigma: PElement, H: int = 30):
    """Raise if a nontrivial element of the height-H ball of Gamma commutes with sigma."""
    gam = enumerate_det(1, H)
    a, b, c, d = sigma.entries
    A, B, C, D = (gam[:, i] for i in range(4))
    # gamma sigma and sigma gamma must agree up to sign
    l = np.stack([A * a + B * c, A * b + B * d, C * a + D * c, C * b + D * d], 1)
    r = np.stack([a * A + b * C, a * B + b * D, c * A + d * C, c * B + d * D], 1)
    same = np.all(l == r, axis=1) | np.all(l == -r, axis=1)
    nontriv = ~((A == 1) & (B == 0) & (C == 0) & (D == 1))
    hits = gam[same & nontriv]
    if len(hits):
        raise NontrivialStabilizer(f"{sigma!r} commutes with {hits[0].tolist()}")
    return True


@dataclass(frozen=True)
class CharacterEstimate:
    sigma: PElement
    levels: tuple
    values: tuple
    prefactors: tuple
    double_sums: tuple
    class_multiplicities: tuple
    extrapolated: TraceValue | None
    ball_sum: TraceValue
    symbol_integral: TraceValue

    def stabilized_prefactor(self):
        if len(self.prefactors) >= 2 and self.prefactors[-1] == self.prefactors[-2]:
            return self.prefactors[-1]
        return None


def class_ball_sum(n: int, sigma: PElement, H: int, q: QuadratureSpec = QuadratureSpec(),
                   threads=None) -> TraceValue:
    """``sum_{gamma} Tr(P_L pi_n(gamma sigma gamma^-1) P_L)`` over conjugates of height <= H."""
    return sum_over_set(n, ConjugacyClassSet(sigma), H, q, threads)


def character_estimate(sigma: PElement, k_max: int, n: int, H: int,
                       q: QuadratureSpec = QuadratureSpec(), threads=None,
                       level_height=None, sum_k_max=None) -> CharacterEstimate:
    """Per-level character values along ``Gamma(p^k)``, with two cross-checks.

    Level k contributes ``sum_i sum_{theta in s_i^-1 G_k sigma G_k s_i} Tr(...)``
    divided by the exact index ``[G_k : (G_k)_sigma]``.  Prefactors and the
    multiplicity of sigma itself in the level-k set are exact for every
    ``k <= k_max``; the numerical sums are done for ``k <= sum_k_max``
    (default k_max) at height ``level_height`` (default H).
    """
    n = check_weight(n)
    stabilizer_check(sigma)
    levels, values, prefactors, sums, mults = [], [], [], [], []
    hl = H if level_height is None else level_height
    kmax_sum = k_max if sum_k_max is None else sum_k_max
    for k in range(1, k_max + 1):
        lev = principal_level(sigma.p, k)
        tset = trace_set(lev, sigma)
        levels.append(lev)
        prefactors.append(coset_index(lev, sigma))
        mults.append(int(tset.multiplicity(np.array([sigma.entries], dtype=np.int64))[0]))
        if k <= kmax_sum:
            s = sum_over_set(n, tset, hl, q, threads)
            sums.append(s)
            values.append(TraceValue(s.value / prefactors[-1], s.err / prefactors[-1], s.info))
    extrap = None
    if len(values) >= 2:
        a, b = values[-2], values[-1]
        if abs(a.value - b.value) <= a.err + b.err:
            extrap = b
    ball = class_ball_sum(n, sigma, H, q, threads)
    sym = symbol_integral_over_H(n, sigma, q)
    return CharacterEstimate(sigma, tuple(levels), tuple(values), tuple(prefactors),
                             tuple(sums), tuple(mults), extrap, ball, sym)
