"""Independent reference computations used by the tests.

Nothing here imports the package: these are the classical formulas the
numerical results are checked against.
"""

from fractions import Fraction
from math import gcd, isqrt


def delta_coefficients(N):
    """tau(1..N) from the product q prod (1 - q^k)^24, in exact integers."""
    poly = [0] * (N + 1)
    poly[0] = 1
    for k in range(1, N + 1):
        for _ in range(24):
            for i in range(N, k - 1, -1):
                poly[i] -= poly[i - k]
    # Delta = q * poly
    return {n: poly[n - 1] for n in range(1, N + 1)}


def tau(n):
    return delta_coefficients(n)[n]


def hecke_on_q_expansion(coeffs, p, k, n_terms):
    """Coefficients of T_p f for f = sum a(n) q^n of weight k (level 1)."""
    out = {}
    for n in range(1, n_terms + 1):
        v = coeffs[p * n]
        if n % p == 0:
            v += p ** (k - 1) * coeffs[n // p]
        out[n] = v
    return out


def dim_cusp_forms(k, N=1):
    """dim S_k(Gamma_0(N)) for even k >= 4 and N in {1} or N prime."""
    if N == 1:
        index, nu2, nu3, cusps = 1, 1, 1, 1
    else:
        p = N
        index = p + 1
        nu2 = 1 + legendre(-1, p) if p != 2 else 1
        nu3 = 1 + legendre(-3, p) if p != 3 else 1
        cusps = 2
    g = 1 + Fraction(index, 12) - Fraction(nu2, 4) - Fraction(nu3, 3) - Fraction(cusps, 2)
    d = (k - 1) * (g - 1) + (Fraction(k, 2) - 1) * cusps + nu2 * (k // 4) + nu3 * (k // 3)
    assert d.denominator == 1
    return int(d)


def legendre(a, p):
    r = pow(a % p, (p - 1) // 2, p)
    return -1 if r == p - 1 else r


def hurwitz_class_number(N):
    """H(N) by counting reduced positive definite forms of discriminant -N."""
    if N == 0:
        return Fraction(-1, 12)
    if N % 4 in (1, 2):
        return Fraction(0)
    total = Fraction(0)
    D = -N
    a = 1
    while 3 * a * a <= N:
        for b in range(-a + 1, a + 1):
            if (b * b - D) % (4 * a):
                continue
            c = (b * b - D) // (4 * a)
            if c < a or (c == a and b < 0):
                continue
            if a == b == 0:
                continue
            w = Fraction(1)
            if a == c and b == 0:
                w = Fraction(1, 2)
            elif a == b == c:
                w = Fraction(1, 3)
            total += w
        a += 1
    return total


def eichler_selberg_trace(n, k):
    """Trace of T_n on S_k(SL2(Z))."""
    total = Fraction(0)
    t = 0
    while t * t <= 4 * n:
        for s in ((t, -t) if t else (0,)):
            # P_k(s, n) = (r^(k-1) - rbar^(k-1)) / (r - rbar)
            a, b = 0, 1
            for _ in range(k - 2):
                a, b = b, s * b - n * a
            total += b * hurwitz_class_number(4 * n - s * s)
        t += 1
    total = -total / 2
    for d in range(1, n + 1):
        if n % d == 0:
            total -= Fraction(min(d, n // d) ** (k - 1), 2)
    return total


def hermite_list(m, p):
    """All [[a, b], [0, d]] with a d = p^m, 0 <= b < d, gcd(a, b, d) = 1."""
    out = []
    for i in range(m + 1):
        a, d = p ** i, p ** (m - i)
        for b in range(d):
            if gcd(gcd(a, b), d) == 1:
                out.append((a, b, 0, d))
    return out


def harish_chandra_split(n, lam):
    """Closed form of the regularised symbol integral for eigenvalue ratio lam.

    Equals minus the discrete series character at the hyperbolic element
    with eigenvalues lam^(1/2), lam^(-1/2): ``-lam^(-(n-1)/2) / (lam^(1/2) - lam^(-1/2))``.
    """
    return -lam ** (-(n - 1) / 2) / (lam ** 0.5 - lam ** -0.5)


def psl2_mod_order(N):
    """|PSL2(Z/N)| for N a prime power, by brute force."""
    seen = set()
    for a in range(N):
        for b in range(N):
            for c in range(N):
                for d in range(N):
                    if (a * d - b * c) % N == 1:
                        key = min((a, b, c, d), tuple((-v) % N for v in (a, b, c, d)))
                        seen.add(key)
    return len(seen)


def is_square(n):
    return n >= 0 and isqrt(n) ** 2 == n
