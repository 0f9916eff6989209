"""Command line front end.

Every command prints one JSON document (``"schema": 1``).  Complex numbers
are ``[re, im]`` pairs and matrices are row-major.  Exit codes: 0 ok,
2 invalid configuration, 3 enumeration budget exceeded, 4 a verification
check failed, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import __version__
from .arith_core import (PElement, gamma_level, identity, is_prime, normalize, parse_level)
from .cosets import (HeckeElement, coset_identity_check, double_coset_decomp,
                     double_coset_transversal, hecke_product, regular_rep_matrix,
                     right_coset_reps)
from .dseries_kernel import QuadratureSpec, trace_PL_pi_PL
from .errors import (BadDenominator, BudgetExceeded, HeckeVirtError, IllConditioned,
                     NegativeDeterminant, NonConvergence, NonHyperbolic, NontrivialStabilizer,
                     NotInGroup, QuadratureFailure, SingularMatrix)
from .hecke_assembly import (build_basis, character_estimate, hecke_block_matrix,
                             hecke_eigenvalues, hecke_trace, phi_map, projection_residual,
                             unitary_normalization, verify_phi_multiplicativity)
from .parallel import set_default_threads

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_VERIFY, EXIT_NUMERIC = 0, 2, 3, 4, 5
PROJECTION_BUDGET = 2e-2
MULTIPLICATIVITY_BUDGET = 2e-2


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    p: int = 2
    n: int = 12
    height: int = 200
    quad_rel_tol: float = 1e-9
    y_max: float = 10.0
    galerkin_dim: int = 64
    level: str = "gamma"
    sigma: str | None = None
    out: str | None = None
    threads: int | None = None

    def validate(self):
        if not is_prime(self.p):
            raise ConfigError(f"--p must be prime, got {self.p}")
        if self.n < 4 or self.n % 2:
            raise ConfigError(f"--n must be an even integer >= 4, got {self.n}")
        if self.height < 0:
            raise ConfigError("--height must be nonnegative")
        if not 0 < self.quad_rel_tol < 1:
            raise ConfigError("--quad-rel-tol must lie in (0, 1)")
        if not self.y_max >= 2:
            raise ConfigError("--y-max must be at least 2")
        if self.galerkin_dim < 1:
            raise ConfigError("--galerkin-dim must be at least 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        self.level_obj()
        self.sigma_obj()
        return self

    def level_obj(self):
        try:
            return parse_level(self.level, self.p)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad --level {self.level!r}: {exc}") from None

    def sigma_obj(self) -> PElement:
        if self.sigma is None or self.sigma.strip().lower() in ("e", "identity", "id"):
            return identity(self.p)
        try:
            vals = [Fraction(v.strip()) for v in self.sigma.split(",")]
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"--sigma must be 'a,b,c,d' or 'identity', got {self.sigma!r}") from None
        if len(vals) != 4:
            raise ConfigError("--sigma needs exactly four entries")
        try:
            g = normalize([vals[:2], vals[2:]], self.p)
        except (SingularMatrix, NotInGroup, BadDenominator) as exc:
            raise ConfigError(f"bad --sigma: {exc}") from None
        if g.det < 0:
            raise ConfigError(f"--sigma {self.sigma} has no representative with positive determinant")
        return g

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(y_max=self.y_max, rel_tol=self.quad_rel_tol)


# ---------------------------------------------------------------------------
# JSON helpers


def cnum(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def cmat(m) -> list:
    return [[cnum(v) for v in row] for row in np.asarray(m)]


def tv(t) -> dict:
    return {"value": cnum(t.value), "err": float(t.err)}


def mat_json(g: PElement) -> list:
    a, b, c, d = g.entries
    return [[a, b], [c, d]]


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return cnum(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# commands


def cmd_cosets(cfg: RunConfig) -> dict:
    level = cfg.level_obj()
    reps = right_coset_reps(level).reps
    out = {"level": level.label, "index": level.index_in_gamma, "exact": True,
           "transversal": [mat_json(r) for r in reps]}
    if cfg.sigma is not None:
        sigma = cfg.sigma_obj()
        if level.index_in_gamma == 1:
            dc = double_coset_decomp(sigma)
            cos = [mat_json(r) for r in dc.right_reps]
        else:
            cos = [mat_json(sigma * r) for r in double_coset_transversal(level, sigma)]
        out.update({"sigma": mat_json(sigma), "degree": len(cos), "double_coset_reps": cos})
    return out


def parse_hecke_label(label: str, p: int) -> HeckeElement:
    s = label.strip()
    if s.lower() in ("e", "[gamma]", "gamma", "t0", "1"):
        return HeckeElement.T(0, p)
    if s.lower() == "tp":
        return HeckeElement.T(1, p)
    if s.lower() == "tp2":
        return HeckeElement.T(2, p)
    if s[:1] in "Tt" and s[1:].isdigit():
        return HeckeElement.T(int(s[1:]), p)
    raise ConfigError(f"bad Hecke label {label!r}; use e, Tp, Tp2 or T<m>")


def cmd_hecke_mul(cfg: RunConfig, a_label: str, b_label: str) -> dict:
    a = parse_hecke_label(a_label, cfg.p)
    b = parse_hecke_label(b_label, cfg.p)
    prod = hecke_product(a, b)
    terms = [{"m": m, "coeff": c} for m, c in sorted(prod.as_dict().items(), reverse=True)]
    return {"p": cfg.p, "a": a_label, "b": b_label, "terms": terms, "exact": True}


def cmd_trace(cfg: RunConfig) -> dict:
    level, sigma = cfg.level_obj(), cfg.sigma_obj()
    val = hecke_trace(cfg.n, level, sigma, cfg.height, cfg.quadrature())
    info = val.info
    factor = unitary_normalization(sigma)
    out = {"level": level.label, "sigma": mat_json(sigma), "n": cfg.n, "height": cfg.height,
           "value": cnum(val.value), "err": float(val.err),
           "terms_used": int(info.get("terms_used", 0)),
           "tail_bound": float(info.get("tail_bound", 0.0)) * factor,
           "normalization": {"factor": factor, "exact": False}}
    extra = {k: v for k, v in info.items() if k not in ("terms_used", "tail_bound")}
    out["details"] = extra
    return out


def cmd_matrix(cfg: RunConfig) -> dict:
    level, sigma = cfg.level_obj(), cfg.sigma_obj()
    q = cfg.quadrature()
    basis = build_basis(cfg.n, cfg.galerkin_dim, q)
    res = hecke_eigenvalues(level, sigma, cfg.height, basis, q)
    Ps, Pe = res["matrix"], res["projection"]
    blocks = [{"i": i, "j": j, "mat": cmat(Ps.blocks[i, j].mat), "err": float(Ps.blocks[i, j].err)}
              for i in range(Ps.size) for j in range(Ps.size)]
    return {"level": level.label, "sigma": mat_json(sigma), "n": cfg.n, "height": cfg.height,
            "galerkin_dim": cfg.galerkin_dim, "gram_residual": basis.gram_residual,
            "normalization": {"index": Ps.normalization, "exact": True},
            "unitary_factor": {"value": Ps.scale, "exact": False},
            "blocks": blocks,
            "idempotency_residual": {"value": res["idempotency_residual"], "err": float(Pe.err)},
            "eigenvalues_on_range": {"values": [cnum(v) for v in res["eigenvalues"]],
                                     "err": float(res["err"]), "rank": res["rank"]},
            "trace": tv(Ps.normalized_trace())}


def cmd_character(cfg: RunConfig, k_max: int = 4, level_height: int = 60, sum_k_max: int = 3) -> dict:
    sigma = cfg.sigma_obj() if cfg.sigma is not None else normalize([[1, 0], [0, cfg.p]], cfg.p)
    q = cfg.quadrature()
    est = character_estimate(sigma, k_max, cfg.n, cfg.height, q, level_height=level_height,
                             sum_k_max=sum_k_max)
    per = []
    for k in range(1, k_max + 1):
        row = {"k": k, "prefactor": est.prefactors[k - 1],
               "class_multiplicity": est.class_multiplicities[k - 1], "exact": True}
        if k <= len(est.values):
            row.update({"sum": cnum(est.double_sums[k - 1].value), "value": cnum(est.values[k - 1].value),
                        "err": float(est.values[k - 1].err)})
        per.append(row)
    pref = est.stabilized_prefactor()
    ball, sym = est.ball_sum, est.symbol_integral
    rel = abs(ball.value - sym.value) / abs(sym.value)
    return {"sigma": mat_json(sigma), "n": cfg.n, "height": cfg.height, "level_height": level_height,
            "per_level": per,
            "stabilized_prefactor": pref,
            "extrapolated": None if est.extrapolated is None else tv(est.extrapolated),
            "symbol_integral_check": {"symbol_integral": tv(sym), "ball_sum": tv(ball),
                                      "relative_difference": rel, "budget": 0.02, "pass": bool(rel <= 0.02)}}


def _check(name, residual, budget, **extra):
    return {"name": name, "residual": float(residual), "budget": float(budget),
            "pass": bool(residual <= budget), **extra}


def cmd_verify(cfg: RunConfig) -> dict:
    p, n, H = cfg.p, cfg.n, cfg.height
    q = cfg.quadrature()
    checks = []
    # exact algebra
    T = lambda m: HeckeElement.T(m, p)
    lhs1, rhs1 = hecke_product(T(1), T(1)), T(2) + (p + 1) * T(0)
    lhs2, rhs2 = hecke_product(T(1), T(2)), T(3) + p * T(1)
    checks.append(_check("hecke_relation_Tp_Tp", 0 if lhs1.as_dict() == rhs1.as_dict() else 1, 0, exact=True))
    checks.append(_check("hecke_relation_Tp_Tp2", 0 if lhs2.as_dict() == rhs2.as_dict() else 1, 0, exact=True))
    rr = {m: regular_rep_matrix(T(m), 3) for m in (0, 1, 2, 3)}
    inter = rr[1].interior
    prod = (rr[1].matrix @ rr[1].matrix)[inter] - (rr[2].matrix + (p + 1) * rr[0].matrix)[inter]
    checks.append(_check("regular_rep_interior", abs(prod).sum(), 0, exact=True))
    sigma_p = normalize([[1, 0], [0, p]], p)
    rep = coset_identity_check(sigma_p)
    checks.append(_check("coset_identity", 0 if rep.ok else 1, 0, exact=True))
    # calibration
    tr_e = trace_PL_pi_PL(n, identity(p), q)
    checks.append(_check("identity_trace", abs(tr_e.value - (n - 1) / 12), max(1e-6, tr_e.err)))
    # projections and multiplicativity
    basis = build_basis(n, cfg.galerkin_dim, q)
    G = gamma_level(p)
    Pe = phi_map((G, identity(p)), H, basis, q)
    checks.append(_check("idempotency", projection_residual(Pe.mat), PROJECTION_BUDGET, err=Pe.err))
    T1 = normalize([[1, 1], [0, 1]], p)
    S = normalize([[0, -1], [1, 0]], p)
    gens = [("e", identity(p)), ("T", T1), ("S", S), ("diag(1,p)", sigma_p)]
    for n1, s1 in gens:
        for n2, s2 in gens:
            r = verify_phi_multiplicativity(s1, s2, H, basis, q)
            checks.append(_check(f"multiplicativity[{n1},{n2}]", r["residual"], MULTIPLICATIVITY_BUDGET,
                                 err=r["bound"]))
    # scalar trace against assembled matrix at level Gamma_0(p)
    L0 = parse_level(f"gamma0:{p}^1", p)
    M = hecke_block_matrix(L0, sigma_p, H, basis, q)
    mtr = M.normalized_trace()
    st = hecke_trace(n, L0, sigma_p, H, q)
    checks.append(_check("trace_vs_matrix", abs(mtr.value - st.value), mtr.err + st.err))
    return {"p": p, "n": n, "height": H, "galerkin_dim": cfg.galerkin_dim,
            "checks": checks, "all_pass": all(c["pass"] for c in checks)}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=int, default=2, help="prime p (default 2)")
    common.add_argument("--n", type=int, default=12, help="even weight >= 4 (default 12)")
    common.add_argument("--height", type=int, default=200, help="height bound H (default 200)")
    common.add_argument("--quad-rel-tol", type=float, default=1e-9)
    common.add_argument("--y-max", type=float, default=10.0)
    common.add_argument("--galerkin-dim", type=int, default=64)
    common.add_argument("--level", default="gamma", help="gamma | gamma0:p^k | principal:p^k")
    common.add_argument("--sigma", default=None, help="'a,b,c,d' or 'identity'")
    common.add_argument("--out", default=None, help="write JSON here instead of stdout")
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (fallback: $HECKE_VIRT_THREADS, then 1)")
    parser = argparse.ArgumentParser(prog="heckevirt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("cosets", parents=[common], help="coset representatives")
    hm = sub.add_parser("hecke-mul", parents=[common], help="product in the Hecke algebra")
    hm.add_argument("a")
    hm.add_argument("b")
    sub.add_parser("trace", parents=[common], help="Hecke trace from scalar traces")
    sub.add_parser("matrix", parents=[common], help="block Hecke matrix and eigenvalues")
    ch = sub.add_parser("character", parents=[common], help="character estimate")
    ch.add_argument("--k-max", type=int, default=4)
    ch.add_argument("--sum-k-max", type=int, default=3)
    ch.add_argument("--level-height", type=int, default=60)
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return parser


def _config(args) -> RunConfig:
    return RunConfig(p=args.p, n=args.n, height=args.height, quad_rel_tol=args.quad_rel_tol,
                     y_max=args.y_max, galerkin_dim=args.galerkin_dim, level=args.level,
                     sigma=args.sigma, out=args.out, threads=args.threads).validate()


def dumps(doc: dict) -> str:
    return json.dumps(_clean(doc), separators=(", ", ": ")) + "\n"


def _flatten(doc, prefix=""):
    for key, val in doc.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            yield from _flatten(val, name + ".")
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            for i, item in enumerate(val):
                yield from _flatten(item, f"{name}[{i}].")
        else:
            yield name, val


def table(doc: dict) -> str:
    """Two-column text rendering; long matrices are summarised by shape."""
    rows = []
    for name, val in _flatten(_clean(doc)):
        if isinstance(val, list) and np.asarray(val, dtype=object).ndim >= 3:
            val = f"<array {'x'.join(map(str, np.shape(val)))}>"
        rows.append((name, json.dumps(val) if not isinstance(val, str) else val))
    width = max(len(r[0]) for r in rows)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def run(argv=None):
    """Parse and execute; returns ``(exit_code, json_text, out_path)``."""
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    set_default_threads(cfg.threads)
    try:
        if args.command == "cosets":
            doc = cmd_cosets(cfg)
        elif args.command == "hecke-mul":
            doc = cmd_hecke_mul(cfg, args.a, args.b)
        elif args.command == "trace":
            doc = cmd_trace(cfg)
        elif args.command == "matrix":
            doc = cmd_matrix(cfg)
        elif args.command == "character":
            if args.k_max < 1 or args.sum_k_max < 0 or args.level_height < 1:
                raise ConfigError("--k-max and --level-height must be positive")
            doc = cmd_character(cfg, args.k_max, args.level_height, min(args.sum_k_max, args.k_max))
        else:
            doc = cmd_verify(cfg)
    finally:
        set_default_threads(None)
    doc = {"schema": SCHEMA, "command": args.command, **doc}
    code = EXIT_OK
    if args.command == "verify" and not doc["all_pass"]:
        code = EXIT_VERIFY
    text = dumps(doc) if args.format == "json" else table(doc)
    return code, text, cfg.out


def main(argv=None) -> int:
    try:
        code, text, path = run(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonHyperbolic, NontrivialStabilizer, NegativeDeterminant, NotInGroup,
            BadDenominator, SingularMatrix, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"error: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (QuadratureFailure, IllConditioned, NonConvergence, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HeckeVirtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
