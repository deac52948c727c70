"""Command-line entry point: ``toric-solitons <command> POLYTOPE [options]``.

POLYTOPE is a JSON file {"name", "dim", "facet_normals"} or a catalog name
(P1, P1xP1, P2, dP6, Bl1P2).  Exit codes: 0 ok, 1 invalid polytope,
2 numerical non-convergence, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import balance as bl
from . import measures as ms
from . import metric as mt
from . import polytope as pt
from . import qfunctionals as qf
from . import vectorfield as vf
from .quadrature import QuadratureNotConverged

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_USAGE = 0, 1, 2, 64

SCHEMAS = {
    "validate": "stdout JSON: {name, dim, facet_normals, vertices, volume, N_1, symmetries}",
    "weights": "stdout CSV: x1..xn, one lattice point of kP per row (lexicographic)",
    "dh-moments": "stdout CSV: k, multi_index, spectral_moment, dh_moment, abs_error",
    "solve-vk": "stdout JSON (one level): {k, V_k, F_k_min, futaki_residual, V_KS, distance}; "
                "several levels: CSV k, V_k_i.., V_KS_i.., distance, futaki_residual, F_k_min, "
                "quantization_error",
    "futaki-expansion": "stdout JSON: {levels, xi_V, xi_W, coefficients} with coefficients of "
                        "k^(n+1) .. k^0 (exact rationals as strings when available)",
    "balance": "stdout JSON: {k, V_k, iterations, evaluations, final_residual, converged, damping, "
               "method, residuals, ding, ding_nonincreasing}; with --out also H_k.csv "
               "(a1.., H, log_H) and phi_k.csv (t1.., phi, dphi_1..)",
    "convergence": "stdout CSV: k, V_k_i.., iterations, residual, ding_vks, cauchy, converged",
    "functional-report": "stdout CSV: k, functional, quantized, continuous, error",
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    polytope: str
    levels: list
    tol: float
    max_iter: int
    damping: float
    grid: str | None
    out: Path | None

    def check(self):
        if any(k < 1 for k in self.levels):
            raise UsageError("levels must be >= 1")
        if not 0 < self.tol <= 1e-2:
            raise UsageError("--tol must lie in (0, 1e-2]")
        if not 0 < self.damping <= 1:
            raise UsageError("--damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise UsageError("--max-iter must be positive")
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            if not os.access(self.out, os.W_OK):
                raise UsageError(f"output directory {self.out} is not writable")
        if self.grid is not None:
            try:
                lo, hi, npts = self.grid.split(",")
                if float(lo) >= float(hi) or int(npts) < 2:
                    raise ValueError
            except ValueError:
                raise UsageError("--grid expects 'min,max,npts' with min < max, npts >= 2") from None


def parse_levels(text: str) -> list[int]:
    """'a..b' or a comma-separated list."""
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse levels {text!r}") from None


def parse_vector(text: str | None, dim: int):
    if text is None:
        return None
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse vector {text!r}") from None
    if v.shape != (dim,):
        raise UsageError(f"vector {text!r} must have {dim} components")
    return v


def build_parser() -> Parser:
    epilog = "output schemas:\n" + "\n".join(f"  {k}: {v}" for k, v in SCHEMAS.items())
    p = Parser(prog="toric-solitons", description=__doc__, epilog=epilog,
               formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", parser_class=Parser)
    for name, schema in SCHEMAS.items():
        s = sub.add_parser(name, description=f"Output schema. {schema}")
        s.add_argument("polytope", help="polytope JSON file or catalog name")
        if name != "validate":
            s.add_argument("--level", type=int, help="single level k")
            s.add_argument("--levels", help="levels as 'a..b' or 'k1,k2,...'")
        s.add_argument("--tol", type=float, default=1e-8)
        s.add_argument("--max-iter", type=int, default=500)
        s.add_argument("--damping", type=float, default=1.0)
        s.add_argument("--grid", help="'min,max,npts' per axis for potential export")
        s.add_argument("--out", type=Path, help="directory for auxiliary output files")
        if name == "dh-moments":
            s.add_argument("--max-degree", type=int, default=2)
        if name == "futaki-expansion":
            s.add_argument("--xi-v", help="comma list; default 0")
            s.add_argument("--xi-w", help="comma list; default (1,..,1)")
        if name == "functional-report":
            s.add_argument("--metric", type=Path,
                           help="metric JSON {level, coefficients, constant}; default: level-2 "
                                "unit coefficients")
            s.add_argument("--xi", help="g = exp(<xi, x>); default V_KS")
        if name == "balance":
            s.add_argument("--no-accelerate", action="store_true",
                           help="plain damped iteration instead of Anderson mixing")
    return p


DEFAULT_LEVELS = {"weights": [1], "dh-moments": [2, 4, 8, 16], "solve-vk": [8],
                  "futaki-expansion": list(range(1, 7)), "balance": [1],
                  "convergence": [2, 4, 8], "functional-report": [1, 2, 4, 8]}


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _vec(x) -> list:
    return [float(c) for c in np.asarray(x).ravel()]


def cmd_validate(P, cfg, args):
    return _dump({"name": P.name, "dim": P.dim, "facet_normals": P.facet_normals.tolist(),
                  "vertices": [[str(c) for c in v] for v in P.vertices],
                  "volume": P.volume, "N_1": P.lattice_points(1).N,
                  "symmetries": len(P.symmetries())})


def cmd_weights(P, cfg, args):
    if len(cfg.levels) != 1:
        raise UsageError("weights takes a single --level")
    return P.lattice_points(cfg.levels[0]).to_csv()


def cmd_dh_moments(P, cfg, args):
    return ms.convergence_report(P, cfg.levels, args.max_degree).to_csv()


def cmd_solve_vk(P, cfg, args):
    vks, rows = vf.vk_convergence(P, cfg.levels, tol=min(cfg.tol, 1e-10))
    if len(rows) > 1:
        return vf.vk_table_csv(P, vks, rows)
    r = rows[0]
    return _dump({"k": r.k, "V_k": _vec(r.V_k), "F_k_min": r.F_k_min,
                  "futaki_residual": r.futaki_residual, "V_KS": _vec(vks.xi),
                  "distance": r.distance})


def cmd_futaki_expansion(P, cfg, args):
    xi_v = parse_vector(args.xi_v, P.dim)
    xi_w = parse_vector(args.xi_w, P.dim)
    xi_v = np.zeros(P.dim) if xi_v is None else xi_v
    xi_w = np.ones(P.dim) if xi_w is None else xi_w
    coeffs = vf.futaki_expansion_fit(P, xi_v, xi_w, cfg.levels)
    return _dump({"levels": cfg.levels, "xi_V": _vec(xi_v), "xi_W": _vec(xi_w),
                  "coefficients": [str(c) if not isinstance(c, float) else c for c in coeffs]})


def cmd_balance(P, cfg, args):
    if len(cfg.levels) != 1:
        raise UsageError("balance takes a single --level")
    H, phi, rep = bl.balanced_metric(P, cfg.levels[0], tol=cfg.tol, max_iter=cfg.max_iter,
                                     theta=cfg.damping, accelerate=not args.no_accelerate)
    if cfg.out is not None:
        (cfg.out / "H_k.csv").write_text(H.to_csv())
        (cfg.out / "phi_k.csv").write_text(phi.to_csv(mt.grid_axes(cfg.grid, P.dim)))
        (cfg.out / "summary.json").write_text(_dump(rep.to_json()))
    return _dump(rep.to_json())


def cmd_convergence(P, cfg, args):
    rows = bl.soliton_convergence_study(P, cfg.levels, mt.grid_axes(cfg.grid, P.dim),
                                        tol=cfg.tol, max_iter=cfg.max_iter)
    # the table is still useful when a level stalls; the exit code reports it
    code = EXIT_OK if all(r.converged for r in rows) else EXIT_NONCONVERGENCE
    return bl.study_csv(P, rows), code


def cmd_functional_report(P, cfg, args):
    if args.metric is not None:
        phi = mt.TorusMetric.from_json(P, json.loads(args.metric.read_text()))
    else:
        phi = mt.TorusMetric(P, 2, np.zeros(P.lattice_points(2).N))
    xi = parse_vector(args.xi, P.dim)
    xi = vf.minimize_F_continuous(P).xi if xi is None else xi
    return qf.functional_csv(qf.prop33_convergence(phi, xi, cfg.levels))


COMMANDS = {"validate": cmd_validate, "weights": cmd_weights, "dh-moments": cmd_dh_moments,
            "solve-vk": cmd_solve_vk, "futaki-expansion": cmd_futaki_expansion,
            "balance": cmd_balance, "convergence": cmd_convergence,
            "functional-report": cmd_functional_report}


def _usage(parser, message, stderr) -> int:
    stderr.write(f"usage error: {message}\n{parser.format_usage()}\nOutput schemas:\n")
    for name, schema in SCHEMAS.items():
        stderr.write(f"  {name}: {schema}\n")
    return EXIT_USAGE


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        if getattr(args, "level", None) is not None and getattr(args, "levels", None):
            raise UsageError("give --level or --levels, not both")
        if getattr(args, "level", None) is not None:
            levels = [args.level]
        elif getattr(args, "levels", None):
            levels = parse_levels(args.levels)
        else:
            levels = DEFAULT_LEVELS.get(args.command, [1])
        cfg = RunConfig(args.command, args.polytope, levels, args.tol, args.max_iter,
                        args.damping, args.grid, args.out)
        cfg.check()
        P = pt.resolve(cfg.polytope)
        out = COMMANDS[cfg.command](P, cfg, args)
        text, code = out if isinstance(out, tuple) else (out, EXIT_OK)
        stdout.write(text)
    except UsageError as exc:
        return _usage(parser, exc, stderr)
    except (pt.PolytopeError, FileNotFoundError, ValueError) as exc:
        if isinstance(exc, pt.PolytopeError):
            stderr.write(json.dumps(exc.report(), sort_keys=True, default=str) + "\n")
        else:
            stderr.write(f"invalid input: {exc}\n")
        return EXIT_INVALID
    except (vf.NoConvergence, QuadratureNotConverged, vf.SingularHessian) as exc:
        stderr.write(f"no convergence: {exc}\n")
        return EXIT_NONCONVERGENCE
    return code


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
