"""Command line entry point: surrogates, single identifications, tables, profiles."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .assembly import QuadratureError, check_quadrature, field_breaks
from .mesh import MeshError
from .optimizer import BfgsConfig, LineSearchError
from .theta import Basis, ThetaField, constant

log = logging.getLogger("nlident")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_NOCONV = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _cfg(args) -> BfgsConfig:
    kw = {"grad_tol": args.grad_tol, "max_iters": args.max_iters}
    if getattr(args, "init", None) is not None:
        kw["init_value"] = args.init
    return BfgsConfig(**kw)


def _spec_from_args(args):
    spec = ex.case_spec(args.case, getattr(args, "n", 16), getattr(args, "m", 4),
                        eps=getattr(args, "eps", None), beta=getattr(args, "beta", None))
    spec.state_mesh()  # validates eps against the mesh size
    spec.param_mesh()
    return spec


def _load_target(spec, path):
    if spec.surrogate_n is None:
        if path:
            raise ConfigError(f"case {spec.case_id} uses its closed-form target; drop --surrogate")
        return None
    if not path:
        raise ConfigError(f"case {spec.case_id} needs --surrogate FILE")
    return ex.load_surrogate(path, spec)


def _verify(spec, theta):
    mesh = spec.state_mesh()
    breaks = np.concatenate([ex.THETA_BREAKS[spec.case_id], field_breaks(theta)])
    check_quadrature(theta, spec.kernel, mesh, z_breaks=breaks)
    log.info("quadrature check passed on N=%d", spec.n)


# -- subcommands ----------------------------------------------------------------


def cmd_surrogate(args) -> int:
    spec = ex.case_spec(args.case)
    if spec.surrogate_n is None:
        raise ConfigError(f"case {spec.case_id} has a closed-form target, no surrogate")
    if args.n is not None:
        spec = ex.case_spec(args.case, surrogate_n=args.n)
    if args.verify_quadrature:
        _verify(ex.case_spec(args.case, n=spec.surrogate_n), spec.theta_true)
    u = ex.make_surrogate(spec, threads=args.threads)
    ex.save_surrogate(args.out, spec, u)
    log.info("wrote surrogate N=%d to %s", spec.surrogate_n, args.out)
    return EXIT_OK


def cmd_identify(args) -> int:
    spec = _spec_from_args(args)
    target = _load_target(spec, args.surrogate)
    cfg = _cfg(args)
    theta0 = constant(cfg.init_value, spec.param_mesh(), Basis(spec.basis))
    if args.verify_quadrature:
        _verify(spec, theta0)
    res = ex.run_identification(spec, cfg, target, theta0, threads=args.threads)
    Path(args.out).write_text(json.dumps(res.to_record(), indent=1))
    log.info("e_u2=%.3e e_theta=%.3e (%s)", res.e_u2, res.e_theta, res.run.message)
    return EXIT_OK if res.run.converged else EXIT_NOCONV


def cmd_convergence(args) -> int:
    try:
        levels = ex.parse_levels(args.levels)
    except ValueError as exc:
        raise ConfigError(f"bad --levels {args.levels!r}: expected 'n0:m0,n1:m1,...'") from exc
    for (n0, m0), (n1, m1) in zip(levels, levels[1:]):
        if n1 != 2 * n0 or m1 != 2 * m0:
            raise ConfigError("each level must double both N and M")
    spec = ex.case_spec(args.case, *levels[0], eps=args.eps)
    for n, m in levels:
        ex.case_spec(args.case, n, m, eps=args.eps).state_mesh()
    target = _load_target(spec, args.surrogate)
    if args.verify_quadrature:
        _verify(ex.case_spec(args.case, *levels[-1], eps=args.eps), 1.0)
    rows = ex.convergence_table(args.case, args.eps, levels, _cfg(args), target,
                                threads=args.threads)
    Path(args.out).write_text(ex.rows_to_csv(rows))
    if any(np.isnan(r.e_u2) for r in rows):
        return EXIT_SOLVER
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NOCONV


def cmd_profile(args) -> int:
    rec = json.loads(Path(args.result).read_text())
    theta = ThetaField.from_record(rec["theta"])
    z, v = ex.emit_theta_profile(theta, args.samples)
    Path(args.out).write_text(ex.profile_to_csv(z, v))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlident", description=__doc__)
    p.add_argument("--grad-tol", type=float, default=ex.EXPERIMENT_CFG.grad_tol,
                   help="stop when |grad|_inf <= tol * max(1, |grad0|_inf)")
    p.add_argument("--max-iters", type=int, default=ex.EXPERIMENT_CFG.max_iters)
    p.add_argument("--verify-quadrature", action="store_true",
                   help="compare the stiffness against doubled quadrature orders first")
    p.add_argument("--threads", type=int, default=0, help="0 runs sequentially")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("surrogate", help="fine-grid target state for cases A, C, D")
    s.add_argument("--case", required=True, choices=list("ACD"), type=str.upper)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_surrogate)

    s = sub.add_parser("identify", help="one identification run")
    s.add_argument("--case", required=True, choices=list("ABCD"), type=str.upper)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--eps", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--init", type=float)
    s.add_argument("--surrogate")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("convergence", help="error table over dyadic levels")
    s.add_argument("--case", required=True, choices=list("ABCD"), type=str.upper)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--levels", required=True)
    s.add_argument("--surrogate")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("profile", help="sample an identified parameter")
    s.add_argument("--result", required=True)
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_profile)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 0 or args.max_iters < 1 or not args.grad_tol > 0:
        print("error: --threads >= 0, --max-iters >= 1 and --grad-tol > 0 required",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    # LinAlgError derives from ValueError, so solver failures are caught first
    except (np.linalg.LinAlgError, QuadratureError, LineSearchError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, MeshError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
