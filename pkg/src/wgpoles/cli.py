"""Command line front end for the sweep pipeline and its individual stages.

Subcommands mirror the pipeline: ``basis`` (transverse eigenpairs), ``pole``
(secular solve per coupling), ``asym`` (leading-order predictions), ``cell``
(far-field constant of the unit window), ``oracle`` (single truncated-guide
bindings), ``sweep`` (full run writing CSV and JSON artifacts), and
``report`` (full run printed to stdout).

Exit codes: 0 on success, 2 for configuration problems, 3 when a solver
fails to converge, 4 when ``sweep --check`` finds a tolerance violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .cell import explicit_window_solution_2d, fit_farfield_coefficient
from .harness import (
    REGULAR_POTENTIAL,
    ConfigError,
    parse_config,
    predict_row,
    regular_inputs,
    run_experiment,
    truncated_binding,
)
from .oracle import SolverError, TailFitError
from .regular_pole import IterationDivergedError, solve_secular
from .transverse import build_basis

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


class _CheckFailed(RuntimeError):
    """Internal signal: declared tolerances were violated under ``--check``."""


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", type=str, required=config_required,
                   help="Path to the experiment JSON config.")
    p.add_argument("--out", type=str, default=None,
                   help="Directory for artifacts (overrides the config).")
    p.add_argument("--modes", type=int, default=None,
                   help="Transverse modes kept in the resolvent sum.")
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=None,
                   help="Secular quadrature grid override.")
    p.add_argument("--tol", type=float, default=None,
                   help="Tolerance override where the subcommand uses one.")
    p.add_argument("--threads", type=int, default=1,
                   help="Worker threads for sweep rows (default 1).")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="Log solver progress.")


def _load(args: argparse.Namespace):
    cfg = parse_config(args.config)
    raw = dict(cfg.raw)
    pert = dict(raw.get("perturbation", {}))
    if args.modes is not None:
        pert["modes"] = args.modes
    if args.grid is not None:
        pert["n_long"], pert["n_trans"] = args.grid
    raw["perturbation"] = pert
    if getattr(args, "check", False) and args.tol is not None:
        tols = dict(raw.get("tolerances", {}))
        rel = dict(tols.get("rel_err", {}))
        rel["max"] = args.tol
        tols["rel_err"] = rel
        raw["tolerances"] = tols
    return parse_config(raw)


def _cmd_basis(args: argparse.Namespace) -> int:
    cfg = _load(args)
    count = args.modes or cfg.m + 8
    basis = build_basis(cfg.cross_section, count)
    print(f"cross section: width {cfg.cross_section.width:g}, {cfg.cross_section.bc}")
    print(f"{'j':>4} {'mu_j':>18} {'wall value':>14} {'wall slope':>14}")
    for j in range(count):
        print(
            f"{j + 1:>4} {basis.mu[j]:>18.12f} "
            f"{basis.wall_value[j]:>14.8f} {basis.wall_slope[j]:>14.8f}"
        )
    return EXIT_OK


def _cmd_pole(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if cfg.scenario != REGULAR_POTENTIAL:
        raise ConfigError(f"pole subcommand needs a {REGULAR_POTENTIAL} config")
    basis = build_basis(cfg.cross_section, max(cfg.m + 8, args.modes or 0))
    kernel, V = regular_inputs(cfg, basis)
    print(f"{'epsilon':>10} {'Re k':>16} {'Im k':>12} {'lambda':>16} "
          f"{'class':>14} {'iters':>6}")
    for eps in cfg.epsilons:
        p = solve_secular(V, eps, kernel)
        print(
            f"{eps:>10.6g} {p.k.real:>16.10g} {p.k.imag:>12.4g} "
            f"{p.lam.real:>16.10g} {p.classification:>14} {p.iterations:>6}"
        )
    return EXIT_OK


def _cmd_asym(args: argparse.Namespace) -> int:
    cfg = _load(args)
    basis = build_basis(cfg.cross_section, max(cfg.m + 8, args.modes or 0))
    print(f"{'epsilon':>10} {'k lead':>16} {'Im k lead':>14} {'lambda pred':>16} "
          f"{'class':>14}")
    for eps in cfg.epsilons:
        row = predict_row(cfg, eps, basis)
        print(
            f"{eps:>10.6g} {row.k_re:>16.10g} {row.k_im:>14.6g} "
            f"{row.lam_pred:>16.10g} {row.classification or '-':>14}"
        )
    return EXIT_OK


def _cmd_cell(args: argparse.Namespace) -> int:
    cfg = _load(args) if args.config else None
    a = float(cfg.perturbation.get("half_width", 1.0)) if cfg else 1.0
    sol = explicit_window_solution_2d(a)
    fitted = fit_farfield_coefficient(sol, 10.0 * a, 40.0 * a)
    dev = abs(fitted - sol.farfield_constant) / sol.farfield_constant
    print(f"window half-width     {a:g}")
    print(f"far-field constant    {sol.farfield_constant:.12g} (a^2/2)")
    print(f"fitted from far field {fitted:.12g}")
    print(f"relative deviation    {dev:.3e}  (reference tol {args.tol or 1e-3:g})")
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    cfg = _load(args)
    h = cfg.oracle["h"][0]
    print(f"{'epsilon':>10} {'L':>8} {'h':>10} {'binding':>18}")
    for i, eps in enumerate(cfg.epsilons):
        L = cfg.lengths_for(i)[-1]
        b = truncated_binding(cfg, eps, L, h)
        print(f"{eps:>10.6g} {L:>8g} {h:>10.5g} {b:>18.12g}")
    return EXIT_OK


def _run_pipeline(args: argparse.Namespace, write: bool) -> int:
    cfg = _load(args)
    out = args.out if args.out is not None else cfg.raw.get("out_dir")
    if write and out is None:
        out = "out"
    rows, fits, report = run_experiment(cfg, out_dir=out, threads=args.threads)
    if rows and all(r.error is not None for r in rows):
        print("every sweep row failed; see the report for details", file=sys.stderr)
        return EXIT_SOLVER
    if write:
        for r in rows:
            status = r.error or r.classification or "-"
            b = "-" if r.b_oracle is None else f"{r.b_oracle:.6g}"
            print(f"eps {r.epsilon:<10g} b_oracle {b:<14} {status}")
        print(f"artifacts in {out}/")
        doc = json.loads(report)
        if getattr(args, "check", False) and not doc["pass"]:
            failing = [c for c in doc["checks"] if not c["pass"]]
            for c in failing:
                where = f" (row {c['row']})" if "row" in c else ""
                print(f"check failed: {c['name']}{where}: {c['detail']}",
                      file=sys.stderr)
            raise _CheckFailed(f"{len(failing)} tolerance checks failed")
    else:
        sys.stdout.write(report)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    return _run_pipeline(args, write=True)


def _cmd_report(args: argparse.Namespace) -> int:
    return _run_pipeline(args, write=False)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="wgpoles",
        description="Threshold poles of perturbed waveguides: predictions, "
        "secular solves, and finite-difference cross-checks.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("basis", help="Transverse eigenvalues and wall traces.")
    _add_common(sp)
    sp.set_defaults(func=_cmd_basis)

    sp = sub.add_parser("pole", help="Secular pole solve for each coupling.")
    _add_common(sp)
    sp.set_defaults(func=_cmd_pole)

    sp = sub.add_parser("asym", help="Leading-order pole predictions.")
    _add_common(sp)
    sp.set_defaults(func=_cmd_asym)

    sp = sub.add_parser("cell", help="Far-field constant of the wall window.")
    _add_common(sp, config_required=False)
    sp.set_defaults(func=_cmd_cell)

    sp = sub.add_parser("oracle", help="Single truncated-guide bindings.")
    _add_common(sp)
    sp.set_defaults(func=_cmd_oracle)

    sp = sub.add_parser("sweep", help="Full sweep; writes sweep.csv and report.json.")
    _add_common(sp)
    sp.add_argument("--check", action="store_true",
                    help="Exit 4 when a declared tolerance fails.")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("report", help="Full sweep; prints the JSON report.")
    _add_common(sp)
    sp.set_defaults(func=_cmd_report)

    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IterationDivergedError, SolverError, TailFitError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except _CheckFailed as exc:
        print(f"acceptance check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
