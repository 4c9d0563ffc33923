"""Command-line interface.

Subcommands:
  solve    solve one market config and print the paired equilibrium report
  sweep    run the sweep from a config file and write the CSV
  check    print per-prosumer condition checks at the solved equilibrium
  verify   best-response certificate: print per-prosumer payoff gaps
  oracle   brute-force cross-check of the dual solver (2-3 prosumers)

Exit codes: 0 success, 1 validation/usage error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .conditions import ConditionReport
from .errors import (BracketFailure, ConfigError, DomainError, InvalidBids,
                     TooLarge, UnboundedPayoff)
from .experiments import (EquilibriumReport, emit_csv, emit_gnuplot,
                          equilibrium_report, load_config_file, run_sweep)
from .oracle import best_response, brute_force_program
from .solver import MODE_MODIFIED, MODE_TRUE, SolveResult, solve_dual

_MODE_CHOICES = (MODE_TRUE, MODE_MODIFIED, "both")


def _vec(values, digits: int = 10) -> str:
    return " ".join(f"{v:.{digits}g}" for v in np.asarray(values).ravel())


def _flags(mask) -> str:
    mask = np.asarray(mask, dtype=bool)
    return f"{int(mask.sum())}/{mask.size} [{''.join('T' if b else 'F' for b in mask)}]"


def _print_solve(label: str, result: SolveResult) -> None:
    print(f"{label}: price={result.price:.12g} "
          f"welfare_true={result.welfare_true:.12g} "
          f"converged={result.converged} iterations={result.iterations} "
          f"non_concave={result.non_concave}")
    print(f"  quantities: {_vec(result.allocation.quantities)}")
    print(f"  thetas: {_vec(result.thetas)}")
    print(f"  kkt_residuals: {_vec(result.allocation.kkt_residuals, 3)}")


def _print_conditions(report: ConditionReport) -> None:
    print("conditions at the strategic equilibrium:")
    print(f"  lemma1: {_flags(report.lemma1_ok)}")
    print(f"  eq15:   {_flags(report.eq15_ok)}")
    print(f"  eq18:   {_flags(report.eq18_ok)}")
    print(f"  eq21:   {_flags(report.eq21_ok)}")
    print(f"  eq36:   {_flags(report.eq36_ok)}")
    print(f"  all_ok: {report.all_ok}")


def _print_report(report: EquilibriumReport, mode: str) -> None:
    cfg = report.config
    print(f"market: n_prosumers={cfg.n_prosumers} d_min={cfg.d_min:g} "
          f"s_max={cfg.s_max:g}")
    print(f"betas: {_vec(cfg.betas)}")
    if mode in (MODE_TRUE, "both"):
        _print_solve("competitive", report.competitive)
    if mode in (MODE_MODIFIED, "both"):
        _print_solve("nash", report.nash)
    if mode == "both":
        print(f"welfare_loss: {report.welfare_loss:.12g}")
    _print_conditions(report.conditions)


def _cmd_solve(args) -> int:
    config, _ = load_config_file(args.config)
    _print_report(equilibrium_report(config), args.mode)
    return 0


def _cmd_sweep(args) -> int:
    _, sweep = load_config_file(args.config)
    if sweep is None:
        raise ConfigError(f"{args.config}: sweep subcommand needs a 'sweep' block")
    rows = run_sweep(sweep)
    emit_csv(rows, args.out)
    failed = [r for r in rows if r.error]
    print(f"wrote {len(rows)} rows to {args.out}"
          + (f" ({len(failed)} rows failed)" if failed else ""))
    if args.gnuplot:
        emit_gnuplot(rows, args.gnuplot)
        print(f"wrote gnuplot export to {args.gnuplot}")
    return 0


def _cmd_check(args) -> int:
    config, _ = load_config_file(args.config)
    report = equilibrium_report(config)
    _print_conditions(report.conditions)
    return 0


def _cmd_verify(args) -> int:
    config, _ = load_config_file(args.config)
    nash = solve_dual(config, MODE_MODIFIED)
    gaps = []
    for i in range(config.n_prosumers):
        res = best_response(i, nash.thetas, config, grid_points=args.grid)
        gaps.append(res.gap)
        print(f"prosumer {i}: theta={nash.thetas[i]:.10g} "
              f"best_theta={res.theta_star:.10g} gap={res.gap:.3e}")
    print(f"max_gap: {max(gaps):.6e}")
    return 0


def _cmd_oracle(args) -> int:
    config, _ = load_config_file(args.config)
    modes = [MODE_TRUE, MODE_MODIFIED] if args.mode == "both" else [args.mode]
    for mode in modes:
        dual = solve_dual(config, mode)
        grid = brute_force_program(config, mode, grid_points=args.grid)
        diff = float(np.max(np.abs(
            dual.allocation.quantities - grid.quantities)))
        print(f"{mode}: dual=[{_vec(dual.allocation.quantities)}] "
              f"grid=[{_vec(grid.quantities)}] max_diff={diff:.3e}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prosumer-market",
        description="Equilibria and welfare-loss experiments for a "
                    "uniform-price prosumer market.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON market config")
        p.set_defaults(func=func)
        return p

    p = add("solve", _cmd_solve, "solve one market and print the report")
    p.add_argument("--mode", choices=_MODE_CHOICES, default="both")

    p = add("sweep", _cmd_sweep, "run the configured sweep and write a CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--gnuplot", default=None,
                   help="optional two-column gnuplot export path")

    add("check", _cmd_check, "condition checks at the solved equilibrium")

    p = add("verify", _cmd_verify, "best-response certificate (max gap)")
    p.add_argument("--grid", type=int, default=200_000,
                   help="grid points per best-response search")

    p = add("oracle", _cmd_oracle, "brute-force cross-check (N<=3)")
    p.add_argument("--mode", choices=_MODE_CHOICES, default="both")
    p.add_argument("--grid", type=int, default=2001,
                   help="grid points per free dimension")
    return parser


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (ConfigError, DomainError, InvalidBids, TooLarge, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BracketFailure, UnboundedPayoff) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
