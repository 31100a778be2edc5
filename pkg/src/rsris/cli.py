"""Command-line front end.

Exit codes:
  0  success
  2  usage error (unknown flag, bad value, missing argument)
  3  unreadable or malformed input file
  4  channel statistics violate an invariant (shape, Hermitian, PSD)
  5  optimizer failure (degenerate state or eigen-iteration failure)

Errors are written to stderr as one JSON object on a single line with the
keys ``error``, ``exit_code`` and ``message``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .channel import InvalidStatisticsError, PhaseConfiguration, synthesize_covariances
from .config import ConfigError, ExperimentPlan, OptimizerConfig, ScenarioConfig, Variant, db2lin, load_plan, load_scenario
from .eig import PowerIterationError
from .fp import DegenerateStateError
from .harness import (
    STREAM_COV,
    STREAM_MC,
    STREAM_RANDRIS,
    aggregate,
    cell_rng,
    convergence_experiment,
    run_cells,
    write_manifest,
    write_results,
)
from .rates import ergodic_sum_rate_mc
from .stat_csi import optimize, write_trace
from .stats_io import StatsFormatError, encode_matrix, load_stats, save_stats

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT, EXIT_OPTIMIZER = 0, 2, 3, 4, 5

EPILOG = """exit codes:
  0  success
  2  usage error (unknown flag, bad value, missing argument)
  3  unreadable or malformed input file
  4  channel statistics violate an invariant (shape, Hermitian, PSD)
  5  optimizer failure (degenerate state or eigen-iteration failure)

errors go to stderr as a single JSON line: {"error": ..., "exit_code": ..., "message": ...}
"""


class CliError(Exception):
    def __init__(self, kind: str, code: int, message: str):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", EXIT_USAGE, message)


def _parse_variant(text: str) -> Variant:
    # a bad --variant is a command-line mistake, not a bad input file
    try:
        return Variant.parse(text)
    except ConfigError as exc:
        raise CliError("usage", EXIT_USAGE, str(exc)) from None


def _report_dict(report) -> dict:
    return {
        "sum_rate": report.sum_rate,
        "private_rate": np.asarray(report.private_rate).tolist(),
        "common_rate_candidate": np.asarray(report.common_rate_candidate).tolist(),
        "common_user": int(report.common_user),
        "stderr": report.stderr,
    }


def _scenario_from_args(args) -> ScenarioConfig:
    sc = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    if args.seed is not None:
        sc = ScenarioConfig.from_dict({**sc.to_dict(), "seed": args.seed})
    return sc


def _statistics_from_args(args):
    if getattr(args, "stats", None):
        stats = load_stats(args.stats)
    else:
        sc = _scenario_from_args(args)
        stats = synthesize_covariances(sc, cell_rng(sc.seed, STREAM_COV, 0))
    stats.validate()
    return stats


def _opt_config(args, **extra) -> OptimizerConfig:
    kw = {"P_t": db2lin(args.Pt_dB)}
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    if args.rel_tol is not None:
        kw["rel_tol"] = args.rel_tol
    kw.update(extra)
    return OptimizerConfig(**kw)


def cmd_optimize(args) -> int:
    variant = _parse_variant(args.variant) if args.variant else Variant("stat", True, "opt")
    if variant.csi != "stat":
        raise CliError("usage", EXIT_USAGE, "optimize runs the statistical-CSI design; use sweep for imp variants")
    stats = _statistics_from_args(args)
    seed = args.seed if args.seed is not None else 0
    if variant.ris == "none":
        stats = stats.without_ris()
    phi0 = PhaseConfiguration.random(stats.N, cell_rng(seed, STREAM_RANDRIS, 0)) if variant.ris == "rand" else None
    cfg = _opt_config(
        args, rs_enabled=variant.rs, phase_update_enabled=variant.ris == "opt", trace_enabled=bool(args.trace)
    )
    sol = optimize(stats, cfg, phi0=phi0)
    result = {"variant": variant.label, "Pt_dB": args.Pt_dB, "iterations": sol.iterations_used, "approx": _report_dict(sol.rate)}
    if args.mc_samples:
        mc = ergodic_sum_rate_mc(stats, sol.phi, sol.P, args.mc_samples, cell_rng(seed, STREAM_MC, 0))
        result["ergodic_mc"] = _report_dict(mc)
    print(json.dumps(result))
    if args.out:
        full = dict(result, precoders=encode_matrix(sol.P.P), phases=encode_matrix(sol.phi.phi[None, :]))
        Path(args.out).write_text(json.dumps(full, indent=2))
    if args.trace:
        write_trace(sol.trace, args.trace)
    return EXIT_OK


def cmd_sweep(args) -> int:
    plan = load_plan(args.plan)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    if args.rel_tol is not None:
        overrides["rel_tol"] = args.rel_tol
    if args.Pt_dB is not None:
        overrides["Pt_grid_dB"] = [args.Pt_dB]
    if args.variant:
        overrides["variants"] = [_parse_variant(v) for v in args.variant]
    if overrides:
        plan = ExperimentPlan(**{**plan.__dict__, **overrides})
    cells, failures = run_cells(plan, workers=args.workers)
    rows = aggregate(plan, cells)
    out = Path(args.out)
    write_results(rows, out, with_timing=args.timing)
    write_manifest(plan, rows, failures, out.with_name(out.name + ".manifest.json"), workers=args.workers)
    for r in rows:
        print(f"{r.variant},{r.Pt_dB:g},{r.sum_rate_mean:.4f},{r.sum_rate_stderr:.4f}")
    if failures:
        logging.getLogger("rsris").warning("%d cells failed; see manifest", len(failures))
    return EXIT_OK


def cmd_converge(args) -> int:
    sc = _scenario_from_args(args)
    trace = convergence_experiment(sc, _opt_config(args, trace_enabled=True))
    write_trace(trace, args.out)
    last = trace[-1]
    print(json.dumps({"iterations": len(trace), "final_sum_rate": last.sum_rate_bits}))
    return EXIT_OK


def cmd_validate_stats(args) -> int:
    if not args.stats and not args.scenario:
        raise CliError("usage", EXIT_USAGE, "validate-stats needs --stats or --scenario")
    stats = _statistics_from_args(args)
    if args.out:
        save_stats(stats, args.out)
    print(json.dumps({"valid": True, "M": stats.M, "K": stats.K, "N": stats.N, "delta": stats.delta}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="rsris",
        description="Statistical-CSI rate splitting with RIS phase optimisation.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="{optimize,sweep,converge,validate-stats}")
    sub.required = True

    def common(sp, Pt_default: Optional[float] = 10.0):
        sp.add_argument("--seed", type=int, help="covariance seed (optimize/converge) or master seed (sweep)")
        sp.add_argument("--Pt-dB", dest="Pt_dB", type=float, default=Pt_default, help="transmit power in dB")
        sp.add_argument("--max-iters", type=int, help="BCD iteration cap")
        sp.add_argument("--rel-tol", type=float, help="relative sum-rate change that stops the BCD loop")

    sp = sub.add_parser("optimize", help="one statistical-CSI solve; prints the rate report", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--scenario", help="scenario (or plan) JSON file")
    sp.add_argument("--stats", help="channel statistics JSON container (overrides --scenario)")
    sp.add_argument("--out", help="write the solution (report, precoders, phases) as JSON")
    sp.add_argument("--trace", help="write the iteration trace as CSV")
    sp.add_argument("--variant", help="csi:rs:ris shorthand, e.g. stat:rs:opt, stat:nors:rand, stat:rs:none")
    sp.add_argument("--mc-samples", type=int, default=0, help="also estimate the ergodic rate from this many draws")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sweep", help="run an experiment plan and write a result table", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--plan", required=True, help="experiment plan JSON file")
    sp.add_argument("--out", required=True, help="result CSV; the manifest goes next to it")
    sp.add_argument("--variant", action="append", help="restrict to these variants (repeatable)")
    sp.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    sp.add_argument("--timing", action="store_true", help="fill the seconds column (breaks byte-identical reruns)")
    common(sp, Pt_default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("converge", help="trace one optimisation run", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--scenario", help="scenario (or plan) JSON file")
    sp.add_argument("--out", required=True, help="trace CSV")
    common(sp)
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("validate-stats", help="check channel statistics invariants", epilog=EPILOG,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--stats", help="channel statistics JSON container")
    sp.add_argument("--scenario", help="synthesise statistics from this scenario instead")
    sp.add_argument("--seed", type=int, help="covariance seed when synthesising")
    sp.add_argument("--out", help="export the (synthesised) statistics to this container file")
    sp.set_defaults(func=cmd_validate_stats)
    return p


def _fail(kind: str, code: int, message: str) -> int:
    line = json.dumps({"error": kind, "exit_code": code, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "workers", 1) < 1:
            raise CliError("usage", EXIT_USAGE, "--workers must be >= 1")
        return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, exc.code, str(exc))
    except (OSError, json.JSONDecodeError, StatsFormatError) as exc:
        return _fail("input", EXIT_INPUT, f"{type(exc).__name__}: {exc}")
    except InvalidStatisticsError as exc:
        return _fail("invariant", EXIT_INVARIANT, str(exc))
    except ConfigError as exc:
        return _fail("input", EXIT_INPUT, str(exc))
    except (DegenerateStateError, PowerIterationError, np.linalg.LinAlgError) as exc:
        return _fail("optimizer", EXIT_OPTIMIZER, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
