"""Shared plumbing for the reproduction scripts."""
import argparse
import logging
from pathlib import Path

from rsris.config import ExperimentPlan, load_plan
from rsris.harness import aggregate, run_cells, write_manifest, write_results

HERE = Path(__file__).resolve().parent


def sweep_parser(description: str, default_plan: str, default_out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--plan", default=str(HERE / default_plan), help="experiment plan JSON")
    p.add_argument("--out", default=default_out, help="result CSV (manifest is written next to it)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full", action="store_true", help="100 covariance x 1000 channel realizations")
    p.add_argument("--quick", action="store_true", help="3 covariance x 50 channel realizations, for a smoke run")
    return p


def run_sweep(args) -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    plan = load_plan(args.plan)
    if args.full:
        plan = ExperimentPlan(**{**plan.__dict__, "n_cov_realizations": 100, "n_channel_realizations": 1000})
    elif args.quick:
        plan = ExperimentPlan(**{**plan.__dict__, "n_cov_realizations": 3, "n_channel_realizations": 50,
                                 "n_imp_channel_realizations": 2})
    cells, failures = run_cells(plan, workers=args.workers)
    rows = aggregate(plan, cells)
    out = Path(args.out)
    write_results(rows, out)
    write_manifest(plan, rows, failures, out.with_name(out.name + ".manifest.json"), workers=args.workers)
    for r in rows:
        print(f"{r.variant:28s} {r.Pt_dB:6g} dB  {r.sum_rate_mean:7.3f} +- {r.sum_rate_stderr:.3f}")
    if failures:
        print(f"{len(failures)} cells failed; see the manifest")
