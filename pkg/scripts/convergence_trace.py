"""Convergence trace of the statistical-CSI optimizer (K=3, M=4, N=40, 10 dB)."""
import argparse

import numpy as np

from rsris.config import OptimizerConfig, db2lin, load_scenario
from rsris.harness import convergence_experiment, write_trace
from _common import HERE


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scenario", default=str(HERE / "scenario_default.json"))
    p.add_argument("--Pt-dB", dest="Pt_dB", type=float, default=10.0)
    p.add_argument("--seeds", type=int, default=5, help="number of covariance realizations to trace")
    p.add_argument("--out", default="trace_{seed}.csv")
    args = p.parse_args()
    sc = load_scenario(args.scenario)
    # run to the cap so the whole curve is visible
    cfg = OptimizerConfig(P_t=db2lin(args.Pt_dB), max_iters=60, rel_tol=1e-12)
    for seed in range(args.seeds):
        trace = convergence_experiment(sc, cfg, seed=seed)
        write_trace(trace, args.out.format(seed=seed))
        rates = np.array([e.sum_rate_bits for e in trace])
        print(f"seed {seed}: iteration 1 {rates[0]:.3f}, 20 {rates[min(19, rates.size - 1)]:.3f}, "
              f"last {rates[-1]:.3f} bpcu")


if __name__ == "__main__":
    main()
