"""Statistical vs. per-interval imperfect-CSI designs with unit error covariance.

The naive variant designs on the noisy estimate as if it were exact.
"""
from _common import run_sweep, sweep_parser

if __name__ == "__main__":
    run_sweep(sweep_parser(__doc__, "imperfect_csi_plan.json", "imperfect_csi.csv").parse_args())
