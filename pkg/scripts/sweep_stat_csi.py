"""Statistical-CSI sum rate over transmit power for every RS / RIS variant."""
from _common import run_sweep, sweep_parser

if __name__ == "__main__":
    run_sweep(sweep_parser(__doc__, "stat_csi_plan.json", "stat_csi.csv").parse_args())
