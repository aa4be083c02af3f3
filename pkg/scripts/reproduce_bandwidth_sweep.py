"""Min BER versus mux bandwidth (1.8, 3.62, 7.23, 10 nm) for Bessel orders 1 and 2."""

import logging

from _common import GAMMA_MODES, parser, systems

from pon200.io import ExperimentOptions, run_experiment
from pon200.scenarios import PAPER_BANDWIDTHS


def main():
    p = parser(__doc__)
    p.add_argument("--orders", default="1,2")
    args = p.parse_args()
    for variant, cfg in systems(args):
        for order in (int(o) for o in args.orders.split(",")):
            out = args.out / f"bandwidth_{variant}_order{order}"
            opts = ExperimentOptions(
                seed=args.seed, bandwidths=PAPER_BANDWIDTHS, order=order,
                gamma_modes=GAMMA_MODES, workers=args.workers,
            )  # fmt: skip
            m = run_experiment("bandwidth-sweep", cfg, out, opts)
            logging.info("system %s order %d: %s (%.0f s)", variant, order, out, m.wall_clock_s)


if __name__ == "__main__":
    main()
