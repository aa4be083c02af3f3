"""Min BER versus total OLT-ONT distance (10-24 km) and the 1e-12 wavelength allocation."""

import logging

from _common import GAMMA_MODES, parser, systems

from pon200.io import ExperimentOptions, run_experiment


def main():
    p = parser(__doc__)
    p.add_argument("--threshold", type=float, default=1e-12)
    args = p.parse_args()
    for variant, cfg in systems(args):
        out = args.out / f"distance_{variant}"
        opts = ExperimentOptions(seed=args.seed, gamma_modes=GAMMA_MODES, workers=args.workers)
        m = run_experiment("distance-sweep", cfg, out, opts)
        logging.info("system %s: %s (%.0f s)", variant, out, m.wall_clock_s)
        for mode in GAMMA_MODES:
            alloc = args.out / f"allocation_{variant}_{mode}"
            run_experiment(
                "allocate", cfg, alloc,
                ExperimentOptions(
                    seed=args.seed, gamma_modes=(mode,), threshold=args.threshold,
                    table=str(out / "distance_sweep.csv"),
                ),
            )  # fmt: skip
            logging.info("allocation %s gamma %s: %s", variant, mode, alloc)


if __name__ == "__main__":
    main()
