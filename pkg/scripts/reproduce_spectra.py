"""Optical spectra at one splitter output, with and without the Kerr effect."""

import logging

from _common import GAMMA_MODES, parser, systems

from pon200.io import ExperimentOptions, run_experiment


def main():
    p = parser(__doc__)
    p.add_argument("--rbw", type=float, default=0.01, help="resolution bandwidth [nm]")
    args = p.parse_args()
    for variant, cfg in systems(args):
        for mode in GAMMA_MODES:
            out = args.out / f"spectrum_{variant}_{mode}"
            opts = ExperimentOptions(seed=args.seed, gamma_modes=(mode,), resolution_bandwidth_nm=args.rbw)
            m = run_experiment("spectrum", cfg, out, opts)
            logging.info("system %s gamma %s: %s (%.0f s)", variant, mode, out, m.wall_clock_s)


if __name__ == "__main__":
    main()
