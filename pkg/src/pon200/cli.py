"""``pon200`` command line front end.

Errors go to stderr as one JSON line ``{"error": ..., "type": ...}`` and the
process exits nonzero (2 for usage, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .core import ConfigError
from .io import KINDS, ExperimentOptions, parse_config, run_experiment
from .scenarios import PAPER_BANDWIDTHS, build_system_a


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _gamma_modes(text):
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    for m in modes:
        if m not in ("off", "default"):
            try:
                float(m)
            except ValueError:
                raise argparse.ArgumentTypeError(f"gamma must be off, default or a number, got {m!r}") from None
    return modes


def _subareas(text):
    out = []
    for item in text.split(","):
        parts = item.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"subarea must be k:distance_km:users, got {item!r}")
        out.append((int(parts[0]), float(parts[1]), int(parts[2])))
    return tuple(out)


def build_parser():
    p = _Parser(prog="pon200", description="200G PON waveform simulator and planner.")
    p.add_argument("kind", choices=KINDS, help="experiment to run")
    p.add_argument("--config", help="JSON config (default: System A)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="noise seed (default: config seed)")
    p.add_argument("--distances", type=_floats, help="total OLT-ONT distances [km], comma separated")
    p.add_argument("--bandwidths", type=_floats, default=PAPER_BANDWIDTHS, help="mux bandwidths [nm]")
    p.add_argument("--order", type=int, default=1, help="mux Bessel order")
    p.add_argument(
        "--gamma", type=_gamma_modes, default=("default",),
        help="off, default, a value in 1/(W km), or a comma list such as off,default",
    )  # fmt: skip
    p.add_argument("--threshold", type=float, default=1e-12, help="BER threshold for allocate")
    p.add_argument("--subareas", type=_subareas, help="allocate: k:distance_km:users,...")
    p.add_argument("--table", help="allocate: existing distance-sweep CSV")
    p.add_argument("--rbw", type=float, default=0.01, help="spectrum resolution bandwidth [nm]")
    p.add_argument("--direction", choices=("downstream", "upstream"), default="downstream")
    p.add_argument("--noiseless", action="store_true", help="disable every noise source")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(exc, code):
    print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = parse_config(args.config) if args.config else build_system_a()
        opts = ExperimentOptions(
            seed=args.seed,
            distances=args.distances,
            bandwidths=args.bandwidths,
            order=args.order,
            gamma_modes=args.gamma,
            threshold=args.threshold,
            subareas=args.subareas,
            table=args.table,
            resolution_bandwidth_nm=args.rbw,
            direction=args.direction,
            noiseless=args.noiseless,
            workers=args.workers,
        )
        manifest = run_experiment(args.kind, config, args.out, opts)
    except (ConfigError, ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        return _fail(exc, 1)
    print(json.dumps({"kind": manifest.kind, "outputs": list(manifest.outputs), "out": args.out}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
