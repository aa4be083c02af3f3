"""Shared argument handling for the reproduction scripts."""

import argparse
import logging
from pathlib import Path

from pon200.scenarios import build_system

GAMMA_MODES = ("off", "default")


def parser(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", type=Path, default=Path("results"), help="output root")
    p.add_argument("--variants", default="A,B", help="comma list of systems")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    return p


def systems(args):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for v in args.variants.split(","):
        yield v.strip(), build_system(v.strip())
