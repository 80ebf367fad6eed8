#!/usr/bin/env python3
"""Run the concurrent-client latency sweep against a self-hosted demo gateway
(or an external one with --gateway), writing results/load.csv.

Usage: python3 scripts/run_load_experiment.py [--sweep 1,5,10,25,50] [--requests 100]
"""

import argparse
import pathlib
import sys

from gridhelm.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sweep", default="1,5,10,25,50")
    ap.add_argument("--requests", type=int, default=100)
    ap.add_argument("--gateway", default=None)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    argv = ["experiment-load", "--sweep", args.sweep, "--requests", str(args.requests),
            "--out", str(outdir / "load.csv")]
    if args.gateway:
        argv += ["--gateway", args.gateway]
    rc = cli_main(argv)
    print(f"sweep results written to {outdir / 'load.csv'}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
