#!/usr/bin/env python3
"""Generate a seeded synthetic accounting trace and run the runtime-estimator
evaluation protocol over it, writing per-case results to results/runtime.csv.

Usage: python3 scripts/run_runtime_experiment.py [--sigma 0.10] [--seed 0]
"""

import argparse
import pathlib
import sys

from gridhelm.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigma", type=float, default=0.0,
                    help="multiplicative runtime noise on the generated trace")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    hist, test, out = outdir / "history.csv", outdir / "test.csv", outdir / "runtime.csv"

    rc = cli_main(["gen-trace", "--history", str(hist), "--test", str(test),
                   "--sigma", str(args.sigma), "--seed", str(args.seed)])
    if rc:
        return rc
    rc = cli_main(["experiment-runtime", str(hist), str(test), "--out", str(out)])
    print(f"per-case results written to {out}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
