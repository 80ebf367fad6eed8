#!/usr/bin/env python3
"""Run the two-site migration timeline (stay-put vs optimizer-migrated vs
free-CPU reference), once plain and once with checkpointing, writing
results/migration.csv and results/migration_ckpt.csv.

Usage: python3 scripts/run_migration_experiment.py
"""

import argparse
import pathlib
import sys

from gridhelm.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results")
    args = ap.parse_args()

    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rc = cli_main(["experiment-migration", "--out", str(outdir / "migration.csv")])
    if rc:
        return rc
    rc = cli_main(["experiment-migration", "--checkpointable",
                   "--out", str(outdir / "migration_ckpt.csv")])
    print(f"timelines written to {outdir / 'migration.csv'} and {outdir / 'migration_ckpt.csv'}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
