#!/usr/bin/env python3
"""Start a demo gateway on 127.0.0.1:8780 with a small two-site scenario and
seeded history, suitable for driving the CLI `submit` command or the frontend
dashboard. Ctrl-C to stop.
"""

import sys
import tempfile

from gridhelm.cli import main as cli_main

DEMO_SCENARIO = """\
# Two sites: A is free, B carries competing load and costs double.
site A slots=2 load=0:0.0 cost=1.0 hb=1
site B slots=2 load=0:1.0 cost=2.0 hb=1
link A B 10000000
link B A 10000000
"""


def main() -> int:
    with tempfile.NamedTemporaryFile("w", suffix=".scenario", delete=False) as fh:
        fh.write(DEMO_SCENARIO)
        path = fh.name
    return cli_main(["serve", "--addr", "127.0.0.1:8780", "--scenario", path])


if __name__ == "__main__":
    sys.exit(main())
