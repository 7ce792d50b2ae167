#!/usr/bin/env python3
"""Bias_SVD, PMF (MAP), SVD++ and UISVD++ at 90/80/50% training data, 5 repeats each.

Runs every dataset found under ./data (or $UISVD_DATA). Rows for methods not
implemented here are appended from the bundled published numbers and flagged.

    python scripts/comparison_table.py [--jobs N] [--repeats 5]
"""

import argparse
import os
import sys
from pathlib import Path

from uisvd import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", default="5")
    ap.add_argument("--jobs", default="1")
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    root = Path(os.environ.get(cli.DATA_ENV, "data"))
    found = [name for name in ("ml-100k", "ml-1m") if (root / name).is_dir()]
    if not found:
        print(f"no datasets under {root}", file=sys.stderr)
        return 2
    for name in found:
        code = cli.main([
            "evaluate", "--data", name, "--ratios", "0.9,0.8,0.5", "--repeats", args.repeats,
            "--jobs", args.jobs, "--out", args.out, "--tag", "comparison",
        ])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
