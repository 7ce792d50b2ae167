#!/usr/bin/env python3
"""SVD++ / USVD++ / ISVD++ / UISVD++ on shared 80/20 splits, RMSE and MAE.

    python scripts/ablation.py [--data ml-100k] [--repeats 5]
"""

import argparse
import sys

from uisvd import cli

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default="ml-100k")
    ap.add_argument("--repeats", default="5")
    ap.add_argument("--jobs", default="1")
    args = ap.parse_args()
    sys.exit(cli.main([
        "ablate", "--data", args.data, "--ratio", "0.8", "--repeats", args.repeats,
        "--jobs", args.jobs, "--tag", "ablation",
    ]))
