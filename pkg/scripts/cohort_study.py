#!/usr/bin/env python3
"""Popularity table, per-age-cohort top-20 lists and their overlaps.

Writes one run per cohort ranking so the rankings can be compared side by
side (``sum`` is the default; ``liked`` counts ratings of 4 and 5).

    python scripts/cohort_study.py [--data ml-100k]
"""

import argparse
import sys

from uisvd import cli
from uisvd.analysis import RANKINGS

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default="ml-100k")
    args = ap.parse_args()
    for ranking in RANKINGS:
        code = cli.main(["analyze", "--data", args.data, "--top", "10", "--ranking", ranking, "--tag", ranking])
        if code:
            sys.exit(code)
