#!/usr/bin/env python3
"""UISVD++ sensitivity to lambda, the number of latent factors and the number of epochs.

Each point is a full 5-repeat experiment at 80% training data with every
other setting at its default. Expect about 15 minutes per axis on ml-100k.

    python scripts/sweeps.py [--data ml-100k] [--axes lambda,k,epochs]
"""

import argparse
import sys

from uisvd import cli

GRID = {
    "lambda": "1e-4,1e-3,1e-2,1e-1,1,10",
    "k": "5,10,15,20,25,30,40,50",
    "epochs": "10,20,30,40,50,55,60,70",
}

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default="ml-100k")
    ap.add_argument("--axes", default="lambda,k,epochs")
    ap.add_argument("--repeats", default="5")
    ap.add_argument("--jobs", default="1")
    args = ap.parse_args()
    for axis in args.axes.split(","):
        code = cli.main([
            "sweep", "--data", args.data, "--axis", axis, "--values", GRID[axis],
            "--repeats", args.repeats, "--jobs", args.jobs, "--tag", f"sweep-{axis}",
        ])
        if code:
            sys.exit(code)
