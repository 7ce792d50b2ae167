#!/usr/bin/env python3
"""Rebuild the MovieLens-100K files (u.data, u.item, u.user) in their original layout.

grouplens.org is not always reachable from build machines. The pytorch-widedeep
wheel on PyPI ships the full ml-100k tables as parquet; this script pulls that
wheel with pip and writes the three raw files the loaders expect.

    python scripts/fetch_ml100k.py --out data/ml-100k
"""

import argparse
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd

WHEEL_SPEC = "pytorch-widedeep==1.7.0"
PARQUET_DIR = "pytorch_widedeep/datasets/data/"


def _download_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", WHEEL_SPEC, "-d", str(dest)],
        check=True,
    )
    (wheel,) = dest.glob("pytorch_widedeep-*.whl")
    return wheel


def _read(zf: zipfile.ZipFile, table: str) -> pd.DataFrame:
    raw = zf.read(f"{PARQUET_DIR}MovieLens100k_{table}.parquet.brotli")
    return pd.read_parquet(io.BytesIO(raw))


def _field(value) -> str:
    if value is None or (isinstance(value, float) and value != value):
        return ""
    return str(value)


def write_ml100k(wheel: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        data, items, users = (_read(zf, t) for t in ("data", "items", "users"))

    with open(out / "u.data", "w", newline="\n") as fh:
        for row in data.itertuples(index=False):
            fh.write(f"{row.user_id}\t{row.movie_id}\t{row.rating}\t{row.timestamp}\n")

    genre_cols = list(items.columns[5:])
    with open(out / "u.item", "w", encoding="latin-1", newline="\n") as fh:
        for row in items.itertuples(index=False, name=None):
            head = [_field(v) for v in row[:5]]
            flags = [str(int(v)) for v in row[5:]]
            fh.write("|".join(head + flags) + "\n")

    with open(out / "u.genre", "w", newline="\n") as fh:
        for idx, name in enumerate(genre_cols):
            fh.write(f"{name}|{idx}\n")

    with open(out / "u.user", "w", newline="\n") as fh:
        for row in users.itertuples(index=False):
            fh.write(f"{row.user_id}|{row.age}|{row.gender}|{row.occupation}|{row.zip_code}\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("data/ml-100k"))
    parser.add_argument("--wheel", type=Path, help="use an already downloaded pytorch-widedeep wheel")
    args = parser.parse_args(argv)

    if args.wheel is not None:
        write_ml100k(args.wheel, args.out)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            write_ml100k(_download_wheel(Path(tmp)), args.out)
    print(f"wrote {args.out}/u.data, u.item, u.user, u.genre")
    return 0


if __name__ == "__main__":
    sys.exit(main())
