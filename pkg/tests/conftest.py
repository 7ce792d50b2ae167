import os
from pathlib import Path

import numpy as np
import pytest

from uisvd.dataio import ML100K_GENRES, ML1M_GENRES, load_ml1m, load_ml100k

DATA_ROOT = Path(os.environ.get("UISVD_DATA", Path(__file__).resolve().parents[1] / "data"))
ML100K_DIR = Path(os.environ.get("UISVD_ML100K", DATA_ROOT / "ml-100k"))
ML1M_DIR = Path(os.environ.get("UISVD_ML1M", DATA_ROOT / "ml-1m"))

# 5 users x 5 items; ages spread over several buckets, items with 1-3 genres
TOY_USERS = [(1, 15, "F"), (2, 22, "M"), (3, 30, "F"), (4, 47, "M"), (5, 60, "M")]
TOY_ITEMS = [
    (1, "Alpha (1990)", ["Action", "Comedy"]),
    (2, "Beta (1991)", ["Drama"]),
    (3, "Gamma (1992)", ["Action", "Thriller", "Sci-Fi"]),
    (4, "Delta (1993)", ["Comedy", "Romance"]),
    (5, "Epsilon (1994)", ["Horror"]),
]
TOY_RATINGS = [
    (1, 1, 5), (1, 2, 3), (1, 4, 4),
    (2, 1, 4), (2, 3, 5), (2, 5, 1),
    (3, 2, 4), (3, 3, 4), (3, 4, 2), (3, 5, 3),
    (4, 1, 3), (4, 4, 5),
    (5, 2, 5), (5, 3, 2), (5, 5, 4),
]


def write_ml100k(directory, ratings, users, items):
    """Write a minimal ml-100k style directory. ``items`` are (id, title, genre names)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "u.data", "w") as fh:
        for n, (u, i, r) in enumerate(ratings):
            fh.write(f"{u}\t{i}\t{r}\t{881250949 + n}\n")
    with open(d / "u.user", "w") as fh:
        for u, age, g in users:
            fh.write(f"{u}|{age}|{g}|other|00000\n")
    with open(d / "u.item", "w", encoding="latin-1") as fh:
        for i, title, names in items:
            flags = ["1" if g in names else "0" for g in ML100K_GENRES]
            fh.write("|".join([str(i), title, "01-Jan-1995", "", "http://x"] + flags) + "\n")
    return d


def write_ml1m(directory, ratings, users, items):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "ratings.dat", "w") as fh:
        for n, (u, i, r) in enumerate(ratings):
            fh.write(f"{u}::{i}::{r}::{978300760 + n}\n")
    with open(d / "users.dat", "w") as fh:
        for u, age, g in users:
            fh.write(f"{u}::{g}::{age}::10::48067\n")
    with open(d / "movies.dat", "w", encoding="latin-1") as fh:
        for i, title, names in items:
            assert all(g in ML1M_GENRES for g in names)
            fh.write(f"{i}::{title}::{'|'.join(names)}\n")
    return d


@pytest.fixture
def toy_dir(tmp_path):
    return write_ml100k(tmp_path / "toy", TOY_RATINGS, TOY_USERS, TOY_ITEMS)


@pytest.fixture
def toy(toy_dir):
    return load_ml100k(toy_dir)


@pytest.fixture(scope="session")
def ml100k():
    if not (ML100K_DIR / "u.data").is_file():
        pytest.skip(f"ml-100k not found at {ML100K_DIR}; run scripts/fetch_ml100k.py")
    return load_ml100k(ML100K_DIR)


@pytest.fixture(scope="session")
def ml1m():
    if not (ML1M_DIR / "ratings.dat").is_file():
        pytest.skip(f"ml-1m not found at {ML1M_DIR}")
    return load_ml1m(ML1M_DIR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
