"""Age-cohort preference study: popularity, per-cohort top lists and their overlap."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dataio import Dataset
from .features import AGE_LABELS, N_AGE_BUCKETS, age_to_bucket

logger = logging.getLogger(__name__)

RANKINGS = ("sum", "count", "mean", "liked")
LIKED_MIN_RATING = 4


@dataclass(frozen=True)
class PopularityEntry:
    item_id: int
    title: str
    grade: float  # item's share of the grand rating sum
    unums: float  # item's share of the rating count
    popularity: float  # percent

    @property
    def score(self) -> float:
        return self.popularity


def popularity_table(ds: Dataset) -> list[PopularityEntry]:
    """Every item with ``popularity = (grade / 2 + unums / 2) * 100``, most popular first."""
    if ds.n_ratings == 0:
        raise ValueError("popularity needs at least one rating")
    sums = np.bincount(ds.item_idx, weights=ds.rating, minlength=ds.n_items)
    counts = np.bincount(ds.item_idx, minlength=ds.n_items).astype(np.float64)
    grade = sums / sums.sum()
    unums = counts / counts.sum()
    pop = (0.5 * grade + 0.5 * unums) * 100.0
    order = np.lexsort((ds.item_ids, -pop))
    return [
        PopularityEntry(int(ds.item_ids[d]), ds.items[d].title, float(grade[d]), float(unums[d]), float(pop[d]))
        for d in order
    ]


@dataclass(frozen=True)
class CohortTopList:
    buckets: tuple[int, ...]
    ranked_items: tuple[tuple[int, float], ...]

    @property
    def bucket(self) -> int:
        return self.buckets[0]

    @property
    def item_ids(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.ranked_items)

    @property
    def label(self) -> str:
        return "+".join(AGE_LABELS[b] for b in self.buckets)


def user_buckets(ds: Dataset) -> np.ndarray:
    return np.array([age_to_bucket(int(a)) for a in ds.ages], dtype=np.int64)


def cohort_top(
    ds: Dataset, bucket, n: int = 20, exclude=(), ranking: str = "sum"
) -> CohortTopList:
    """Items ranked by the ratings they received from users in ``bucket``.

    ``bucket`` may be one bucket index or a collection of them (merged
    cohort). ``ranking`` picks the score: ``sum`` of rating values (default),
    rating ``count``, ``mean`` rating, or ``liked``, the number of ratings
    of 4 or 5. Ties go to the lower item id.
    """
    if ranking not in RANKINGS:
        raise ValueError(f"ranking must be one of {RANKINGS}")
    buckets = (bucket,) if np.isscalar(bucket) else tuple(sorted(set(bucket)))
    for b in buckets:
        if not 0 <= b < N_AGE_BUCKETS:
            raise ValueError(f"bucket must lie in [0, {N_AGE_BUCKETS - 1}], got {b}")
    if n <= 0:
        return CohortTopList(buckets, ())

    in_cohort = np.isin(user_buckets(ds), buckets)[ds.user_idx]
    if not in_cohort.any():
        logger.warning("age cohort %s has no ratings", buckets)
        return CohortTopList(buckets, ())
    items = ds.item_idx[in_cohort]
    sums = np.bincount(items, weights=ds.rating[in_cohort], minlength=ds.n_items)
    counts = np.bincount(items, minlength=ds.n_items).astype(np.float64)
    if ranking == "liked":
        liked = in_cohort & (ds.rating >= LIKED_MIN_RATING)
        score = np.bincount(ds.item_idx[liked], minlength=ds.n_items).astype(np.float64)
    elif ranking == "sum":
        score = sums
    elif ranking == "count":
        score = counts
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            score = np.where(counts > 0, sums / counts, 0.0)

    eligible = (counts > 0) & ~np.isin(ds.item_ids, list(exclude))
    cand = np.flatnonzero(eligible)
    order = cand[np.lexsort((ds.item_ids[cand], -score[cand]))][:n]
    return CohortTopList(buckets, tuple((int(ds.item_ids[d]), float(score[d])) for d in order))


MERGED_GROUPS = ((0, 1, 2), (5, 6))  # under 35 vs 50 and over


def all_cohorts(ds: Dataset, n: int = 20, exclude=(), ranking: str = "sum") -> list[CohortTopList]:
    return [cohort_top(ds, b, n, exclude, ranking) for b in range(N_AGE_BUCKETS)]


def cohort_overlap(lists: list[CohortTopList]) -> tuple[np.ndarray, frozenset[int]]:
    """Pairwise intersection sizes and the set of items common to every list."""
    if len(lists) < 2:
        raise ValueError("overlap needs at least two lists")
    sets = [set(lst.item_ids) for lst in lists]
    mat = np.array([[len(a & b) for b in sets] for a in sets], dtype=np.int64)
    return mat, frozenset(set.intersection(*sets))


def overlap_pairs(lists: list[CohortTopList]) -> list[tuple[str, str, int]]:
    return [(a.label, b.label, len(set(a.item_ids) & set(b.item_ids))) for a, b in combinations(lists, 2)]


def demographics(ds: Dataset) -> list[tuple[str, str, int, float]]:
    """``(family, category, users, share)`` rows for gender and age bucket; shares sum to 1 per family."""
    genders = Counter(u.gender for u in ds.users)
    ages = Counter(user_buckets(ds).tolist())
    total = ds.n_users
    rows = [("gender", g, genders[g], genders[g] / total) for g in sorted(genders)]
    rows += [("age", AGE_LABELS[b], ages.get(b, 0), ages.get(b, 0) / total) for b in range(N_AGE_BUCKETS)]
    return rows


# ---------------------------------------------------------------- output


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def popularity_csv(entries: list[PopularityEntry]) -> str:
    return _csv(
        ["rank", "item_id", "title", "grade", "unums", "popularity"],
        [(r, e.item_id, e.title, repr(e.grade), repr(e.unums), repr(e.popularity)) for r, e in enumerate(entries, 1)],
    )


def popularity_text(entries: list[PopularityEntry], top: int = 10) -> str:
    shown = entries[:top]
    width = max([len(e.title) for e in shown] + [5])
    lines = [f"{'rank':>4}  {'MovieID':>7}  {'Title':<{width}}  Popularity"]
    lines += [f"{r:>4}  {e.item_id:>7}  {e.title:<{width}}  {e.popularity:.4f}%" for r, e in enumerate(shown, 1)]
    return "\n".join(lines)


def cohort_csv(lists: list[CohortTopList]) -> str:
    rows = [
        (lst.label, rank, item, repr(score))
        for lst in lists
        for rank, (item, score) in enumerate(lst.ranked_items, 1)
    ]
    return _csv(["cohort", "rank", "item_id", "score"], rows)


def cohort_text(lists: list[CohortTopList]) -> str:
    width = max(len(lst.label) for lst in lists)
    return "\n".join(f"{lst.label:<{width}}  " + " ".join(f"{i:>4}" for i in lst.item_ids) for lst in lists)


def overlap_csv(lists: list[CohortTopList]) -> str:
    mat, common = cohort_overlap(lists)
    rows = [[lst.label, *row.tolist()] for lst, row in zip(lists, mat)]
    rows.append(["common_to_all", " ".join(str(i) for i in sorted(common))])
    return _csv(["cohort", *(lst.label for lst in lists)], rows)


def demographics_csv(rows) -> str:
    return _csv(["family", "category", "users", "share"], [(f, c, n, repr(s)) for f, c, n, s in rows])
