import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import write_ml100k
from uisvd.analysis import (
    MERGED_GROUPS,
    CohortTopList,
    all_cohorts,
    cohort_csv,
    cohort_overlap,
    cohort_top,
    demographics,
    demographics_csv,
    overlap_pairs,
    popularity_csv,
    popularity_table,
    popularity_text,
)
from uisvd.dataio import load_ml100k


def tiny(tmp_path, ratings, users=None, items=None):
    users = users or [(u, 30, "M") for u in sorted({r[0] for r in ratings})]
    items = items or [(i, f"Film {i}", ["Drama"]) for i in sorted({r[1] for r in ratings})]
    return load_ml100k(write_ml100k(tmp_path, ratings, users, items))


def test_toy_popularity(tmp_path):
    ds = tiny(tmp_path, [(1, 1, 5), (2, 1, 5), (1, 2, 5)])
    a, b = popularity_table(ds)
    assert a.item_id == 1
    assert a.grade == pytest.approx(2 / 3) and a.unums == pytest.approx(2 / 3)
    assert a.popularity == pytest.approx(66.6667, abs=1e-4)
    assert b.popularity == pytest.approx(33.3333, abs=1e-4)


def test_single_item_is_everything(tmp_path):
    [only] = popularity_table(tiny(tmp_path, [(1, 7, 2), (2, 7, 4)]))
    assert only.popularity == pytest.approx(100.0)


def test_popularity_fractions_sum_to_one(toy):
    table = popularity_table(toy)
    assert sum(e.grade for e in table) == pytest.approx(1.0, abs=1e-12)
    assert sum(e.unums for e in table) == pytest.approx(1.0, abs=1e-12)
    assert all(0 <= e.popularity <= 100 for e in table)
    pops = [e.popularity for e in table]
    assert pops == sorted(pops, reverse=True)


def test_popularity_ties_by_item_id(tmp_path):
    ds = tiny(tmp_path, [(1, 9, 3), (1, 4, 3)])
    assert [e.item_id for e in popularity_table(ds)] == [4, 9]


def test_popularity_outputs(toy):
    table = popularity_table(toy)
    rows = list(csv.reader(io.StringIO(popularity_csv(table))))
    assert rows[0] == ["rank", "item_id", "title", "grade", "unums", "popularity"]
    assert len(rows) == 1 + toy.n_items
    assert "Popularity" in popularity_text(table, 3).splitlines()[0]


# ---------------------------------------------------------------- cohorts


def cohort_ds(tmp_path):
    users = [(1, 15, "F"), (2, 16, "M"), (3, 40, "M"), (4, 60, "F")]
    items = [(i, f"Film {i}", ["Drama"]) for i in range(1, 6)]
    ratings = [
        (1, 1, 5), (2, 1, 4), (1, 2, 5), (2, 3, 5), (2, 2, 4),
        (3, 4, 5), (3, 1, 1), (4, 5, 2), (4, 4, 3),
    ]
    return tiny(tmp_path, ratings, users, items)


def test_cohort_rankings(tmp_path):
    ds = cohort_ds(tmp_path)
    # bucket 0: item 1 -> 5+4, item 2 -> 5+4, item 3 -> 5; tie broken by id
    assert cohort_top(ds, 0, 5).ranked_items == ((1, 9.0), (2, 9.0), (3, 5.0))
    assert cohort_top(ds, 0, 5, ranking="count").item_ids == (1, 2, 3)
    assert cohort_top(ds, 0, 5, ranking="mean").item_ids == (3, 1, 2)
    assert cohort_top(ds, 0, 5, ranking="liked").item_ids == (1, 2, 3)
    assert cohort_top(ds, 3, 5).item_ids == (4, 1)
    assert cohort_top(ds, 0, 2).item_ids == (1, 2)


def test_cohort_exclude_and_empty(tmp_path, caplog):
    ds = cohort_ds(tmp_path)
    assert cohort_top(ds, 0, 5, exclude={1}).item_ids == (2, 3)
    assert cohort_top(ds, 0, 0).ranked_items == ()
    assert cohort_top(ds, 2, 5).ranked_items == ()
    assert "no ratings" in caplog.text
    with pytest.raises(ValueError):
        cohort_top(ds, 7, 5)
    with pytest.raises(ValueError):
        cohort_top(ds, 0, 5, ranking="median")


def test_merged_cohort(tmp_path):
    ds = cohort_ds(tmp_path)
    merged = cohort_top(ds, (0, 3), 5)
    assert merged.buckets == (0, 3) and merged.label == "<18+35-44"
    assert merged.ranked_items[0] == (1, 10.0)
    assert MERGED_GROUPS == ((0, 1, 2), (5, 6))


def test_cohort_scores_strictly_ordered(toy):
    for lst in all_cohorts(toy, n=5):
        keys = [(-s, i) for i, s in lst.ranked_items]
        assert keys == sorted(keys) and len(set(keys)) == len(keys)


def lists_of(*ids):
    return [CohortTopList((b,), tuple((i, 1.0) for i in items)) for b, items in enumerate(ids)]


def test_overlap_identical_and_disjoint():
    mat, common = cohort_overlap(lists_of([1, 2, 3], [1, 2, 3]))
    assert mat.tolist() == [[3, 3], [3, 3]] and common == {1, 2, 3}
    mat, common = cohort_overlap(lists_of([1, 2], [3, 4]))
    assert mat[0, 1] == 0 and common == frozenset()
    with pytest.raises(ValueError):
        cohort_overlap(lists_of([1]))


@settings(max_examples=50)
@given(st.lists(st.sets(st.integers(1, 15), max_size=8), min_size=2, max_size=5), st.sets(st.integers(1, 15)))
def test_exclusion_never_increases_overlap(sets, excluded):
    full = lists_of(*[sorted(s) for s in sets])
    cut = lists_of(*[sorted(s - excluded) for s in sets])
    m_full, c_full = cohort_overlap(full)
    m_cut, c_cut = cohort_overlap(cut)
    assert (m_cut <= m_full).all()
    assert c_cut <= c_full
    assert np.array_equal(m_full, m_full.T)


def test_overlap_pairs_and_csv(toy):
    lists = all_cohorts(toy, n=3)
    assert len(overlap_pairs(lists)) == 21
    rows = list(csv.reader(io.StringIO(cohort_csv(lists))))
    assert rows[0] == ["cohort", "rank", "item_id", "score"]


def test_demographics_single_user(tmp_path):
    ds = tiny(tmp_path, [(1, 1, 3)], users=[(1, 40, "F")])
    rows = demographics(ds)
    assert ("gender", "F", 1, 1.0) in rows
    assert ("age", "35-44", 1, 1.0) in rows
    by_family = {}
    for fam, _, _, share in rows:
        by_family[fam] = by_family.get(fam, 0) + share
    assert by_family == {"gender": 1.0, "age": 1.0}
    assert demographics_csv(rows).startswith("family,category,users,share\n")


# ---------------------------------------------------------------- real data goldens


def test_ml100k_demographics_golden(ml100k):
    ages = {c: n for fam, c, n, _ in demographics(ml100k) if fam == "age"}
    assert ages == {"<18": 36, "18-24": 198, "25-34": 310, "35-44": 194, "45-49": 80, "50-55": 73, "56+": 52}
    assert max(ages, key=ages.get) == "25-34"


def test_ml100k_popularity_top(ml100k):
    # independent pass over the raw file
    from conftest import ML100K_DIR

    sums, counts = {}, {}
    with open(ML100K_DIR / "u.data") as fh:
        for line in fh:
            _, item, r, _ = line.split("\t")
            sums[item] = sums.get(item, 0) + int(r)
            counts[item] = counts.get(item, 0) + 1
    total_sum, total_count = sum(sums.values()), sum(counts.values())
    star_wars = 50 * (sums["50"] / total_sum + counts["50"] / total_count)

    top = popularity_table(ml100k)[:10]
    assert top[0].item_id == 50 and top[0].title == "Star Wars (1977)"
    assert top[0].popularity == pytest.approx(star_wars, rel=1e-12)
    assert [e.item_id for e in top[:3]] == [50, 100, 181]


def test_ml100k_cohort_goldens(ml100k):
    lists = all_cohorts(ml100k)
    assert lists[0].item_ids[:3] == (288, 50, 181)
    assert [len(lst.item_ids) for lst in lists] == [20] * 7
    _, common = cohort_overlap(lists)
    assert common == {50, 100}
    popular = [e.item_id for e in popularity_table(ml100k)[:10]]
    excl = all_cohorts(ml100k, exclude=popular)
    assert excl[0].item_ids[:5] == (313, 121, 7, 300, 117)
    assert not set(popular) & set(excl[0].item_ids)
