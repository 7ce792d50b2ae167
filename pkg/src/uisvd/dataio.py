"""MovieLens parsing, indexing and train/test splitting.

A :class:`Dataset` keeps ratings as parallel numpy arrays over *dense* user
and item indices. Profiles and index maps are shared between a dataset and
every view cut from it, so dense indices stay valid across splits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

ML100K_GENRES = (
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
    "Romance", "Sci-Fi", "Thriller", "War", "Western",
)
ML1M_GENRES = ML100K_GENRES[1:]
ML1M_AGE_CODES = frozenset({1, 18, 25, 35, 45, 50, 56})


class DataError(ValueError):
    """Raised for missing or malformed dataset files."""


@dataclass(frozen=True)
class RatingRecord:
    user_id: int
    item_id: int
    rating: int
    timestamp: int

    def __post_init__(self):
        if self.rating not in (1, 2, 3, 4, 5):
            raise DataError(f"rating {self.rating} outside [1,5]")
        if self.user_id < 1 or self.item_id < 1:
            raise DataError(f"ids must be >= 1, got user={self.user_id} item={self.item_id}")


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    age: int
    gender: str
    occupation: str
    zip: str

    def __post_init__(self):
        if self.age < 1:
            raise DataError(f"user {self.user_id}: age {self.age} < 1")
        if self.gender not in ("M", "F"):
            raise DataError(f"user {self.user_id}: gender {self.gender!r} not in M/F")


@dataclass(frozen=True)
class ItemProfile:
    item_id: int
    title: str
    genre_flags: tuple[bool, ...]


def _frozen(a, dtype) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Indexed rating collection.

    ``users``/``items`` are ordered by dense index; ``user_ids[d]`` is the
    external id of dense user ``d``. The rating arrays (``user_idx``,
    ``item_idx``, ``rating``, ``timestamp``) are aligned and read-only.
    """

    name: str
    users: tuple[UserProfile, ...]
    items: tuple[ItemProfile, ...]
    genres: tuple[str, ...]
    user_idx: np.ndarray
    item_idx: np.ndarray
    rating: np.ndarray
    timestamp: np.ndarray
    user_ids: np.ndarray = field(init=False)
    item_ids: np.ndarray = field(init=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "user_idx", _frozen(self.user_idx, np.int64))
        set_(self, "item_idx", _frozen(self.item_idx, np.int64))
        set_(self, "rating", _frozen(self.rating, np.float64))
        set_(self, "timestamp", _frozen(self.timestamp, np.int64))
        set_(self, "user_ids", _frozen([u.user_id for u in self.users], np.int64))
        set_(self, "item_ids", _frozen([i.item_id for i in self.items], np.int64))
        if not (len(self.user_idx) == len(self.item_idx) == len(self.rating) == len(self.timestamp)):
            raise DataError("rating arrays have mismatched lengths")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_ratings(self) -> int:
        return len(self.rating)

    @property
    def sparsity(self) -> float:
        return 1.0 - self.n_ratings / (self.n_users * self.n_items)

    @cached_property
    def user_index(self) -> dict[int, int]:
        return {int(e): d for d, e in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[int, int]:
        return {int(e): d for d, e in enumerate(self.item_ids)}

    @cached_property
    def genre_matrix(self) -> np.ndarray:
        """Boolean ``n_items x len(genres)`` matrix of genre flags."""
        m = np.array([it.genre_flags for it in self.items], dtype=bool).reshape(self.n_items, len(self.genres))
        m.setflags(write=False)
        return m

    @cached_property
    def ages(self) -> np.ndarray:
        return _frozen([u.age for u in self.users], np.int64)

    @cached_property
    def rated_items_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """N(u) for every dense user as CSR ``(indptr, indices)``, indices sorted."""
        order = np.lexsort((self.item_idx, self.user_idx))
        indices = _frozen(self.item_idx[order], np.int64)
        counts = np.bincount(self.user_idx, minlength=self.n_users)
        indptr = np.zeros(self.n_users + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indptr.setflags(write=False)
        return indptr, indices

    def rated_items(self, user: int) -> np.ndarray:
        """N(u) for dense user ``user``."""
        indptr, indices = self.rated_items_csr
        return indices[indptr[user]:indptr[user + 1]]

    def mean_rating(self) -> float:
        if self.n_ratings == 0:
            raise DataError("mean of an empty rating set")
        return float(self.rating.mean())

    def records(self):
        for u, i, r, t in zip(self.user_idx, self.item_idx, self.rating, self.timestamp):
            yield RatingRecord(int(self.user_ids[u]), int(self.item_ids[i]), int(r), int(t))

    def view(self, rows: np.ndarray, name: str | None = None) -> Dataset:
        """Dataset restricted to the given rating rows; profiles and indices are shared."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            name=name or self.name,
            users=self.users,
            items=self.items,
            genres=self.genres,
            user_idx=self.user_idx[rows],
            item_idx=self.item_idx[rows],
            rating=self.rating[rows],
            timestamp=self.timestamp[rows],
        )


@dataclass(frozen=True, eq=False)
class Split:
    train: Dataset
    test: Dataset
    ratio: float
    seed: int
    train_rows: np.ndarray
    test_rows: np.ndarray


def random_split(ds: Dataset, ratio: float, seed: int) -> Split:
    """Shuffle-then-cut split: ``round(ratio * N)`` ratings go to train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    n = ds.n_ratings
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(ratio * n))
    train_rows = np.sort(perm[:cut])
    test_rows = np.sort(perm[cut:])
    return Split(
        train=ds.view(train_rows, name=f"{ds.name}/train"),
        test=ds.view(test_rows, name=f"{ds.name}/test"),
        ratio=ratio,
        seed=seed,
        train_rows=_frozen(train_rows, np.int64),
        test_rows=_frozen(test_rows, np.int64),
    )


# ---------------------------------------------------------------- parsing


def _require(path: Path) -> Path:
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    return path


def _int(text: str, where: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{where}: malformed {what} {text!r}") from None


def _read_lines(path: Path, encoding: str = "latin-1"):
    with open(_require(path), "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.decode(encoding).rstrip("\r\n")
            if line.strip():
                yield f"{path.name}:{lineno}", line


def _parse_rating_line(fields: list[str], where: str) -> RatingRecord:
    if len(fields) != 4:
        raise DataError(f"{where}: expected 4 fields, got {len(fields)}")
    u, i, r, t = (_int(f, where, n) for f, n in zip(fields, ("user", "item", "rating", "timestamp")))
    try:
        return RatingRecord(u, i, r, t)
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from None


def parse_rating_line(line: str, sep: str = "\t") -> RatingRecord:
    """Parse one ``user<sep>item<sep>rating<sep>timestamp`` line."""
    return _parse_rating_line(line.rstrip("\r\n").split(sep), "<line>")


def _read_ratings(path: Path, sep: str) -> list[RatingRecord]:
    records = [_parse_rating_line(line.split(sep), where) for where, line in _read_lines(path)]
    if not records:
        raise DataError(f"{path}: no ratings")
    return records


def _assemble(
    name: str,
    records: list[RatingRecord],
    users: dict[int, UserProfile],
    items: dict[int, ItemProfile],
    genres: tuple[str, ...],
) -> Dataset:
    latest: dict[tuple[int, int], RatingRecord] = {}
    for rec in records:
        key = (rec.user_id, rec.item_id)
        if key in latest:
            logger.warning("duplicate rating for user %d item %d; keeping the later line", *key)
            del latest[key]  # re-insert so file order reflects the kept occurrence
        latest[key] = rec
    kept = list(latest.values())

    rated_users = sorted({r.user_id for r in kept})
    rated_items = sorted({r.item_id for r in kept})
    if missing := [u for u in rated_users if u not in users]:
        raise DataError(f"{name}: ratings reference users absent from the user file: {missing[:5]}")
    if missing := [i for i in rated_items if i not in items]:
        raise DataError(f"{name}: ratings reference movies absent from the movie file: {missing[:5]}")

    uidx = {u: d for d, u in enumerate(rated_users)}
    iidx = {i: d for d, i in enumerate(rated_items)}
    return Dataset(
        name=name,
        users=tuple(users[u] for u in rated_users),
        items=tuple(items[i] for i in rated_items),
        genres=genres,
        user_idx=np.fromiter((uidx[r.user_id] for r in kept), np.int64, len(kept)),
        item_idx=np.fromiter((iidx[r.item_id] for r in kept), np.int64, len(kept)),
        rating=np.fromiter((r.rating for r in kept), np.float64, len(kept)),
        timestamp=np.fromiter((r.timestamp for r in kept), np.int64, len(kept)),
    )


def _user_profile(fields: list[str], where: str, gender_first: bool = False) -> UserProfile:
    """ml-100k orders user fields id|age|gender|..., ml-1m id::gender::age::..."""
    if len(fields) != 5:
        raise DataError(f"{where}: expected 5 fields, got {len(fields)}")
    uid, a, g, occupation, zip_ = fields
    if gender_first:
        a, g = g, a
    user_id, age = _int(uid, where, "user id"), _int(a, where, "age")
    try:
        return UserProfile(user_id, age, g, occupation, zip_)
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from None


def load_ml100k(directory: str | Path) -> Dataset:
    """Load ``u.data``, ``u.item`` and ``u.user`` from an ml-100k directory."""
    d = Path(directory)
    for fname in ("u.data", "u.item", "u.user"):
        _require(d / fname)

    users = {}
    for where, line in _read_lines(d / "u.user"):
        p = _user_profile(line.split("|"), where)
        users[p.user_id] = p

    items = {}
    n_genres = len(ML100K_GENRES)
    for where, line in _read_lines(d / "u.item"):
        f = line.split("|")
        if len(f) != 5 + n_genres:
            raise DataError(f"{where}: expected {5 + n_genres} fields, got {len(f)}")
        if any(flag not in ("0", "1") for flag in f[5:]):
            raise DataError(f"{where}: genre flags must be 0/1")
        iid = _int(f[0], where, "movie id")
        items[iid] = ItemProfile(iid, f[1], tuple(flag == "1" for flag in f[5:]))

    return _assemble("ml-100k", _read_ratings(d / "u.data", "\t"), users, items, ML100K_GENRES)


def load_ml1m(directory: str | Path) -> Dataset:
    """Load ``ratings.dat``, ``movies.dat`` and ``users.dat`` (``::``-separated)."""
    d = Path(directory)
    for fname in ("ratings.dat", "movies.dat", "users.dat"):
        _require(d / fname)

    users = {}
    for where, line in _read_lines(d / "users.dat"):
        p = _user_profile(line.split("::"), where, gender_first=True)
        if p.age not in ML1M_AGE_CODES:
            raise DataError(f"{where}: age code {p.age} not in {sorted(ML1M_AGE_CODES)}")
        users[p.user_id] = p

    vocab = {g: k for k, g in enumerate(ML1M_GENRES)}
    items = {}
    for where, line in _read_lines(d / "movies.dat"):
        f = line.split("::")
        if len(f) != 3:
            raise DataError(f"{where}: expected 3 fields, got {len(f)}")
        flags = [False] * len(ML1M_GENRES)
        for g in filter(None, f[2].split("|")):
            if g not in vocab:
                raise DataError(f"{where}: unknown genre {g!r}")
            flags[vocab[g]] = True
        iid = _int(f[0], where, "movie id")
        items[iid] = ItemProfile(iid, f[1], tuple(flags))

    return _assemble("ml-1m", _read_ratings(d / "ratings.dat", "::"), users, items, ML1M_GENRES)


def detect_flavor(directory: str | Path) -> str:
    d = Path(directory)
    if (d / "u.data").exists():
        return "ml-100k"
    if (d / "ratings.dat").exists():
        return "ml-1m"
    raise DataError(f"{d}: neither u.data (ml-100k) nor ratings.dat (ml-1m) found")


def load(directory: str | Path, flavor: str | None = None) -> Dataset:
    flavor = flavor or detect_flavor(directory)
    loaders = {"ml-100k": load_ml100k, "ml-1m": load_ml1m}
    if flavor not in loaders:
        raise DataError(f"unknown dataset flavor {flavor!r}")
    return loaders[flavor](directory)
