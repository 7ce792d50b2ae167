"""Age buckets and genre attributes, and their encodings.

Ages fall into seven cohorts with half-open lower bounds, so the ml-1m age
codes (1, 18, 25, 35, 45, 50, 56) each land in their own bucket.
"""

from __future__ import annotations

from bisect import bisect_right
from enum import Enum

import numpy as np

AGE_BOUNDARIES = (18, 25, 35, 45, 50, 56)
AGE_LABELS = ("<18", "18-24", "25-34", "35-44", "45-49", "50-55", "56+")
N_AGE_BUCKETS = len(AGE_LABELS)


class AgeEncoding(str, Enum):
    ONEHOT = "onehot"
    CUMULATIVE = "cumulative"


def age_to_bucket(age: int) -> int:
    if age < 1:
        raise ValueError(f"age must be >= 1, got {age}")
    return bisect_right(AGE_BOUNDARIES, age)


def encode_age(bucket: int, mode: AgeEncoding | str = AgeEncoding.ONEHOT) -> np.ndarray:
    """Length-7 bit vector; one-hot sets ``bucket``, cumulative sets ``0..bucket``."""
    if not 0 <= bucket < N_AGE_BUCKETS:
        raise ValueError(f"bucket must lie in [0, {N_AGE_BUCKETS - 1}], got {bucket}")
    bits = np.zeros(N_AGE_BUCKETS, dtype=np.int8)
    if AgeEncoding(mode) is AgeEncoding.ONEHOT:
        bits[bucket] = 1
    else:
        bits[: bucket + 1] = 1
    return bits


def bits_to_str(bits) -> str:
    return "".join(str(int(b)) for b in bits)


def bucket_attributes(bucket: int, mode: AgeEncoding | str = AgeEncoding.ONEHOT) -> tuple[int, ...]:
    return tuple(int(a) for a in np.flatnonzero(encode_age(bucket, mode)))


def active_age_attributes(age: int, mode: AgeEncoding | str = AgeEncoding.ONEHOT) -> tuple[int, ...]:
    """Indices of the age-attribute rows averaged into the user's age profile."""
    return bucket_attributes(age_to_bucket(age), mode)


def active_genre_attributes(flags) -> tuple[int, ...]:
    return tuple(int(g) for g in np.flatnonzero(np.asarray(flags, dtype=bool)))


def genre_flags_from_names(names, vocabulary) -> np.ndarray:
    lookup = {g.lower(): k for k, g in enumerate(vocabulary)}
    flags = np.zeros(len(vocabulary), dtype=bool)
    for name in names:
        key = name.strip().lower()
        if key not in lookup:
            raise ValueError(f"unknown genre {name!r}; known: {', '.join(vocabulary)}")
        flags[lookup[key]] = True
    return flags


def _csr(rows: list[tuple[int, ...]]) -> tuple[np.ndarray, np.ndarray]:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rows], out=indptr[1:])
    indices = np.fromiter((a for r in rows for a in r), dtype=np.int64, count=int(indptr[-1]))
    return indptr, indices


def age_membership(buckets, mode: AgeEncoding | str) -> tuple[np.ndarray, np.ndarray]:
    """CSR of active age attributes per user; a bucket of -1 means no age (empty row)."""
    return _csr([bucket_attributes(int(b), mode) if b >= 0 else () for b in buckets])


def genre_membership(genre_matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _csr([active_genre_attributes(row) for row in genre_matrix])
