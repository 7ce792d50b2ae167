"""Parameters, hyperparameters and rating prediction for every model variant.

All variants share one predictor::

    r = mu + b_u + b_i + <p_u + alpha * p_a + beta * p_j,  q_i + q_t>

where ``p_a`` averages the user's active age-attribute rows, ``p_j`` is the
``|N(u)|^-1/2``-scaled sum of implicit-feedback rows over the items the user
rated in training, and ``q_t`` averages the item's genre-attribute rows. A
variant switches terms on or off; see :class:`Variant`.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dataio import Dataset
from .features import (
    N_AGE_BUCKETS,
    AgeEncoding,
    age_membership,
    age_to_bucket,
    genre_flags_from_names,
    genre_membership,
)


class Variant(str, Enum):
    BIASSVD = "biassvd"
    MF = "mf"
    SVDPP = "svdpp"
    USVDPP = "usvdpp"
    ISVDPP = "isvdpp"
    UISVDPP = "uisvdpp"

    @property
    def uses_bias(self) -> bool:
        return self is not Variant.MF

    @property
    def uses_implicit(self) -> bool:
        return self in (Variant.SVDPP, Variant.USVDPP, Variant.ISVDPP, Variant.UISVDPP)

    @property
    def uses_age(self) -> bool:
        return self in (Variant.USVDPP, Variant.UISVDPP)

    @property
    def uses_genre(self) -> bool:
        return self in (Variant.ISVDPP, Variant.UISVDPP)

    @property
    def label(self) -> str:
        return {
            Variant.BIASSVD: "Bias_SVD",
            Variant.MF: "PMF (MAP)",
            Variant.SVDPP: "SVD++",
            Variant.USVDPP: "USVD++",
            Variant.ISVDPP: "ISVD++",
            Variant.UISVDPP: "UISVD++",
        }[self]


class AttrNorm(str, Enum):
    ACTIVE = "active"  # divide by the entity's own attribute count
    GLOBAL = "global"  # divide by the vocabulary size (7 ages, |genres|)


@dataclass(frozen=True)
class HyperParams:
    k: int = 25
    gamma: float = 0.01
    lam: float = 0.1
    alpha: float = 0.5
    beta: float = 0.5
    epochs: int = 55
    seed: int = 0
    variant: Variant = Variant.UISVDPP
    age_encoding: AgeEncoding = AgeEncoding.ONEHOT
    attr_norm: AttrNorm = AttrNorm.ACTIVE
    init_std: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "age_encoding", AgeEncoding(self.age_encoding))
        object.__setattr__(self, "attr_norm", AttrNorm(self.attr_norm))
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.alpha <= 1.0 or abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValueError(f"need alpha in [0,1] and alpha + beta = 1, got {self.alpha}, {self.beta}")

    # A block whose mixing weight is zero cannot affect predictions, so it is
    # neither trained nor regularized.
    @property
    def use_bias(self) -> bool:
        return self.variant.uses_bias

    @property
    def use_implicit(self) -> bool:
        return self.variant.uses_implicit and self.beta != 0.0

    @property
    def use_age(self) -> bool:
        return self.variant.uses_age and self.alpha != 0.0

    @property
    def use_genre(self) -> bool:
        return self.variant.uses_genre

    def replace(self, **changes) -> HyperParams:
        if "alpha" in changes and "beta" not in changes:
            changes["beta"] = 1.0 - changes["alpha"]
        elif "beta" in changes and "alpha" not in changes:
            changes["alpha"] = 1.0 - changes["beta"]
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("variant", "age_encoding", "attr_norm"):
            d[key] = d[key].value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> HyperParams:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def feature_only(hp: HyperParams) -> HyperParams:
    """The attribute-only predictor (no implicit feedback): UISVD++ at alpha=1, beta=0."""
    return hp.replace(variant=Variant.UISVDPP, alpha=1.0, beta=0.0)


def defaults_for(flavor: str) -> HyperParams:
    if flavor == "ml-1m":
        return HyperParams(k=20, epochs=50)
    return HyperParams()


@dataclass
class ModelParams:
    mu: float
    b_user: np.ndarray
    b_item: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    Y_impl: np.ndarray
    Y_age: np.ndarray
    Y_genre: np.ndarray

    BLOCKS = ("b_user", "b_item", "P", "Q", "Y_impl", "Y_age", "Y_genre")

    @property
    def k(self) -> int:
        return self.P.shape[1]

    def copy(self) -> ModelParams:
        return ModelParams(self.mu, *(getattr(self, b).copy() for b in self.BLOCKS))

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.mu)) and all(np.isfinite(getattr(self, b)).all() for b in self.BLOCKS)

    def equals(self, other: ModelParams) -> bool:
        """Bitwise equality of every parameter."""
        return np.array_equal(np.float64(self.mu), np.float64(other.mu)) and all(
            getattr(self, b).shape == getattr(other, b).shape
            and getattr(self, b).tobytes() == getattr(other, b).tobytes()
            for b in self.BLOCKS
        )


@dataclass(frozen=True, eq=False)
class SideInfo:
    """Everything besides the parameters that prediction needs.

    Index maps, each user's implicit-feedback set N(u) (from training data),
    age buckets and genre flags. Built once from the training view and saved
    with the model, so a loaded model predicts exactly as the fitted one did.
    """

    user_ids: np.ndarray
    item_ids: np.ndarray
    genres: tuple[str, ...]
    user_buckets: np.ndarray  # -1 when the user has no age
    item_genres: np.ndarray  # bool, n_items x len(genres)
    rated_indptr: np.ndarray
    rated_indices: np.ndarray
    user_index: dict = field(init=False, repr=False)
    item_index: dict = field(init=False, repr=False)
    _kernel_cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "user_index", {int(e): d for d, e in enumerate(self.user_ids)})
        object.__setattr__(self, "item_index", {int(e): d for d, e in enumerate(self.item_ids)})

    @classmethod
    def from_dataset(cls, train: Dataset) -> SideInfo:
        indptr, indices = train.rated_items_csr
        return cls(
            user_ids=np.asarray(train.user_ids),
            item_ids=np.asarray(train.item_ids),
            genres=tuple(train.genres),
            user_buckets=np.array([age_to_bucket(int(a)) for a in train.ages], dtype=np.int64),
            item_genres=np.asarray(train.genre_matrix, dtype=bool),
            rated_indptr=np.asarray(indptr),
            rated_indices=np.asarray(indices),
        )

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def kernel_arrays(self, hp: HyperParams) -> dict[str, np.ndarray]:
        """CSR memberships and per-entity normalizers for every attribute family."""
        key = (hp.age_encoding, hp.attr_norm)
        if key not in self._kernel_cache:
            self._kernel_cache[key] = self._build_kernel_arrays(hp)
        return self._kernel_cache[key]

    def _build_kernel_arrays(self, hp: HyperParams) -> dict[str, np.ndarray]:
        age_ptr, age_idx = age_membership(self.user_buckets, hp.age_encoding)
        gen_ptr, gen_idx = genre_membership(self.item_genres)
        n_rated = np.diff(self.rated_indptr).astype(np.float64)
        n_age = np.diff(age_ptr).astype(np.float64)
        n_gen = np.diff(gen_ptr).astype(np.float64)
        with np.errstate(divide="ignore"):
            impl_norm = np.where(n_rated > 0, 1.0 / np.sqrt(n_rated), 0.0)
            if hp.attr_norm is AttrNorm.GLOBAL:
                age_norm = np.where(n_age > 0, 1.0 / N_AGE_BUCKETS, 0.0)
                gen_norm = np.where(n_gen > 0, 1.0 / len(self.genres), 0.0)
            else:
                age_norm = np.where(n_age > 0, 1.0 / n_age, 0.0)
                gen_norm = np.where(n_gen > 0, 1.0 / n_gen, 0.0)
        return dict(
            impl_ptr=self.rated_indptr, impl_idx=self.rated_indices, impl_norm=impl_norm,
            age_ptr=age_ptr, age_idx=age_idx, age_norm=age_norm,
            gen_ptr=gen_ptr, gen_idx=gen_idx, gen_norm=gen_norm,
        )


def _weighted_csr(indptr, indices, norm, n_cols) -> sp.csr_matrix:
    rows = len(indptr) - 1
    data = np.repeat(norm, np.diff(indptr))
    return sp.csr_matrix((data, indices, indptr), shape=(rows, n_cols))


def init_params(hp: HyperParams, train: Dataset) -> ModelParams:
    """Zero biases, mu = training mean, Gaussian(0, init_std) latent blocks."""
    if train.n_ratings == 0:
        raise ValueError("cannot initialize from an empty training set")
    rng = np.random.default_rng([hp.seed, 0])
    m, n, k = train.n_users, train.n_items, hp.k

    def gauss(rows):
        return rng.normal(0.0, hp.init_std, size=(rows, k))

    return ModelParams(
        mu=train.mean_rating(),
        b_user=np.zeros(m),
        b_item=np.zeros(n),
        P=gauss(m),
        Q=gauss(n),
        Y_impl=gauss(n),
        Y_age=gauss(N_AGE_BUCKETS),
        Y_genre=gauss(len(train.genres)),
    )


# ---------------------------------------------------------------- composites


def age_profiles(params: ModelParams, hp: HyperParams, side: SideInfo) -> np.ndarray:
    """p_a for every user (rows of zeros for users without an age)."""
    arr = side.kernel_arrays(hp)
    W = _weighted_csr(arr["age_ptr"], arr["age_idx"], arr["age_norm"], N_AGE_BUCKETS)
    return W @ params.Y_age


def implicit_profiles(params: ModelParams, hp: HyperParams, side: SideInfo) -> np.ndarray:
    """p_j for every user; users with empty N(u) get the zero vector."""
    arr = side.kernel_arrays(hp)
    W = _weighted_csr(arr["impl_ptr"], arr["impl_idx"], arr["impl_norm"], side.n_items)
    return W @ params.Y_impl


def genre_profiles(params: ModelParams, hp: HyperParams, side: SideInfo) -> np.ndarray:
    """q_t for every item."""
    arr = side.kernel_arrays(hp)
    W = _weighted_csr(arr["gen_ptr"], arr["gen_idx"], arr["gen_norm"], len(side.genres))
    return W @ params.Y_genre


def user_factors(params: ModelParams, hp: HyperParams, side: SideInfo) -> np.ndarray:
    """Composite user vectors p_u + alpha p_a + beta p_j, one row per user."""
    U = params.P.copy()
    if hp.use_age:
        U = U + hp.alpha * age_profiles(params, hp, side)
    if hp.use_implicit:
        U = U + hp.beta * implicit_profiles(params, hp, side)
    return U


def item_factors(params: ModelParams, hp: HyperParams, side: SideInfo) -> np.ndarray:
    """Composite item vectors q_i + q_t, one row per item."""
    V = params.Q.copy()
    if hp.use_genre:
        V = V + genre_profiles(params, hp, side)
    return V


def compose_user_vector(user: int, params: ModelParams, hp: HyperParams, side: SideInfo) -> np.ndarray:
    return user_factors(params, hp, side)[user]


def compose_item_vector(item: int, params: ModelParams, hp: HyperParams, side: SideInfo) -> np.ndarray:
    return item_factors(params, hp, side)[item]


def _score(mu, bu, bi, U, V, hp: HyperParams) -> np.ndarray:
    dot = np.einsum("ij,ij->i", U, V)
    if hp.use_bias:
        return (mu + bu + bi) + dot
    return dot


def predict_dense(
    params: ModelParams,
    hp: HyperParams,
    side: SideInfo,
    users: np.ndarray,
    items: np.ndarray,
    factors: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Raw predictions for aligned arrays of dense user and item indices."""
    U, V = factors if factors is not None else (user_factors(params, hp, side), item_factors(params, hp, side))
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    return _score(params.mu, params.b_user[users], params.b_item[items], U[users], V[items], hp)


@dataclass(frozen=True)
class Prediction:
    value: float
    clamped_value: float
    marker: str | None = None  # set for cold-start and fallback predictions

    @classmethod
    def of(cls, value: float, marker: str | None = None) -> Prediction:
        return cls(float(value), float(min(5.0, max(1.0, value))), marker)


def predict(params: ModelParams, hp: HyperParams, side: SideInfo, user: int, item: int) -> Prediction:
    """Prediction for a known (external user id, external item id) pair.

    Raises ``KeyError`` for ids not seen at training time; use
    :func:`cold_start_predict` for those.
    """
    u = side.user_index[int(user)]
    i = side.item_index[int(item)]
    return Prediction.of(predict_dense(params, hp, side, [u], [i])[0])


GLOBAL_MEAN_FALLBACK = "global-mean fallback"


def cold_start_predict(
    params: ModelParams,
    hp: HyperParams,
    side: SideInfo,
    *,
    user: int | None = None,
    item: int | None = None,
    age: int | None = None,
    genres=None,
) -> Prediction:
    """Predict when the user and/or the item was not seen in training.

    An unseen user contributes only ``alpha * p_a`` built from ``age`` (zero
    bias, latent and implicit parts); an unseen item contributes only
    ``q_t`` built from ``genres`` (names). Known ids resolve normally. With
    nothing resolvable on either side the result is ``mu`` marked as a
    global-mean fallback.
    """
    k = params.k
    u = side.user_index.get(int(user)) if user is not None else None
    i = side.item_index.get(int(item)) if item is not None else None
    notes = []

    if u is not None:
        U = user_factors(params, hp, side)[u]
        bu = params.b_user[u]
    else:
        bu = 0.0
        U = np.zeros(k)
        if age is not None and hp.use_age:
            _, idx = age_membership([age_to_bucket(int(age))], hp.age_encoding)
            norm = 1.0 / N_AGE_BUCKETS if hp.attr_norm is AttrNorm.GLOBAL else 1.0 / len(idx)
            U = U + hp.alpha * (norm * params.Y_age[idx].sum(axis=0))
            notes.append("cold-start user (age)")
        else:
            notes.append("user unresolvable")

    if i is not None:
        V = item_factors(params, hp, side)[i]
        bi = params.b_item[i]
    else:
        bi = 0.0
        V = np.zeros(k)
        flags = genre_flags_from_names(genres, side.genres) if genres else np.zeros(len(side.genres), bool)
        if flags.any() and hp.use_genre:
            idx = np.flatnonzero(flags)
            norm = 1.0 / len(side.genres) if hp.attr_norm is AttrNorm.GLOBAL else 1.0 / len(idx)
            V = V + norm * params.Y_genre[idx].sum(axis=0)
            notes.append("cold-start item (genres)")
        else:
            notes.append("item unresolvable")

    if u is None and i is None and not any(n.startswith("cold-start") for n in notes):
        return Prediction.of(params.mu, GLOBAL_MEAN_FALLBACK)
    value = _score(params.mu, np.array([bu]), np.array([bi]), U[None, :], V[None, :], hp)[0]
    return Prediction.of(value, "; ".join(notes) or None)


# ---------------------------------------------------------------- model files

MAGIC = b"UISVDMF\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class ModelFileError(ValueError):
    """Raised when a model file is corrupt, truncated or from another format version."""


def _blocks(params: ModelParams, side: SideInfo) -> list[tuple[str, np.ndarray]]:
    m, n = side.n_users, side.n_items
    return [
        ("mu", np.array([params.mu], dtype="<f8")),
        *((b, np.asarray(getattr(params, b), dtype="<f8")) for b in ModelParams.BLOCKS),
        ("user_map", np.stack([side.user_ids, np.arange(m)], axis=1).astype("<i8")),
        ("item_map", np.stack([side.item_ids, np.arange(n)], axis=1).astype("<i8")),
        ("user_buckets", np.asarray(side.user_buckets, dtype="<i8")),
        ("item_genres", np.asarray(side.item_genres, dtype="u1")),
        ("rated_indptr", np.asarray(side.rated_indptr, dtype="<i8")),
        ("rated_indices", np.asarray(side.rated_indices, dtype="<i8")),
    ]


def save_model(params: ModelParams, hp: HyperParams, side: SideInfo, path: str | Path) -> Path:
    """Write a versioned single-file model; bytes depend only on the inputs."""
    if not params.all_finite():
        raise ValueError("refusing to save non-finite parameters")
    blocks = _blocks(params, side)
    header = {
        "format_version": FORMAT_VERSION,
        "variant": hp.variant.value,
        "k": params.k,
        "m": side.n_users,
        "n": side.n_items,
        "n_age": params.Y_age.shape[0],
        "n_genre": params.Y_genre.shape[0],
        "age_encoding": hp.age_encoding.value,
        "attr_norm": hp.attr_norm.value,
        "alpha": hp.alpha,
        "beta": hp.beta,
        "hyperparams": hp.to_dict(),
        "genres": list(side.genres),
        "blocks": [[name, a.dtype.str, list(a.shape)] for name, a in blocks],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)) + head + b"".join(a.tobytes() for _, a in blocks)
    path = Path(path)
    path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    return path


def load_model(path: str | Path) -> tuple[ModelParams, HyperParams, SideInfo]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + 4:
        raise ModelFileError(f"{path}: truncated (only {len(raw)} bytes)")
    magic, version, head_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFileError(f"{path}: not a model file (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"{path}: format version {version}, this build reads version {FORMAT_VERSION}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFileError(f"{path}: checksum mismatch (truncated or corrupted)")
    try:
        header = json.loads(body[_PREFIX.size:_PREFIX.size + head_len])
    except ValueError as exc:
        raise ModelFileError(f"{path}: unreadable header ({exc})") from None

    arrays = {}
    offset = _PREFIX.size + head_len
    for name, dtype, shape in header["blocks"]:
        dt = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + count * dt.itemsize
        if end > len(body):
            raise ModelFileError(f"{path}: block {name} runs past end of file")
        arrays[name] = np.frombuffer(body, dtype=dt, count=count, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(body):
        raise ModelFileError(f"{path}: {len(body) - offset} trailing bytes after the last block")

    m, n, k = header["m"], header["n"], header["k"]
    expected = {
        "b_user": (m,), "b_item": (n,), "P": (m, k), "Q": (n, k), "Y_impl": (n, k),
        "Y_age": (header["n_age"], k), "Y_genre": (header["n_genre"], k),
        "user_map": (m, 2), "item_map": (n, 2), "rated_indptr": (m + 1,),
    }
    for name, shape in expected.items():
        if name not in arrays or arrays[name].shape != shape:
            got = arrays[name].shape if name in arrays else None
            raise ModelFileError(f"{path}: block {name} has shape {got}, header implies {shape}")

    hp = HyperParams.from_dict(header["hyperparams"])
    params = ModelParams(float(arrays["mu"][0]), *(arrays[b] for b in ModelParams.BLOCKS))
    side = SideInfo(
        user_ids=arrays["user_map"][:, 0],
        item_ids=arrays["item_map"][:, 0],
        genres=tuple(header["genres"]),
        user_buckets=arrays["user_buckets"],
        item_genres=arrays["item_genres"].astype(bool),
        rated_indptr=arrays["rated_indptr"],
        rated_indices=arrays["rated_indices"],
    )
    return params, hp, side
