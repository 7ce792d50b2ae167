"""SGD fitting of every variant.

Each observed rating triggers one step. All right-hand sides (``p_u``,
``q_i``, ``p_a``, ``p_j``, ``q_t``) are read before any parameter is
written, so a step moves every parameter along minus one half of the
gradient of the per-rating loss ``e^2 + lam * Z(u, i)``, scaled by gamma.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .dataio import Dataset
from .model import HyperParams, ModelParams, SideInfo, init_params, item_factors, predict_dense, user_factors

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, hp: HyperParams, epoch: int):
        super().__init__(
            f"training diverged (non-finite update) in epoch {epoch} with gamma={hp.gamma}, lambda={hp.lam}"
        )
        self.hp = hp
        self.epoch = epoch

    def __reduce__(self):  # survive the trip back from worker processes
        return type(self), (self.hp, self.epoch)


@njit(cache=True, fastmath=False)
def _step(
    u, i, r, mu, bu, bi, P, Q, Yj, Ya, Yt,
    impl_ptr, impl_idx, impl_norm, age_ptr, age_idx, age_norm, gen_ptr, gen_idx, gen_norm,
    use_bias, use_impl, use_age, use_genre, gamma, lam, alpha, beta,
    pu, qi, Uc, Vc,
):
    k = P.shape[1]
    for f in range(k):
        pu[f] = P[u, f]
        qi[f] = Q[i, f]
        Uc[f] = pu[f]
        Vc[f] = qi[f]

    if use_age:
        w = alpha * age_norm[u]
        for a in age_idx[age_ptr[u]:age_ptr[u + 1]]:
            for f in range(k):
                Uc[f] += w * Ya[a, f]
    if use_impl:
        w = beta * impl_norm[u]
        for j in impl_idx[impl_ptr[u]:impl_ptr[u + 1]]:
            for f in range(k):
                Uc[f] += w * Yj[j, f]
    if use_genre:
        w = gen_norm[i]
        for t in gen_idx[gen_ptr[i]:gen_ptr[i + 1]]:
            for f in range(k):
                Vc[f] += w * Yt[t, f]

    pred = 0.0
    for f in range(k):
        pred += Uc[f] * Vc[f]
    if use_bias:
        pred += mu + bu[u] + bi[i]
    e = r - pred

    if use_bias:
        bu[u] += gamma * (e - lam * bu[u])
        bi[i] += gamma * (e - lam * bi[i])
    for f in range(k):
        P[u, f] += gamma * (e * Vc[f] - lam * pu[f])
        Q[i, f] += gamma * (e * Uc[f] - lam * qi[f])
    if use_age:
        c = e * alpha * age_norm[u]
        for a in age_idx[age_ptr[u]:age_ptr[u + 1]]:
            for f in range(k):
                Ya[a, f] += gamma * (c * Vc[f] - lam * Ya[a, f])
    if use_impl:
        c = e * beta * impl_norm[u]
        for j in impl_idx[impl_ptr[u]:impl_ptr[u + 1]]:
            for f in range(k):
                Yj[j, f] += gamma * (c * Vc[f] - lam * Yj[j, f])
    if use_genre:
        c = e * gen_norm[i]
        for t in gen_idx[gen_ptr[i]:gen_ptr[i + 1]]:
            for f in range(k):
                Yt[t, f] += gamma * (c * Uc[f] - lam * Yt[t, f])
    return e


@njit(cache=True)
def _epoch(
    order, users, items, ratings, mu, bu, bi, P, Q, Yj, Ya, Yt,
    impl_ptr, impl_idx, impl_norm, age_ptr, age_idx, age_norm, gen_ptr, gen_idx, gen_norm,
    use_bias, use_impl, use_age, use_genre, gamma, lam, alpha, beta,
):
    """Run steps in ``order``; returns the position of the first non-finite error, or -1."""
    k = P.shape[1]
    pu = np.empty(k)
    qi = np.empty(k)
    Uc = np.empty(k)
    Vc = np.empty(k)
    for pos in range(order.shape[0]):
        row = order[pos]
        e = _step(
            users[row], items[row], ratings[row], mu, bu, bi, P, Q, Yj, Ya, Yt,
            impl_ptr, impl_idx, impl_norm, age_ptr, age_idx, age_norm, gen_ptr, gen_idx, gen_norm,
            use_bias, use_impl, use_age, use_genre, gamma, lam, alpha, beta,
            pu, qi, Uc, Vc,
        )
        if not np.isfinite(e):
            return pos
    return -1


def _kernel_args(params: ModelParams, hp: HyperParams, side: SideInfo) -> tuple:
    arr = side.kernel_arrays(hp)
    return (
        float(params.mu), params.b_user, params.b_item, params.P, params.Q,
        params.Y_impl, params.Y_age, params.Y_genre,
        arr["impl_ptr"], arr["impl_idx"], arr["impl_norm"],
        arr["age_ptr"], arr["age_idx"], arr["age_norm"],
        arr["gen_ptr"], arr["gen_idx"], arr["gen_norm"],
        hp.use_bias, hp.use_implicit, hp.use_age, hp.use_genre,
        float(hp.gamma), float(hp.lam), float(hp.alpha), float(hp.beta),
    )


def sgd_step(params: ModelParams, hp: HyperParams, side: SideInfo, user: int, item: int, rating: float) -> float:
    """Apply the update for a single (dense user, dense item, rating); returns the pre-update error."""
    k = params.k
    return _step(int(user), int(item), float(rating), *_kernel_args(params, hp, side),
                 np.empty(k), np.empty(k), np.empty(k), np.empty(k))


# ---------------------------------------------------------------- objective


def _rows_sq(a: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, a)


def _csr_row_sums(indptr, indices, values) -> np.ndarray:
    out = np.zeros(len(indptr) - 1)
    if len(indices):
        np.add.at(out, np.repeat(np.arange(len(indptr) - 1), np.diff(indptr)), values[indices])
    return out


def regularizer_terms(params: ModelParams, hp: HyperParams, side: SideInfo) -> tuple[np.ndarray, np.ndarray]:
    """Per-user and per-item parts of Z; the Z of rating (u, i) is ``zu[u] + zi[i]``."""
    arr = side.kernel_arrays(hp)
    zu = _rows_sq(params.P)
    zi = _rows_sq(params.Q)
    if hp.use_bias:
        zu = zu + params.b_user ** 2
        zi = zi + params.b_item ** 2
    if hp.use_age:
        zu = zu + _csr_row_sums(arr["age_ptr"], arr["age_idx"], _rows_sq(params.Y_age))
    if hp.use_implicit:
        zu = zu + _csr_row_sums(arr["impl_ptr"], arr["impl_idx"], _rows_sq(params.Y_impl))
    if hp.use_genre:
        zi = zi + _csr_row_sums(arr["gen_ptr"], arr["gen_idx"], _rows_sq(params.Y_genre))
    return zu, zi


def loss(params: ModelParams, hp: HyperParams, side: SideInfo, train: Dataset) -> float:
    """Sum of squared errors plus ``lam * Z``, Z accumulated once per observed rating."""
    pred = predict_dense(params, hp, side, train.user_idx, train.item_idx)
    sse = float(np.sum((train.rating - pred) ** 2))
    zu, zi = regularizer_terms(params, hp, side)
    z = float(np.sum(zu[train.user_idx]) + np.sum(zi[train.item_idx]))
    return sse + hp.lam * z


def rmse_on(params: ModelParams, hp: HyperParams, side: SideInfo, ds: Dataset, factors=None) -> float:
    pred = predict_dense(params, hp, side, ds.user_idx, ds.item_idx, factors)
    return math.sqrt(float(np.mean((ds.rating - pred) ** 2)))


# ---------------------------------------------------------------- loop


@dataclass
class TrainState:
    rng: np.random.Generator
    epoch: int = 0
    train_loss_history: list[float] = field(default_factory=list)
    train_rmse_history: list[float] = field(default_factory=list)
    valid_rmse_history: list[float] = field(default_factory=list)


def new_state(hp: HyperParams) -> TrainState:
    return TrainState(rng=np.random.default_rng([hp.seed, 1]))


def sgd_epoch(
    params: ModelParams, hp: HyperParams, side: SideInfo, train: Dataset, state: TrainState
) -> tuple[ModelParams, TrainState]:
    """One shuffled pass over ``train``; updates ``params`` in place."""
    order = state.rng.permutation(train.n_ratings)
    bad = _epoch(order, train.user_idx, train.item_idx, train.rating, *_kernel_args(params, hp, side))
    state.epoch += 1
    if bad >= 0 or not params.all_finite():
        raise DivergenceError(hp, state.epoch)
    return params, state


@dataclass
class FitResult:
    params: ModelParams
    state: TrainState
    side: SideInfo
    hp: HyperParams


def fit(
    hp: HyperParams,
    train: Dataset,
    valid: Dataset | None = None,
    *,
    on_epoch: Callable[[dict], None] | None = None,
) -> FitResult:
    """Run ``hp.epochs`` SGD epochs from a seeded initialization.

    Per epoch it records the regularized training loss and train RMSE (and
    validation RMSE when ``valid`` is given), and passes a summary dict to
    ``on_epoch``.
    """
    side = SideInfo.from_dataset(train)
    params = init_params(hp, train)
    state = new_state(hp)
    while state.epoch < hp.epochs:
        t0 = time.perf_counter()
        sgd_epoch(params, hp, side, train, state)
        factors = (user_factors(params, hp, side), item_factors(params, hp, side))
        with np.errstate(over="ignore", invalid="ignore"):
            epoch_loss = loss(params, hp, side, train)
        if not math.isfinite(epoch_loss):
            raise DivergenceError(hp, state.epoch)
        state.train_loss_history.append(epoch_loss)
        state.train_rmse_history.append(rmse_on(params, hp, side, train, factors))
        record = {
            "epoch": state.epoch,
            "train_loss": state.train_loss_history[-1],
            "train_rmse": state.train_rmse_history[-1],
        }
        if valid is not None:
            state.valid_rmse_history.append(rmse_on(params, hp, side, valid, factors))
            record["valid_rmse"] = state.valid_rmse_history[-1]
        record["seconds"] = time.perf_counter() - t0
        logger.debug("epoch %(epoch)d train_rmse=%(train_rmse).5f", record)
        if on_epoch is not None:
            on_epoch(record)
    return FitResult(params, state, side, hp)
