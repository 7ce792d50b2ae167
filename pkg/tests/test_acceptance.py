"""Acceptance criteria, each at its stated tolerance.

Every test records one ``[PASS]``/``[FAIL]`` line; the lines are printed
together at the end of the pytest run. Criteria that need ml-1m fail (they
do not skip) when that dataset is absent. The ml-100k training criteria
take roughly 20 minutes on one core.
"""

import functools
import json

import numpy as np
import pytest

import conftest
from conftest import ML1M_DIR, ML100K_DIR
from test_model import all_pairs, randomized
from test_train import BLOCKS, as_theta, numeric_gradient, start_params
from uisvd import cli
from uisvd.analysis import all_cohorts, cohort_overlap, popularity_table
from uisvd.dataio import load_ml1m, load_ml100k, random_split
from uisvd.evaluation import mae, reports_to_csv, rmse, run_ablation, run_experiment, sweep
from uisvd.model import HyperParams, SideInfo, Variant, defaults_for, predict_dense
from uisvd.train import fit, sgd_step

LAMBDAS = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]


def criterion(number: int, title: str):
    """Record a pass/fail line for ``number``; the wrapped test returns ``(ok, detail)``."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                ok, detail = fn(*args, **kwargs)
            except BaseException as exc:
                reason = f"{type(exc).__name__}: {exc}"
                conftest.ACCEPTANCE_LINES.append(f"[FAIL] criterion {number}: {title} -- {reason}")
                raise
            line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
            conftest.ACCEPTANCE_LINES.append(line)
            print(line)
            assert ok, detail

        return run

    return wrap


def _need(path, what):
    if not path.is_file():
        pytest.fail(f"{what} not available at {path.parent}", pytrace=False)


@pytest.fixture(scope="module")
def ml100k_full():
    _need(ML100K_DIR / "u.data", "ml-100k")
    return load_ml100k(ML100K_DIR)


@pytest.fixture(scope="module")
def ablation_100k(ml100k_full):
    reports = run_ablation(ml100k_full, HyperParams(), 0.8, repeats=5, variants=(Variant.SVDPP, Variant.UISVDPP))
    return {r.variant: r for r in reports}


# ---------------------------------------------------------------- quantitative


@criterion(1, "ml-100k RMSE, SVD++ 0.9219+-0.02, UISVD++ 0.9071+-0.02, UISVD++ < SVD++")
def test_c01_ml100k_rmse(ablation_100k):
    s, u = ablation_100k[Variant.SVDPP].mean_rmse, ablation_100k[Variant.UISVDPP].mean_rmse
    ok = abs(s - 0.9219) <= 0.02 and abs(u - 0.9071) <= 0.02 and u < s
    return ok, f"SVD++ {s:.4f}, UISVD++ {u:.4f}"


@criterion(2, "ml-100k MAE, SVD++ 0.7252+-0.02, UISVD++ 0.7159+-0.02, UISVD++ <= SVD++")
def test_c02_ml100k_mae(ablation_100k):
    s, u = ablation_100k[Variant.SVDPP].mean_mae, ablation_100k[Variant.UISVDPP].mean_mae
    ok = abs(s - 0.7252) <= 0.02 and abs(u - 0.7159) <= 0.02 and u <= s
    return ok, f"SVD++ {s:.4f}, UISVD++ {u:.4f}"


@criterion(3, "ml-1m UISVD++ RMSE at ratio 0.8 within 0.8514+-0.02")
def test_c03_ml1m_rmse():
    _need(ML1M_DIR / "ratings.dat", "ml-1m")
    rep = run_experiment(load_ml1m(ML1M_DIR), Variant.UISVDPP, defaults_for("ml-1m"), 0.8, repeats=5)
    return abs(rep.mean_rmse - 0.8514) <= 0.02, f"UISVD++ {rep.mean_rmse:.4f}"


@criterion(4, "ml-100k lambda sweep has its minimum at lambda = 0.1")
def test_c04_lambda_sweep(ml100k_full):
    res = sweep(ml100k_full, Variant.UISVDPP, HyperParams(), "lambda", LAMBDAS, ratio=0.8, repeats=5)
    curve = {v: rep.mean_rmse for v, rep in res}
    best = min(curve, key=curve.get)
    return best == 0.1, "argmin " + str(best) + "; " + ", ".join(f"{v:g}:{r:.4f}" for v, r in curve.items())


@criterion(5, "popularity top-3 = 50, 100, 258 and popularity(50) = 3.2608% +- 0.01")
def test_c05_popularity(ml100k_full):
    top = popularity_table(ml100k_full)
    ids = [e.item_id for e in top[:3]]
    star_wars = next(e for e in top if e.item_id == 50).popularity
    ok = ids == [50, 100, 258] and abs(star_wars - 3.2608) <= 0.01
    return ok, f"top-3 {ids}, popularity(50) = {star_wars:.4f}%"


@criterion(6, "item 174 in all seven age-cohort top-20 lists")
def test_c06_item_174_everywhere(ml100k_full):
    lists = all_cohorts(ml100k_full, n=20)
    _, common = cohort_overlap(lists)
    missing = [lst.label for lst in lists if 174 not in lst.item_ids]
    return 174 in common, f"common to all: {sorted(common)}; 174 missing from {missing or 'none'}"


# ---------------------------------------------------------------- properties


@criterion(7, "SGD update direction matches central differences, rel. error < 1e-5")
def test_c07_gradient_oracle(toy):
    assert (toy.n_users, toy.n_items) == (5, 5)
    side = SideInfo.from_dataset(toy)
    worst = 0.0
    for variant in Variant:
        for enc in ("onehot", "cumulative"):
            hp = HyperParams(k=3, gamma=1.0, lam=0.1, variant=variant, age_encoding=enc, alpha=0.4, beta=0.6)
            for row in range(toy.n_ratings):
                p = start_params(hp, toy)
                u, i, r = int(toy.user_idx[row]), int(toy.item_idx[row]), float(toy.rating[row])
                before = as_theta(p)
                grads = numeric_gradient(as_theta(p), hp, toy, u, i, r)
                sgd_step(p, hp, side, u, i, r)
                for b in BLOCKS:
                    step, want = getattr(p, b) - before[b], -0.5 * grads[b]
                    scale = np.linalg.norm(want)
                    err = np.linalg.norm(step - want) / scale if scale else float(np.abs(step).max())
                    worst = max(worst, err)
    return worst < 1e-5, f"worst relative error {worst:.2e} over 6 variants x 2 encodings x 15 ratings"


@criterion(8, "reduction identities hold bitwise on the toy instance")
def test_c08_reductions(toy):
    side = SideInfo.from_dataset(toy)
    us, its = all_pairs(toy)
    full = HyperParams(k=5, variant="uisvdpp", alpha=0.0, beta=1.0)
    p = randomized(full, toy)
    p.Y_age[:] = 0.0
    p.Y_genre[:] = 0.0
    a = predict_dense(p, full, side, us, its)
    b = predict_dense(p, full.replace(variant="svdpp"), side, us, its)
    svdpp = HyperParams(k=5, variant="svdpp")
    q = randomized(svdpp, toy)
    q.Y_impl[:] = 0.0
    c = predict_dense(q, svdpp, side, us, its)
    d = predict_dense(q, svdpp.replace(variant="biassvd"), side, us, its)
    ok = a.tobytes() == b.tobytes() and c.tobytes() == d.tobytes()
    return ok, f"UISVD++->SVD++ {a.tobytes() == b.tobytes()}, SVD++->BiasSVD {c.tobytes() == d.tobytes()}"


@criterion(9, "rmse/mae match a scalar oracle on 100 random lists; rmse >= mae")
def test_c09_metric_oracle():
    rng = np.random.default_rng(9)
    worst, dominance = 0.0, True
    for _ in range(100):
        n = int(rng.integers(1, 50))
        pairs = list(zip(rng.integers(1, 6, n).tolist(), rng.uniform(0, 6, n).tolist()))
        errs = [r - p for r, p in pairs]
        want_rmse = (sum(e * e for e in errs) / n) ** 0.5
        want_mae = sum(abs(e) for e in errs) / n
        worst = max(worst, abs(rmse(pairs) - want_rmse), abs(mae(pairs) - want_mae))
        dominance &= rmse(pairs) >= mae(pairs)
    return worst < 1e-12 and dominance, f"max abs deviation {worst:.1e}, rmse >= mae on all: {dominance}"


@criterion(10, "identical config + seed gives byte-identical model files and reports")
def test_c10_determinism(ml100k_full, tmp_path, capsys):
    argv = ["train", "--data", str(ML100K_DIR), "--out", str(tmp_path), "--epochs", "3", "--seed", "7"]
    assert cli.main(argv + ["--tag", "a"]) == 0 and cli.main(argv + ["--tag", "b"]) == 0
    capsys.readouterr()
    root = tmp_path / "ml-100k" / "uisvdpp"
    models = (root / "a" / "model.uisvd").read_bytes() == (root / "b" / "model.uisvd").read_bytes()
    metrics = json.loads((root / "a" / "metrics.json").read_text()) == json.loads(
        (root / "b" / "metrics.json").read_text()
    )
    hp = HyperParams(epochs=2)
    r1 = reports_to_csv([run_experiment(ml100k_full, "uisvdpp", hp, 0.8, repeats=2)])
    r2 = reports_to_csv([run_experiment(ml100k_full, "uisvdpp", hp, 0.8, repeats=2)])
    ok = models and metrics and r1 == r2
    return ok, f"model files identical {models}, metrics identical {metrics}, report CSV identical {r1 == r2}"


@criterion(11, "parser goldens: ml-100k 943/1682/100000 (93.7%), ml-1m 6040/3706/1000209 (95.5%)")
def test_c11_parser_goldens():
    details, ok = [], True
    for path, loader, want, sparsity in (
        (ML100K_DIR / "u.data", load_ml100k, (943, 1682, 100000), 0.937),
        (ML1M_DIR / "ratings.dat", load_ml1m, (6040, 3706, 1000209), 0.955),
    ):
        if not path.is_file():
            ok = False
            details.append(f"{path.parent.name}: not available")
            continue
        ds = loader(path.parent)
        got = (ds.n_users, ds.n_items, ds.n_ratings)
        good = got == want and abs(ds.sparsity - sparsity) < 5e-4
        ok &= good
        details.append(f"{ds.name}: {got}, sparsity {ds.sparsity:.4f}")
    return ok, "; ".join(details)


@criterion(12, "ml-100k defaults: training RMSE strictly decreases over the first 5 epochs")
def test_c12_early_descent(ml100k_full):
    train = random_split(ml100k_full, 0.8, 0).train
    hist = fit(HyperParams(epochs=5), train).state.train_rmse_history
    ok = all(b < a for a, b in zip(hist, hist[1:]))
    return ok, "train RMSE " + " > ".join(f"{x:.4f}" for x in hist)
