"""Error metrics, repeated-split experiments, ablations and parameter sweeps."""

from __future__ import annotations

import csv
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .dataio import Dataset, random_split
from .model import HyperParams, Variant, predict_dense
from .train import DivergenceError, fit

ABLATION_VARIANTS = (Variant.SVDPP, Variant.USVDPP, Variant.ISVDPP, Variant.UISVDPP)
TABLE_VARIANTS = (Variant.BIASSVD, Variant.MF, Variant.SVDPP, Variant.UISVDPP)
SWEEP_AXES = {"lambda": "lam", "k": "k", "epochs": "epochs"}


def _errors(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("metrics need at least one (rating, prediction) pair")
    return arr[:, 0] - arr[:, 1]


def rmse(pairs) -> float:
    e = _errors(pairs)
    return math.sqrt(float(np.mean(e * e)))


def mae(pairs) -> float:
    return float(np.mean(np.abs(_errors(pairs))))


def improvement_rate(baseline: float, ours: float) -> float:
    """Relative error reduction ``(baseline - ours) / baseline``."""
    return (baseline - ours) / baseline


class ExperimentError(RuntimeError):
    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"repeat with split seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.seed, self.cause)


@dataclass(frozen=True)
class RepeatResult:
    seed: int
    rmse: float
    mae: float
    n_test: int


@dataclass
class EvalReport:
    variant: Variant
    dataset: str
    train_ratio: float
    repeats: int
    per_repeat: list[RepeatResult] = field(default_factory=list)

    @property
    def mean_rmse(self) -> float:
        return statistics.fmean(r.rmse for r in self.per_repeat)

    @property
    def mean_mae(self) -> float:
        return statistics.fmean(r.mae for r in self.per_repeat)

    @property
    def std_rmse(self) -> float:
        return statistics.pstdev(r.rmse for r in self.per_repeat) if len(self.per_repeat) > 1 else 0.0

    def rows(self) -> list[dict]:
        base = {"dataset": self.dataset, "variant": self.variant.value, "train_ratio": self.train_ratio}
        out = [
            {**base, "row": "repeat", "seed": r.seed, "rmse": r.rmse, "mae": r.mae, "n_test": r.n_test}
            for r in self.per_repeat
        ]
        out.append({**base, "row": "mean", "seed": "", "rmse": self.mean_rmse, "mae": self.mean_mae, "n_test": ""})
        out.append({**base, "row": "std", "seed": "", "rmse": self.std_rmse, "mae": "", "n_test": ""})
        return out


REPORT_FIELDS = ("dataset", "variant", "train_ratio", "row", "seed", "rmse", "mae", "n_test")


def reports_to_csv(reports, fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        for row in rep.rows():
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue() if fh is None else ""


def _one_repeat(args) -> RepeatResult:
    ds, hp, ratio, seed, clamp = args
    split = random_split(ds, ratio, seed)
    try:
        res = fit(hp, split.train)
    except DivergenceError as exc:
        raise ExperimentError(seed, exc) from exc
    pred = predict_dense(res.params, res.hp, res.side, split.test.user_idx, split.test.item_idx)
    if clamp:
        pred = np.clip(pred, 1.0, 5.0)
    pairs = np.column_stack([split.test.rating, pred])
    return RepeatResult(seed, rmse(pairs), mae(pairs), split.test.n_ratings)


def _run_all(tasks, jobs: int):
    if jobs <= 1 or len(tasks) == 1:
        return [_one_repeat(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one_repeat, tasks))


def run_experiment(
    ds: Dataset, variant: Variant | str, hp: HyperParams, ratio: float, repeats: int = 5,
    base_seed: int = 0, jobs: int = 1, clamp: bool = False,
) -> EvalReport:
    """Split with seeds ``base_seed + r``, fit on train, score the test part."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    hp = hp.replace(variant=Variant(variant))
    tasks = [(ds, hp, ratio, base_seed + r, clamp) for r in range(repeats)]
    return EvalReport(hp.variant, ds.name, ratio, repeats, _run_all(tasks, jobs))


def run_ablation(
    ds: Dataset, hp: HyperParams, ratio: float, repeats: int = 5, base_seed: int = 0,
    variants=ABLATION_VARIANTS, jobs: int = 1, clamp: bool = False,
) -> list[EvalReport]:
    """Every variant is trained on the same splits (same seeds), so differences come from the variant alone."""
    return [run_experiment(ds, v, hp, ratio, repeats, base_seed, jobs, clamp) for v in variants]


def sweep(
    ds: Dataset, variant: Variant | str, base_hp: HyperParams, axis: str, values, ratio: float = 0.8,
    repeats: int = 5, base_seed: int = 0, jobs: int = 1, clamp: bool = False,
) -> list[tuple[float, EvalReport]]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {sorted(SWEEP_AXES)}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    name = SWEEP_AXES[axis]
    out = []
    for v in values:
        hp = base_hp.replace(**{name: type(getattr(base_hp, name))(v)})
        out.append((v, run_experiment(ds, variant, hp, ratio, repeats, base_seed, jobs, clamp)))
    return out


def sweep_to_csv(axis: str, results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([axis, "mean_rmse", "std_rmse", "mean_mae"])
    for value, rep in results:
        writer.writerow([value, repr(rep.mean_rmse), repr(rep.std_rmse), repr(rep.mean_mae)])
    return buf.getvalue()


# ---------------------------------------------------------------- tables


def published_results() -> list[dict]:
    """RMSE values printed in the published comparison table (not reproduced here)."""
    text = resources.files("uisvd").joinpath("published_rmse.csv").read_text()
    return list(csv.DictReader(io.StringIO(text)))


def comparison_table(reports: list[EvalReport], include_reported: bool = True) -> str:
    """Aligned text table: one row per method, one column per (ratio, dataset)."""
    cols = sorted({(r.train_ratio, r.dataset) for r in reports}, key=lambda c: (-c[0], c[1]))
    ours = {(r.variant.label, r.train_ratio, r.dataset): r.mean_rmse for r in reports}
    methods = [v.label for v in dict.fromkeys(r.variant for r in reports)]
    rows = [[m] + [f"{ours[(m, *c)]:.4f}" if (m, *c) in ours else "-" for c in cols] for m in methods]
    if include_reported:
        measured = set(methods)
        for rec in published_results():
            if rec["method"] in measured:
                continue
            vals = []
            for ratio, name in cols:
                key = f"{name}@{int(round(ratio * 100))}"
                vals.append(rec.get(key) or "-")
            if any(v != "-" for v in vals):
                rows.append([rec["method"] + " *"] + vals)
    header = ["Method"] + [f"{name} {int(round(ratio * 100))}%" for ratio, name in cols]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(str(x).ljust(w) for x, w in zip(row, widths)) for row in rows]
    if include_reported and any(r[0].endswith(" *") for r in rows):
        lines.append("* published figure, not reproduced")
    return "\n".join(lines)


def ablation_table(reports: list[EvalReport]) -> str:
    """RMSE and MAE per variant and dataset."""
    datasets = list(dict.fromkeys(r.dataset for r in reports))
    by = {(r.variant, r.dataset): r for r in reports}
    lines = ["Method    Metric  " + "  ".join(f"{d:>8}" for d in datasets)]
    for v in dict.fromkeys(r.variant for r in reports):
        for metric in ("RMSE", "MAE"):
            cells = []
            for d in datasets:
                rep = by.get((v, d))
                val = None if rep is None else (rep.mean_rmse if metric == "RMSE" else rep.mean_mae)
                cells.append(f"{val:8.4f}" if val is not None else f"{'-':>8}")
            name = v.label if metric == "RMSE" else ""
            lines.append(f"{name:<9} {metric:<6}  " + "  ".join(cells))
    return "\n".join(lines)
