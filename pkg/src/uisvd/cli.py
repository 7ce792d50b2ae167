"""Command line entry point: train, evaluate, ablate, sweep, analyze, predict.

Every run writes into ``<out>/<dataset>/<variant>/<tag>/`` and stores the
resolved configuration there as ``config.json``; passing that file back
with ``--config`` repeats the run. Settings resolve as command line flags,
then the config file, then built-in defaults.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import analysis, evaluation
from .dataio import DataError, Dataset, load, random_split
from .model import (
    HyperParams,
    ModelFileError,
    Variant,
    cold_start_predict,
    defaults_for,
    load_model,
    predict,
    predict_dense,
    save_model,
)
from .train import DivergenceError, fit

logger = logging.getLogger("uisvd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
DATA_ENV = "UISVD_DATA"
HP_FLAGS = ("k", "gamma", "lam", "alpha", "beta", "epochs", "age_encoding", "attr_norm", "init_std")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = "train"
    data: str = "ml-100k"
    flavor: str | None = None
    variant: str = Variant.UISVDPP.value
    ratio: float = 0.8
    repeats: int = 5
    seed: int = 0
    out: str = "runs"
    tag: str | None = None
    clamp: bool = False
    jobs: int = 1
    hp: dict = field(default_factory=dict)  # hyperparameter overrides
    variants: list[str] | None = None
    ratios: list[float] | None = None
    axis: str | None = None
    values: list[float] | None = None
    top: int = 10
    n: int = 20
    ranking: str = "sum"

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def hyperparams(self, flavor: str) -> HyperParams:
        bad = sorted(set(self.hp) - set(HP_FLAGS))
        if bad:
            raise UsageError(f"unknown hyperparameters: {', '.join(bad)}")
        try:
            return defaults_for(flavor).replace(**self.hp, seed=self.seed, variant=Variant(self.variant))
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- plumbing


def resolve_data_dir(data: str) -> Path:
    """A directory path, or a dataset name looked up under $UISVD_DATA (default ./data)."""
    p = Path(data)
    if p.is_dir():
        return p
    q = Path(os.environ.get(DATA_ENV, "data")) / data
    if q.is_dir():
        return q
    raise DataError(f"dataset directory not found: {data} (also tried {q})")


def load_dataset(cfg: RunConfig) -> Dataset:
    return load(resolve_data_dir(cfg.data), cfg.flavor)


def run_dir(cfg: RunConfig, dataset: str, segment: str) -> Path:
    tag = cfg.tag or time.strftime("%Y%m%d-%H%M%S")
    d = Path(cfg.out) / dataset / segment / tag
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_config(cfg: RunConfig, hp: HyperParams | None, directory: Path) -> None:
    d = asdict(cfg)
    if hp is not None:
        d["hp"] = {k: v for k, v in hp.to_dict().items() if k in HP_FLAGS}
    (directory / "config.json").write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def _write(directory: Path, name: str, text: str) -> None:
    (directory / name).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_train(cfg: RunConfig) -> int:
    ds = load_dataset(cfg)
    hp = cfg.hyperparams(ds.name)
    if cfg.ratio >= 1.0:
        train, valid = ds, None
    else:
        split = random_split(ds, cfg.ratio, cfg.seed)
        train, valid = split.train, split.test
    out = run_dir(cfg, ds.name, hp.variant.value)
    write_config(cfg, hp, out)

    with open(out / "epochs.jsonl", "w") as log:
        def on_epoch(rec: dict) -> None:
            log.write(json.dumps(rec, sort_keys=True) + "\n")
            log.flush()
            extra = f" valid_rmse={rec['valid_rmse']:.5f}" if "valid_rmse" in rec else ""
            print(
                f"epoch {rec['epoch']:>3}/{hp.epochs} loss={rec['train_loss']:.2f} "
                f"train_rmse={rec['train_rmse']:.5f}{extra} ({rec['seconds']:.2f}s)",
                file=sys.stderr,
            )

        res = fit(hp, train, valid, on_epoch=on_epoch)

    save_model(res.params, res.hp, res.side, out / "model.uisvd")
    if valid is not None:
        pred = predict_dense(res.params, res.hp, res.side, valid.user_idx, valid.item_idx)
        if cfg.clamp:
            pred = pred.clip(1.0, 5.0)
        pairs = list(zip(valid.rating.tolist(), pred.tolist()))
        metrics = {"rmse": evaluation.rmse(pairs), "mae": evaluation.mae(pairs), "n_test": valid.n_ratings}
        _write(out, "metrics.json", json.dumps(metrics, indent=2, sort_keys=True))
        print(f"test rmse={metrics['rmse']:.5f} mae={metrics['mae']:.5f}")
    print(out / "model.uisvd")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    ds = load_dataset(cfg)
    variants = [Variant(v) for v in (cfg.variants or [v.value for v in evaluation.TABLE_VARIANTS])]
    ratios = cfg.ratios or [0.9, 0.8, 0.5]
    hp = cfg.hyperparams(ds.name)
    out = run_dir(cfg, ds.name, "comparison")
    write_config(cfg, hp, out)
    reports = [
        evaluation.run_experiment(ds, v, hp, r, cfg.repeats, cfg.seed, cfg.jobs, cfg.clamp)
        for r in ratios
        for v in variants
    ]
    _write(out, "report.csv", evaluation.reports_to_csv(reports))
    table = evaluation.comparison_table(reports)
    _write(out, "table.txt", table)
    print(table)
    return EXIT_OK


def cmd_ablate(cfg: RunConfig) -> int:
    ds = load_dataset(cfg)
    variants = [Variant(v) for v in (cfg.variants or [v.value for v in evaluation.ABLATION_VARIANTS])]
    hp = cfg.hyperparams(ds.name)
    out = run_dir(cfg, ds.name, "ablation")
    write_config(cfg, hp, out)
    reports = evaluation.run_ablation(ds, hp, cfg.ratio, cfg.repeats, cfg.seed, variants, cfg.jobs, cfg.clamp)
    _write(out, "report.csv", evaluation.reports_to_csv(reports))
    table = evaluation.ablation_table(reports)
    _write(out, "table.txt", table)
    print(table)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.axis not in evaluation.SWEEP_AXES:
        raise UsageError(f"--axis must be one of {', '.join(evaluation.SWEEP_AXES)}")
    if not cfg.values:
        raise UsageError("--values needs at least one value")
    ds = load_dataset(cfg)
    hp = cfg.hyperparams(ds.name)
    out = run_dir(cfg, ds.name, hp.variant.value)
    write_config(cfg, hp, out)
    results = evaluation.sweep(
        ds, hp.variant, hp, cfg.axis, cfg.values, cfg.ratio, cfg.repeats, cfg.seed, cfg.jobs, cfg.clamp
    )
    text = evaluation.sweep_to_csv(cfg.axis, results)
    _write(out, f"sweep_{cfg.axis}.csv", text)
    _write(out, "report.csv", evaluation.reports_to_csv([rep for _, rep in results]))
    print(text, end="")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    if cfg.ranking not in analysis.RANKINGS:
        raise UsageError(f"--ranking must be one of {', '.join(analysis.RANKINGS)}")
    ds = load_dataset(cfg)
    out = run_dir(cfg, ds.name, "analysis")
    write_config(cfg, None, out)

    pop = analysis.popularity_table(ds)
    _write(out, "popularity.csv", analysis.popularity_csv(pop))
    _write(out, "popularity.txt", analysis.popularity_text(pop, cfg.top))

    popular = [e.item_id for e in pop[: cfg.top]]
    for suffix, exclude in (("", ()), ("_excl_top", popular)):
        lists = analysis.all_cohorts(ds, cfg.n, exclude, cfg.ranking)
        _write(out, f"cohorts{suffix}.csv", analysis.cohort_csv(lists))
        _write(out, f"cohorts{suffix}.txt", analysis.cohort_text(lists))
        _write(out, f"overlap{suffix}.csv", analysis.overlap_csv(lists))
        merged = [analysis.cohort_top(ds, g, cfg.n, exclude, cfg.ranking) for g in analysis.MERGED_GROUPS]
        _write(out, f"cohorts_merged{suffix}.csv", analysis.cohort_csv(merged))
        _write(out, f"overlap_merged{suffix}.csv", analysis.overlap_csv(merged))
    _write(out, "demographics.csv", analysis.demographics_csv(analysis.demographics(ds)))

    print(analysis.popularity_text(pop, cfg.top))
    print(f"\noutputs in {out}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    params, hp, side = load_model(args.model)
    genres = [g for g in (args.genres or "").split(",") if g.strip()] or None
    known = (
        args.user is not None and args.item is not None
        and args.user in side.user_index and args.item in side.item_index
    )
    if known:
        pred = predict(params, hp, side, args.user, args.item)
    else:
        try:
            pred = cold_start_predict(params, hp, side, user=args.user, item=args.item, age=args.age, genres=genres)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    print(f"prediction {pred.value:.6f}")
    print(f"clamped    {pred.clamped_value:.6f}")
    if pred.marker:
        print(f"note       {pred.marker}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
}


# ---------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _words(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON run config (e.g. a previous run's config.json)")
    common.add_argument("--data", help="dataset directory, or a name looked up under $UISVD_DATA or ./data")
    common.add_argument("--flavor", choices=["ml-100k", "ml-1m"])
    common.add_argument("--variant", choices=[v.value for v in Variant])
    common.add_argument("--ratio", type=float, help="train fraction of each split")
    common.add_argument("--repeats", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output root (default: runs)")
    common.add_argument("--tag", help="run directory name (default: timestamp)")
    common.add_argument("--clamp", action="store_true", help="clip predictions to [1, 5] when scoring")
    common.add_argument("--jobs", type=int, help="parallel repeats / sweep points")
    hp = common.add_argument_group("hyperparameters")
    hp.add_argument("--k", type=int)
    hp.add_argument("--gamma", type=float)
    hp.add_argument("--lambda", dest="lam", type=float)
    hp.add_argument("--alpha", type=float)
    hp.add_argument("--beta", type=float)
    hp.add_argument("--epochs", type=int)
    hp.add_argument("--age-encoding", dest="age_encoding", choices=["onehot", "cumulative"])
    hp.add_argument("--attr-norm", dest="attr_norm", choices=["active", "global"])
    hp.add_argument("--init-std", dest="init_std", type=float)

    parser = _Parser(prog="uisvd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    quiet = argparse.SUPPRESS  # unset options stay absent so config files can fill them
    sub.add_parser("train", parents=[common], help="fit one model and save it")
    p = sub.add_parser(
        "evaluate", parents=[common], argument_default=quiet, help="comparison table over variants and split ratios"
    )
    p.add_argument("--variants", type=_words)
    p.add_argument("--ratios", type=_floats)
    p = sub.add_parser(
        "ablate", parents=[common], argument_default=quiet, help="SVD++ / USVD++ / ISVD++ / UISVD++ on shared splits"
    )
    p.add_argument("--variants", type=_words)
    p = sub.add_parser(
        "sweep", parents=[common], argument_default=quiet, help="one experiment per hyperparameter value"
    )
    p.add_argument("--axis", choices=list(evaluation.SWEEP_AXES))
    p.add_argument("--values", type=_floats)
    p = sub.add_parser(
        "analyze", parents=[common], argument_default=quiet, help="popularity, age-cohort top lists and overlaps"
    )
    p.add_argument("--top", type=int, help="rows of the popularity table (also the exclusion set size)")
    p.add_argument("--n", type=int, help="cohort list length")
    p.add_argument("--ranking", choices=analysis.RANKINGS)

    p = sub.add_parser("predict", help="score one (user, item) pair from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--user", type=int, help="external user id")
    p.add_argument("--item", type=int, help="external item id")
    p.add_argument("--age", type=int, help="age for an unseen user")
    p.add_argument("--genres", help="comma-separated genre names for an unseen item")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    given = dict(vars(args))
    given.pop("verbose", None)
    command = given.pop("command")
    merged: dict = {}
    if "config" in given:
        path = Path(given.pop("config"))
        try:
            merged = json.loads(path.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(merged, dict):
            raise UsageError(f"{path}: expected a JSON object")
    hp = dict(merged.get("hp") or {})
    for key in HP_FLAGS:
        if key in given:
            hp[key] = given.pop(key)
    # a flag for one of the pair overrides a stale partner from the config file
    if ("alpha" in vars(args)) != ("beta" in vars(args)):
        hp.pop("beta" if "alpha" in vars(args) else "alpha", None)
    merged.update(given)
    merged["hp"] = hp
    merged["command"] = command
    return RunConfig.from_dict(merged)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "predict":
            return cmd_predict(args)
        return COMMANDS[args.command](resolve_config(args))
    except UsageError as exc:
        print(f"uisvd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFileError, FileNotFoundError) as exc:
        print(f"uisvd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, evaluation.ExperimentError) as exc:
        print(f"uisvd: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
