"""Command-line entry point.

Settings resolve in three layers: RunConfig defaults, then a ``--config``
key=value file, then command-line flags.  Everything is validated before
any data is read or any output is written.  Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path


from . import evalharness, explain, propdrm, propstar
from .evalharness import ExperimentSetup
from .propdrm import DrmConfig
from .propstar import StarTrainConfig
from .relstore import load_database, label_text
from .wordify import (
    ItemVocabulary,
    WordifyParams,
    frequency_selection,
    read_bags,
    to_sparse_matrix,
    wordify_database,
    write_bags,
)

log = logging.getLogger("relprop")

COMMANDS = ("propositionalize", "train", "evaluate", "explain", "export-embeddings")
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Every setting a command can use, with its default."""

    data: str = ""  # .sql dump or bag-export file
    target_table: str = ""
    target_attribute: str = ""
    positive_label: str = ""  # default: last class in sorted order
    # wordification
    max_order: int = 2
    budget: int = 10_000
    min_freq: int = 1
    bins: int = 5
    max_items: int = 10_000
    # model
    method: str = "propstar"
    dim: int = 32
    epochs: int = -1  # -1: method default (5 for propstar, 10 for propdrm)
    lr: float = -1.0  # -1: method default (0.05 for propstar, 0.2 for propdrm)
    negatives: int = 5
    margin: float = 0.05
    hidden: int = 64
    dropout: float = 0.2
    batch_size: int = 32
    # evaluation
    folds: int = 10
    runs: int = 5
    seed: int = 0
    jobs: int = 0  # 0: all available cores
    # explanation
    model: str = ""
    instances: str = ""  # comma-separated ids; empty means all
    mode: str = "exact"
    permutations: int = 1000
    out: str = "out"

    def wordify_params(self) -> WordifyParams:
        return WordifyParams(max_order=self.max_order, max_items_per_instance=self.max_items, bins=self.bins)

    def model_config(self):
        if self.method == "propstar":
            d = StarTrainConfig()
            return StarTrainConfig(
                dim=self.dim,
                epochs=d.epochs if self.epochs < 0 else self.epochs,
                learning_rate=d.learning_rate if self.lr < 0 else self.lr,
                negatives=self.negatives,
                margin=self.margin,
                seed=self.seed,
            )
        if self.method == "propdrm":
            d = DrmConfig()
            return DrmConfig(
                hidden=self.hidden,
                dropout=self.dropout,
                learning_rate=d.learning_rate if self.lr < 0 else self.lr,
                epochs=d.epochs if self.epochs < 0 else self.epochs,
                batch_size=self.batch_size,
                seed=self.seed,
            )
        return None

    def n_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def is_sql(self) -> bool:
        return self.data.lower().endswith(".sql")


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}
GRID_FIELDS = {"dim", "epochs", "lr", "negatives", "margin", "hidden", "dropout", "batch_size", "budget", "min_freq", "max_order"}


def _cast(name: str, text: str):
    try:
        return _CASTS[FIELD_TYPES[name]](text.strip())
    except ValueError:
        raise UsageError(f"{name}: cannot read {text!r} as {FIELD_TYPES[name]}") from None


def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELD_TYPES:
            raise UsageError(f"{path}:{n}: unknown setting {key!r}")
        out[key] = value
    return out


def resolve(command: str, raw: dict[str, str]) -> tuple[RunConfig, dict[str, list]]:
    """Typed config plus the grid axes (settings given several comma-separated values)."""
    values, grid = {}, {}
    for name, text in raw.items():
        parts = text.split(",") if name in GRID_FIELDS else [text]
        typed = [_cast(name, p) for p in parts]
        if len(typed) > 1:
            if command != "evaluate":
                raise UsageError(f"{name}: value lists are only accepted by evaluate")
            grid[name] = typed
        values[name] = typed[0]
    return RunConfig(**values), grid


def validate_config(command: str, cfg: RunConfig, grid: dict[str, list]) -> None:
    if not cfg.data:
        raise UsageError("--data is required")
    if not Path(cfg.data).is_file():
        raise UsageError(f"data file not found: {cfg.data}")
    if cfg.is_sql() and not (cfg.target_table and cfg.target_attribute):
        raise UsageError("--target-table and --target-attribute are required with a .sql dump")
    if cfg.method not in evalharness.METHODS:
        raise UsageError(f"unknown method {cfg.method!r}; expected one of {', '.join(evalharness.METHODS)}")
    if command in ("train", "explain", "export-embeddings") and cfg.method == "majority" and not cfg.model:
        raise UsageError("majority has no trainable model; use evaluate")
    if command == "export-embeddings" and cfg.method != "propstar":
        raise UsageError("export-embeddings needs --method propstar")
    if command == "explain" and not cfg.model:
        raise UsageError("explain needs --model")
    if cfg.model and not Path(cfg.model).is_file():
        raise UsageError(f"model file not found: {cfg.model}")
    if cfg.mode not in ("exact", "sampled"):
        raise UsageError("--mode must be exact or sampled")
    if cfg.folds < 2 or cfg.runs < 1 or cfg.permutations < 1 or cfg.jobs < 0:
        raise UsageError("--folds must be >= 2; --runs, --permutations >= 1; --jobs >= 0")
    if cfg.budget < 1 or cfg.min_freq < 1:
        raise UsageError("--budget and --min-freq must be >= 1")
    for setting in expand_grid(cfg, grid):
        try:
            setting.wordify_params()
            for method in ("propstar", "propdrm"):
                replace(setting, method=method).model_config()
        except ValueError as e:
            raise UsageError(str(e)) from None


def expand_grid(cfg: RunConfig, grid: dict[str, list]) -> list[RunConfig]:
    names = sorted(grid)
    return [replace(cfg, **dict(zip(names, combo))) for combo in itertools.product(*(grid[n] for n in names))] or [cfg]


def write_resolved(cfg: RunConfig, grid: dict[str, list], out: Path) -> None:
    with open(out / "config.txt", "w", encoding="utf-8", newline="\n") as fh:
        for f in fields(RunConfig):
            v = grid.get(f.name) or [getattr(cfg, f.name)]
            fh.write(f"{f.name}={','.join(str(x) for x in v)}\n")


# -- data ------------------------------------------------------------------------


@dataclass
class Corpus:
    bags: list
    classes: tuple[str, ...]
    positive: int
    instance_ids: list[str]


def load_corpus(cfg: RunConfig) -> Corpus:
    if cfg.is_sql():
        db = load_database(cfg.data, cfg.target_table, cfg.target_attribute, cfg.positive_label or None)
        bags = wordify_database(db, cfg.wordify_params(), jobs=cfg.n_jobs())
        return Corpus(bags, db.classes, db.positive_class, [label_text(b.instance) for b in bags])
    bags, classes = read_bags(cfg.data)
    if len(classes) < 2:
        raise ValueError("the bag file holds fewer than two classes")
    if cfg.positive_label:
        if cfg.positive_label not in classes:
            raise ValueError(f"positive label {cfg.positive_label!r} not among classes {classes}")
        positive = classes.index(cfg.positive_label)
    else:
        positive = len(classes) - 1
    return Corpus(bags, classes, positive, [str(b.instance) for b in bags])


def _read_model(path: str):
    with open(path, encoding="utf-8") as fh:
        head = fh.readline()
    if head.startswith(propdrm.CHECKPOINT_MAGIC):
        return propdrm.MlpModel.read(path)
    return propstar.EmbeddingModel.read_tsv(path)


# -- commands -----------------------------------------------------------------------


def cmd_propositionalize(cfg: RunConfig, out: Path) -> None:
    corpus = load_corpus(cfg)
    vocab = frequency_selection(corpus.bags, cfg.budget, cfg.min_freq)
    matrix, labels = to_sparse_matrix(corpus.bags, vocab)
    matrix.write_triplets(out / "matrix.txt")
    vocab.write_tsv(out / "vocabulary.tsv")
    write_bags(corpus.bags, corpus.classes, out / "bags.txt")
    with open(out / "instances.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("row\tinstance\tlabel\n")
        for i, (iid, y) in enumerate(zip(corpus.instance_ids, labels)):
            fh.write(f"{i}\t{iid}\t{corpus.classes[y]}\n")
    print(f"instances={matrix.n_rows} vocabulary={len(vocab)} nnz={matrix.nnz}")


def _train(cfg: RunConfig, corpus: Corpus, vocab: ItemVocabulary):
    mcfg = cfg.model_config()
    if cfg.method == "propstar":
        return propstar.train(corpus.bags, vocab, corpus.classes, mcfg)
    matrix, labels = to_sparse_matrix(corpus.bags, vocab)
    return propdrm.train(matrix, labels, mcfg, classes=corpus.classes)


def cmd_train(cfg: RunConfig, out: Path) -> None:
    corpus = load_corpus(cfg)
    vocab = frequency_selection(corpus.bags, cfg.budget, cfg.min_freq)
    model = _train(cfg, corpus, vocab)
    if cfg.method == "propstar":
        model.write_tsv(out / "model.tsv")
    else:
        model.write(out / "model.mlp")
    vocab.write_tsv(out / "vocabulary.tsv")
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "loss"))
        w.writerows((e + 1, repr(v)) for e, v in enumerate(model.loss_history))
    final = model.loss_history[-1] if model.loss_history else float("nan")
    print(f"trained {cfg.method} on {len(corpus.bags)} instances; final loss {final:.6g}")


def _config_id(setting: RunConfig, grid: dict[str, list]) -> str:
    return ";".join(f"{n}={getattr(setting, n)}" for n in sorted(grid)) or "default"


def cmd_evaluate(cfg: RunConfig, out: Path, grid: dict[str, list]) -> None:
    reports = []
    bag_cache: dict = {}
    dataset = Path(cfg.data).stem
    for setting in expand_grid(cfg, grid):
        key = (setting.max_order,)
        if key not in bag_cache:
            bag_cache[key] = load_corpus(setting)
        corpus = bag_cache[key]
        setup = ExperimentSetup(setting.method, setting.model_config(), setting.budget, setting.min_freq)
        rep = evalharness.run_experiment_on_bags(
            corpus.bags,
            corpus.classes,
            setup,
            k=setting.folds,
            n_runs=setting.runs,
            seed=setting.seed,
            positive=corpus.positive,
            jobs=setting.n_jobs(),
            dataset=dataset,
            config_id=_config_id(setting, grid),
        )
        reports.append(rep)
        print(f"{rep.config_id}: accuracy {rep.mean_accuracy:.4f} +- {rep.std_accuracy:.4f}  auc {rep.mean_auc:.4f} +- {rep.std_auc:.4f}")
    evalharness.write_reports(reports, out / "folds.csv", out / "summary.csv")


def _select_rows(cfg: RunConfig, corpus: Corpus) -> list[int]:
    if not cfg.instances:
        return list(range(len(corpus.bags)))
    lookup = {iid: i for i, iid in enumerate(corpus.instance_ids)}
    rows = []
    for iid in (s.strip() for s in cfg.instances.split(",")):
        if iid not in lookup:
            raise ValueError(f"unknown instance id {iid!r}")
        rows.append(lookup[iid])
    return rows


def cmd_explain(cfg: RunConfig, out: Path) -> None:
    corpus = load_corpus(cfg)
    model = _read_model(cfg.model)
    if tuple(model.classes) != tuple(corpus.classes):
        raise ValueError(f"model classes {model.classes} differ from data classes {corpus.classes}")
    rows = _select_rows(cfg, corpus)
    if isinstance(model, propdrm.MlpModel):
        vocab_path = Path(cfg.model).with_name("vocabulary.tsv")
        if not vocab_path.is_file():
            raise ValueError(f"expected the training vocabulary next to the model: {vocab_path}")
        vocab = ItemVocabulary.read_tsv(vocab_path)
        if len(vocab) != model.n_inputs:
            raise ValueError("vocabulary size does not match the model input width")
        matrix, _ = to_sparse_matrix([corpus.bags[i] for i in rows], vocab)
        evaluators = [explain.drm_evaluator(model, matrix, r, corpus.positive, vocab.items) for r in range(len(rows))]
    else:
        evaluators = [explain.star_evaluator(model, corpus.bags[i], corpus.positive) for i in rows]
    results = []
    for i, ev in zip(rows, evaluators):
        if cfg.mode == "exact":
            a = explain.exact_shapley(ev)
        else:
            a = explain.sampled_shapley(ev, cfg.permutations, cfg.seed)
        results.append((corpus.instance_ids[i], a))
    explain.write_attributions(results, out / "attributions.csv")
    explain.write_ranking(explain.mean_abs_attribution([a for _, a in results]), out / "ranking.csv")
    print(f"explained {len(results)} instances ({cfg.mode})")


def cmd_export_embeddings(cfg: RunConfig, out: Path) -> None:
    corpus = load_corpus(cfg)
    if cfg.model:
        model = _read_model(cfg.model)
        if not isinstance(model, propstar.EmbeddingModel):
            raise ValueError("export-embeddings needs a propstar model")
    else:
        model = _train(cfg, corpus, frequency_selection(corpus.bags, cfg.budget, cfg.min_freq))
    model.write_tsv(out / "embeddings.tsv")
    with open(out / "instance_embeddings.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for iid, bag in zip(corpus.instance_ids, corpus.bags):
            vec = propstar.embed_bag(model, bag).vector
            fh.write(iid + "\t" + "\t".join(repr(float(x)) for x in vec) + "\n")
    print(f"wrote {len(model.items)} item and {len(corpus.bags)} instance embeddings")


# -- argument parsing -------------------------------------------------------------------

_FLAGS = {
    "--data": "SQL dump (.sql) or bag-export file",
    "--target-table": "table holding the instances",
    "--target-attribute": "class column of the target table",
    "--positive-label": "class scored as positive for AUC",
    "--method": "propstar | propdrm | majority",
    "--dim": "embedding dimension",
    "--epochs": "training epochs",
    "--lr": "learning rate",
    "--negatives": "negative labels per training pair",
    "--margin": "ranking-loss margin",
    "--hidden": "hidden units",
    "--dropout": "dropout rate",
    "--batch-size": "mini-batch size",
    "--folds": "cross-validation folds",
    "--runs": "cross-validation repetitions",
    "--seed": "random seed",
    "--jobs": "worker processes (0: all cores)",
    "--budget": "maximum vocabulary size",
    "--min-freq": "minimum item frequency",
    "--max-order": "foreign-key neighbourhood radius",
    "--bins": "equal-width bins for numeric columns",
    "--max-items": "item cap per instance",
    "--model": "trained model checkpoint",
    "--instances": "comma-separated instance ids to explain",
    "--mode": "exact | sampled",
    "--permutations": "permutations in sampled mode",
    "--out": "output directory",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep exit code 2, but without argparse's own exit
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relprop", description="Relational propositionalization and learning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value settings file; flags take precedence")
        for flag, help_text in _FLAGS.items():
            # values stay strings here; typing happens after merging with --config
            p.add_argument(flag, dest=flag[2:].replace("-", "_"), default=None, help=help_text)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        raw = read_config_file(args.config) if args.config else {}
        raw.update({k: v for k, v in vars(args).items() if k in FIELD_TYPES and v is not None})
        cfg, grid = resolve(args.command, raw)
        validate_config(args.command, cfg, grid)
    except UsageError as e:
        print(f"relprop: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_resolved(cfg, grid, out)
        if args.command == "propositionalize":
            cmd_propositionalize(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, out)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out, grid)
        elif args.command == "explain":
            cmd_explain(cfg, out)
        else:
            cmd_export_embeddings(cfg, out)
    except Exception as e:  # noqa: BLE001 - reported, mapped to the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"relprop: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
