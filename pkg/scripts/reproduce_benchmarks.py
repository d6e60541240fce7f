"""Cross-validated accuracy and AUC of every learner on one or more dumps.

Each dataset is given as PATH:TABLE.ATTRIBUTE, for example

    python scripts/reproduce_benchmarks.py mutagenesis.sql:molecule.mutagenic trains.sql:trains.direction

Without arguments the bundled synthetic trains dump is used.  Results go to
<out>/folds.csv and <out>/summary.csv.
"""

import argparse
import os
import time
from pathlib import Path

from relprop import bundled_dataset
from relprop.evalharness import ExperimentSetup, run_experiment_on_bags, write_reports
from relprop.relstore import load_database
from relprop.wordify import WordifyParams, wordify_database


def parse_dataset(entry: str):
    path, _, target = entry.rpartition(":")
    table, _, attribute = target.partition(".")
    if not path or not attribute:
        raise SystemExit(f"expected PATH:TABLE.ATTRIBUTE, got {entry!r}")
    return path, table, attribute


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("datasets", nargs="*")
    ap.add_argument("--methods", default="majority,propstar,propdrm")
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-order", type=int, default=2)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", type=Path, default=Path("benchmark_results"))
    args = ap.parse_args()

    entries = args.datasets or [f"{bundled_dataset('trains_synthetic')}:trains.direction"]
    args.out.mkdir(parents=True, exist_ok=True)
    reports = []
    print(f"{'dataset':<24}{'method':<10}{'accuracy':>18}{'auc':>18}{'seconds':>9}")
    for entry in entries:
        path, table, attribute = parse_dataset(entry)
        db = load_database(path, table, attribute)
        bags = wordify_database(db, WordifyParams(max_order=args.max_order), jobs=args.jobs)
        name = Path(path).stem
        for method in args.methods.split(","):
            t0 = time.perf_counter()
            rep = run_experiment_on_bags(
                bags, db.classes, ExperimentSetup(method), args.folds, args.runs, args.seed,
                db.positive_class, args.jobs, dataset=name,
            )
            reports.append(rep)
            print(
                f"{name:<24}{method:<10}"
                f"{rep.mean_accuracy:>10.3f} +- {rep.std_accuracy:.3f}"
                f"{rep.mean_auc:>10.3f} +- {rep.std_auc:.3f}"
                f"{time.perf_counter() - t0:>9.1f}"
            )
    write_reports(reports, args.out / "folds.csv", args.out / "summary.csv")


if __name__ == "__main__":
    main()
