"""Propositionalize a generated five-table database and report time, size and peak memory.

Prints one JSON object.  Used by the scalability acceptance check, which
runs it in a child process so the memory peak is measured in isolation.
"""

import argparse
import json
import resource
import sys
import time

from relprop.synthetic import scalability_database
from relprop.wordify import WordifyParams, frequency_selection, to_sparse_matrix, wordify_database


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--customers", type=int, default=100_000)
    ap.add_argument("--budget", type=int, default=10_000)
    ap.add_argument("--max-items", type=int, default=10_000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    t0 = time.perf_counter()
    db = scalability_database(args.customers, args.seed)
    t1 = time.perf_counter()
    params = WordifyParams(max_items_per_instance=args.max_items)
    bags = wordify_database(db, params, jobs=args.jobs)
    vocab = frequency_selection(bags, args.budget)
    matrix, _ = to_sparse_matrix(bags, vocab)
    t2 = time.perf_counter()
    # ru_maxrss is reported in KiB on Linux and bytes on macOS
    scale = 1 if sys.platform == "darwin" else 1024
    peaks = [resource.getrusage(who).ru_maxrss * scale for who in (resource.RUSAGE_SELF, resource.RUSAGE_CHILDREN)]
    print(json.dumps({
        "n_instances": matrix.n_rows,
        "n_rows_total": sum(t.row_count for t in db.tables.values()),
        "vocabulary": len(vocab),
        "nnz": matrix.nnz,
        "max_items_per_instance": args.max_items,
        "generate_seconds": round(t1 - t0, 2),
        "propositionalize_seconds": round(t2 - t1, 2),
        "peak_rss_bytes": max(peaks),
    }))


if __name__ == "__main__":
    main()
