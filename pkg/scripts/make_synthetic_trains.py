"""Regenerate the bundled synthetic east/west trains dump."""

import argparse
from pathlib import Path

from relprop.sqldump import serialize
from relprop.synthetic import synthetic_trains

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "relprop" / "data" / "trains_synthetic.sql"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trains", type=int, default=20)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()
    db = synthetic_trains(args.trains, args.seed)
    args.out.write_text(
        "-- Synthetic east/west trains (generated; eastbound iff a short car has a roof)\n" + serialize(db),
        encoding="utf-8",
    )
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
