"""Wordification: relational database -> bags of relational items -> sparse matrix.

Each instance of the target table becomes a multiset of items
``table_column_value`` drawn from its own row and from every row joined to
it within the foreign-key neighbourhood, plus size-2 conjuncts of items
that share a row (written ``a__b``).
"""

from __future__ import annotations

import math
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .relstore import (
    INTEGER,
    REAL,
    RelationalDatabase,
    Value,
    fk_neighborhood,
    row_indices_for_instance,
)

CONJUNCT_SEP = "__"
LABEL_PREFIX = "__label__"
_WS = re.compile(r"\s+")


def _escape(component: str) -> str:
    s = _WS.sub("-", component.strip().lower())
    # an empty component would make "__" ambiguous, so it gets a placeholder
    return s.replace("%", "%25").replace("_", "%5f") or "%00"


def _unescape(component: str) -> str:
    if component == "%00":
        return ""
    return component.replace("%5f", "_").replace("%25", "%")


class RelationalItem(NamedTuple):
    table: str
    column: str
    value: str

    def __str__(self) -> str:
        return "_".join(_escape(x) for x in self)


class ConjunctItem(NamedTuple):
    first: RelationalItem
    second: RelationalItem

    def __str__(self) -> str:
        return f"{self.first}{CONJUNCT_SEP}{self.second}"


def conjunct(a: str, b: str) -> str:
    """Canonical conjunct of two item strings; order-normalized (larger string first)."""
    if a == b:
        raise ValueError("a conjunct needs two distinct items")
    return f"{a}{CONJUNCT_SEP}{b}" if a > b else f"{b}{CONJUNCT_SEP}{a}"


def parse_item(text: str) -> RelationalItem | ConjunctItem:
    if CONJUNCT_SEP in text:
        a, b = text.split(CONJUNCT_SEP)
        return ConjunctItem(parse_item(a), parse_item(b))
    parts = text.split("_")
    if len(parts) != 3:
        raise ValueError(f"not a canonical item: {text!r}")
    return RelationalItem(*(_unescape(p) for p in parts))


def label_token(name: str) -> str:
    return LABEL_PREFIX + _WS.sub("-", str(name).strip())


@dataclass(frozen=True)
class WordifyParams:
    max_order: int = 2
    max_items_per_instance: int = 10_000
    bins: int = 5
    max_categorical_ints: int = 20
    conjuncts: bool = True

    def __post_init__(self) -> None:
        if self.max_order < 0 or self.max_items_per_instance < 1 or self.bins < 1:
            raise ValueError(f"invalid wordify parameters: {self}")


@dataclass(frozen=True)
class InstanceBag:
    instance: Value
    items: tuple[str, ...]
    label: int

    def unique(self) -> "InstanceBag":
        return InstanceBag(self.instance, tuple(dict.fromkeys(self.items)), self.label)


class _Binner:
    """Equal-width bins over the full non-null column."""

    def __init__(self, values: Sequence[Value], bins: int) -> None:
        nums = [float(v) for v in values if isinstance(v, (int, float))]
        self.lo = min(nums) if nums else 0.0
        hi = max(nums) if nums else 0.0
        self.width = (hi - self.lo) / bins
        self.bins = bins

    def __call__(self, v: Value) -> str:
        if not isinstance(v, (int, float)):
            return str(v)
        if self.width <= 0 or math.isnan(v):
            return "bin0"
        k = int((float(v) - self.lo) // self.width)
        return f"bin{min(max(k, 0), self.bins - 1)}"


class Wordifier:
    """Builds instance bags for one database; caches per-row item tuples."""

    def __init__(self, db: RelationalDatabase, params: WordifyParams = WordifyParams()) -> None:
        if db.target is None:
            raise ValueError("wordification needs a target designation")
        self.db = db
        self.params = params
        self.target_table = db.table(db.target.table).name
        self.tables = fk_neighborhood(db, self.target_table, params.max_order)
        self._plans: dict[str, list] = {}
        self._rows: dict[tuple[str, int], tuple[str, ...]] = {}
        self._items: dict[tuple, str] = {}
        self._conj: dict[tuple[str, str], str] = {}

    def _plan(self, table: str) -> list:
        plan = self._plans.get(table)
        if plan is None:
            t = self.db.table(table)
            plan = []
            for col in self.db.data_columns(table):
                c = t.column(col)
                render = None
                if c.type == REAL:
                    render = _Binner(t.values(col), self.params.bins)
                elif c.type == INTEGER:
                    distinct = {v for v in t.values(col) if v is not None}
                    if len(distinct) > self.params.max_categorical_ints:
                        render = _Binner(t.values(col), self.params.bins)
                plan.append((t.position(col), col, render))
            self._plans[table] = plan
        return plan

    def _item(self, table: str, column: str, value: str) -> str:
        key = (table, column, value)
        s = self._items.get(key)
        if s is None:
            s = self._items[key] = str(RelationalItem(table, column, value))
        return s

    def row_items(self, table: str, row: int) -> tuple[str, ...]:
        key = (table, row)
        out = self._rows.get(key)
        if out is not None:
            return out
        r = self.db.table(table).rows[row]
        singles = []
        for pos, col, render in self._plan(table):
            v = r[pos]
            if v is None:
                continue
            text = render(v) if render is not None else _value_text(v)
            singles.append(self._item(table, col, text))
        items = list(singles)
        if self.params.conjuncts:
            for a, b in combinations(singles, 2):
                if a == b:
                    continue
                ck = (a, b)
                s = self._conj.get(ck)
                if s is None:
                    s = self._conj[ck] = conjunct(a, b)
                items.append(s)
        out = self._rows[key] = tuple(items)
        return out

    def bag(self, instance: Value) -> InstanceBag:
        db = self.db
        limit = self.params.max_items_per_instance
        root = db.instance_row(instance)
        items: list[str] = list(self.row_items(self.target_table, root))
        for table in self.tables:
            if len(items) >= limit:
                break
            for r in row_indices_for_instance(db, table, instance, self.params.max_order):
                items.extend(self.row_items(table, r))
                if len(items) >= limit:
                    break
        del items[limit:]
        return InstanceBag(instance, tuple(items), db.label_of(instance))


def _value_text(v: Value) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def wordify_instance(db: RelationalDatabase, instance: Value, params: WordifyParams = WordifyParams()) -> InstanceBag:
    return Wordifier(db, params).bag(instance)


def _wordify_chunk(args) -> list[InstanceBag]:
    db, params, instances = args
    w = Wordifier(db, params)
    return [w.bag(i) for i in instances]


def wordify_database(
    db: RelationalDatabase, params: WordifyParams = WordifyParams(), jobs: int = 1
) -> list[InstanceBag]:
    """One bag per labelled target row, in ingestion order."""
    instances = db.instances()
    if jobs <= 1 or len(instances) < 2 * jobs:
        w = Wordifier(db, params)
        return [w.bag(i) for i in instances]
    step = math.ceil(len(instances) / jobs)
    chunks = [(db, params, instances[i : i + step]) for i in range(0, len(instances), step)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_wordify_chunk, chunks))
    return [b for part in parts for b in part]


# -- vocabulary ---------------------------------------------------------------


@dataclass(frozen=True)
class ItemVocabulary:
    items: tuple[str, ...]
    frequencies: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.items)})

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def index(self, item: str) -> int | None:
        return self._index.get(item)

    def indices(self, items: Iterable[str]) -> np.ndarray:
        """Sorted unique vocabulary indices of ``items``; unknown items skipped."""
        idx = self._index
        found = {idx[s] for s in items if s in idx}
        return np.array(sorted(found), dtype=np.int64)

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i, (s, f) in enumerate(zip(self.items, self.frequencies)):
                fh.write(f"{i}\t{s}\t{f}\n")

    @classmethod
    def read_tsv(cls, path) -> "ItemVocabulary":
        items, freqs = [], []
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh):
                i, s, f = line.rstrip("\n").split("\t")
                if int(i) != n:
                    raise ValueError(f"{path}: vocabulary index {i} out of order")
                items.append(s)
                freqs.append(int(f))
        return cls(tuple(items), tuple(freqs))


def count_items(bags: Iterable[InstanceBag]) -> Counter:
    counts: Counter = Counter()
    for b in bags:
        counts.update(b.items)
    return counts


def frequency_selection(bags: Sequence[InstanceBag], budget: int, min_freq: int = 1) -> ItemVocabulary:
    """Top ``budget`` items by multiset count (ties: ascending string), count >= min_freq."""
    if budget < 1 or min_freq < 1:
        raise ValueError("budget and min_freq must be >= 1")
    counts = count_items(bags)
    kept = sorted(((-c, s) for s, c in counts.items() if c >= min_freq))[:budget]
    return ItemVocabulary(tuple(s for _, s in kept), tuple(-c for c, _ in kept))


# -- sparse matrix --------------------------------------------------------------


@dataclass(frozen=True)
class SparseBinaryMatrix:
    """CSR binary matrix; stored entries are implicitly 1."""

    n_rows: int
    n_cols: int
    offsets: np.ndarray
    indices: np.ndarray

    def __post_init__(self) -> None:
        off, idx = self.offsets, self.indices
        if len(off) != self.n_rows + 1 or off[0] != 0 or off[-1] != len(idx):
            raise ValueError("inconsistent row offsets")
        if np.any(np.diff(off) < 0):
            raise ValueError("row offsets must be nondecreasing")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n_cols):
            raise ValueError("column index out of range")

    @property
    def nnz(self) -> int:
        return int(self.offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.offsets[i] : self.offsets[i + 1]]

    def take(self, rows: Sequence[int]) -> "SparseBinaryMatrix":
        parts = [self.row(i) for i in rows]
        offsets = np.zeros(len(parts) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(p) for p in parts])
        indices = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        return SparseBinaryMatrix(len(parts), self.n_cols, offsets, indices.astype(np.int64))

    def to_dense(self, rows: Sequence[int] | None = None) -> np.ndarray:
        rows = range(self.n_rows) if rows is None else rows
        out = np.zeros((len(rows), self.n_cols))
        for k, i in enumerate(rows):
            out[k, self.row(i)] = 1.0
        return out

    def to_scipy(self):
        from scipy.sparse import csr_matrix

        data = np.ones(self.nnz, dtype=np.float64)
        return csr_matrix((data, self.indices, self.offsets), shape=self.shape)

    def write_triplets(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{self.n_rows} {self.n_cols} {self.nnz}\n")
            for i in range(self.n_rows):
                for j in self.row(i):
                    fh.write(f"{i} {j} 1\n")

    @classmethod
    def read_triplets(cls, path) -> "SparseBinaryMatrix":
        with open(path, encoding="utf-8") as fh:
            n_rows, n_cols, nnz = (int(x) for x in fh.readline().split())
            data = np.loadtxt(fh, dtype=np.int64, ndmin=2) if nnz else np.zeros((0, 3), dtype=np.int64)
        if len(data) != nnz:
            raise ValueError(f"{path}: header says {nnz} entries, found {len(data)}")
        counts = np.bincount(data[:, 0], minlength=n_rows) if nnz else np.zeros(n_rows, dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        order = np.lexsort((data[:, 1], data[:, 0]))
        return cls(n_rows, n_cols, offsets, data[order, 1].copy())


def to_sparse_matrix(bags: Sequence[InstanceBag], vocab: ItemVocabulary) -> tuple[SparseBinaryMatrix, np.ndarray]:
    """Binary indicator matrix (bag i contains vocabulary item j) and aligned labels."""
    rows = [vocab.indices(b.items) for b in bags]
    offsets = np.zeros(len(rows) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(r) for r in rows])
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    labels = np.array([b.label for b in bags], dtype=np.int64)
    return SparseBinaryMatrix(len(rows), len(vocab), offsets, indices.astype(np.int64)), labels


# -- bag export -----------------------------------------------------------------


def write_bags(bags: Sequence[InstanceBag], classes: Sequence[str], path) -> None:
    """One line per instance: items separated by spaces, then ``__label__<class>``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in bags:
            fh.write(" ".join(b.items + (label_token(classes[b.label]),)) + "\n")


def read_bags(path) -> tuple[list[InstanceBag], tuple[str, ...]]:
    """Read a bag export; classes are recovered from the label tokens (sorted)."""
    raw = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            toks = line.split()
            if not toks or not toks[-1].startswith(LABEL_PREFIX):
                raise ValueError(f"{path}:{n + 1}: missing {LABEL_PREFIX} token")
            raw.append((tuple(toks[:-1]), toks[-1][len(LABEL_PREFIX) :]))
    classes = tuple(sorted({c for _, c in raw}))
    return [InstanceBag(n, items, classes.index(c)) for n, (items, c) in enumerate(raw)], classes
