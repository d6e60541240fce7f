"""In-memory relational database with a foreign-key graph.

Rows are stored as tuples of plain Python values (``None``, ``int``,
``float`` or ``str``).  A database is treated as immutable once built;
join indices are computed lazily and cached.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

log = logging.getLogger(__name__)

Value = Any  # None | int | float | str

INTEGER = "integer"
REAL = "real"
TEXT = "text"

PRIMARY_KEY = "primary-key"
FOREIGN_KEY = "foreign-key"
DATA = "data"
TARGET = "target-class"


class RelStoreError(Exception):
    pass


class UnknownTableError(RelStoreError, KeyError):
    def __str__(self) -> str:
        return f"unknown table: {self.args[0]!r}"


class UnknownInstanceError(RelStoreError, KeyError):
    def __str__(self) -> str:
        return f"unknown instance: {self.args[0]!r}"


@dataclass(frozen=True)
class Column:
    name: str
    type: str = TEXT  # one of INTEGER, REAL, TEXT
    declared: str = ""


@dataclass(frozen=True)
class ForeignKey:
    """Directed edge ``table.column -> ref_table.ref_column``."""

    table: str
    column: str
    ref_table: str
    ref_column: str

    def __str__(self) -> str:
        return f"{self.table}.{self.column}->{self.ref_table}.{self.ref_column}"


@dataclass
class Table:
    name: str
    columns: tuple[Column, ...]
    primary_key: str | None = None
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.columns = tuple(self.columns)
        self._pos = {c.name: i for i, c in enumerate(self.columns)}
        if len(self._pos) != len(self.columns):
            raise RelStoreError(f"duplicate column name in table {self.name!r}")
        if self.primary_key is not None and self.primary_key not in self._pos:
            raise RelStoreError(f"primary key {self.primary_key!r} is not a column of {self.name!r}")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def position(self, column: str) -> int:
        try:
            return self._pos[column]
        except KeyError:
            raise RelStoreError(f"table {self.name!r} has no column {column!r}") from None

    def column(self, name: str) -> Column:
        return self.columns[self.position(name)]

    def values(self, column: str) -> list[Value]:
        j = self.position(column)
        return [r[j] for r in self.rows]


@dataclass(frozen=True)
class Target:
    table: str
    attribute: str
    positive_label: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    dangling: tuple[tuple[str, int, str, Value], ...] = ()  # (table, row ordinal, fk column, value)
    null_keys: tuple[tuple[str, int], ...] = ()
    empty_tables: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.dangling or self.null_keys or self.empty_tables)

    def lines(self) -> list[str]:
        out = [f"dangling foreign key {t}.{c}={v!r} (row {i})" for t, i, c, v in self.dangling]
        out += [f"null primary key in {t} (row {i})" for t, i in self.null_keys]
        out += [f"empty table {t}" for t in self.empty_tables]
        return out


class RelationalDatabase:
    """Tables plus foreign keys plus an optional target designation."""

    def __init__(
        self,
        tables: Iterable[Table],
        foreign_keys: Iterable[ForeignKey] = (),
        target: Target | None = None,
    ) -> None:
        self.tables: dict[str, Table] = {}
        for t in tables:
            if t.name in self.tables:
                raise RelStoreError(f"duplicate table name {t.name!r}")
            self.tables[t.name] = t
        self.foreign_keys: tuple[ForeignKey, ...] = tuple(foreign_keys)
        for fk in self.foreign_keys:
            self.table(fk.table).position(fk.column)
            self.table(fk.ref_table).position(fk.ref_column)
        self.target = target
        self._fk_columns = {(fk.table, fk.column) for fk in self.foreign_keys}
        self._index_cache: dict[tuple, Any] = {}
        self._classes: tuple[str, ...] | None = None
        if target is not None:
            self._check_target()

    def __repr__(self) -> str:
        sizes = ", ".join(f"{n}:{t.row_count}" for n, t in self.tables.items())
        return f"RelationalDatabase({sizes}; {len(self.foreign_keys)} fks)"

    # -- lookup ------------------------------------------------------------

    def table(self, name: str) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            pass
        matches = [t for n, t in self.tables.items() if n.lower() == name.lower()]
        if len(matches) == 1:
            return matches[0]
        raise UnknownTableError(name)

    def role(self, table: str, column: str) -> str:
        t = self.table(table)
        t.position(column)
        if column == t.primary_key:
            return PRIMARY_KEY
        if (t.name, column) in self._fk_columns:
            return FOREIGN_KEY
        if self.target is not None and t.name == self.target.table and column == self.target.attribute:
            return TARGET
        return DATA

    def data_columns(self, table: str) -> list[str]:
        t = self.table(table)
        return [c.name for c in t.columns if self.role(t.name, c.name) == DATA]

    # -- target designation ------------------------------------------------

    def with_target(self, table: str, attribute: str, positive_label: str | None = None) -> "RelationalDatabase":
        t = self.table(table)
        t.position(attribute)
        return RelationalDatabase(self.tables.values(), self.foreign_keys, Target(t.name, attribute, positive_label))

    def _check_target(self) -> None:
        t = self.table(self.target.table)
        labels = {label_text(v) for v in t.values(self.target.attribute) if v is not None}
        if len(labels) < 2:
            raise RelStoreError(
                f"target {t.name}.{self.target.attribute} needs at least 2 distinct values, found {len(labels)}"
            )
        if self.target.positive_label is not None and self.target.positive_label not in labels:
            raise RelStoreError(f"positive label {self.target.positive_label!r} not among target values")

    def _require_target(self) -> Target:
        if self.target is None:
            raise RelStoreError("database has no target designation")
        return self.target

    @property
    def classes(self) -> tuple[str, ...]:
        """Class names, ordered by their text form; position is the class index."""
        if self._classes is None:
            tg = self._require_target()
            vals = self.table(tg.table).values(tg.attribute)
            self._classes = tuple(sorted({label_text(v) for v in vals if v is not None}))
        return self._classes

    @property
    def positive_class(self) -> int:
        tg = self._require_target()
        if tg.positive_label is not None:
            return self.classes.index(tg.positive_label)
        return len(self.classes) - 1

    def instances(self) -> list[Value]:
        """Instance refs of the target table in ingestion order (rows with a null label skipped)."""
        tg = self._require_target()
        t = self.table(tg.table)
        j = t.position(tg.attribute)
        if t.primary_key is None:
            return [i for i, r in enumerate(t.rows) if r[j] is not None]
        k = t.position(t.primary_key)
        return [r[k] for r in t.rows if r[j] is not None]

    def instance_row(self, instance: Value) -> int:
        tg = self._require_target()
        t = self.table(tg.table)
        lookup = self._cached(("instances",), lambda: self._build_instance_lookup(t))
        try:
            return lookup[instance]
        except (KeyError, TypeError):
            pass
        # instance ids given on the command line arrive as text
        if isinstance(instance, str):
            for key, row in lookup.items():
                if str(key) == instance:
                    return row
        raise UnknownInstanceError(instance)

    def _build_instance_lookup(self, t: Table) -> dict:
        if t.primary_key is None:
            return {i: i for i in range(t.row_count)}
        k = t.position(t.primary_key)
        return {r[k]: i for i, r in enumerate(t.rows)}

    def label_of(self, instance: Value) -> int:
        tg = self._require_target()
        t = self.table(tg.table)
        v = t.rows[self.instance_row(instance)][t.position(tg.attribute)]
        if v is None:
            raise RelStoreError(f"instance {instance!r} has no label")
        return self.classes.index(label_text(v))

    # -- foreign-key graph -------------------------------------------------

    def _cached(self, key: tuple, build):
        try:
            return self._index_cache[key]
        except KeyError:
            value = self._index_cache[key] = build()
            return value

    def _value_index(self, table: str, column: str) -> dict[Value, list[int]]:
        def build():
            idx: dict[Value, list[int]] = {}
            for i, v in enumerate(self.table(table).values(column)):
                if v is not None:
                    idx.setdefault(v, []).append(i)
            return idx

        return self._cached(("values", table, column), build)

    def edges_of(self, table: str) -> list[tuple[ForeignKey, str]]:
        """FK edges incident to ``table`` with the table at the other end; self-loops skipped."""
        out = []
        for fk in self.foreign_keys:
            if fk.table == fk.ref_table:
                continue
            if fk.table == table:
                out.append((fk, fk.ref_table))
            elif fk.ref_table == table:
                out.append((fk, fk.table))
        return out

    def step(self, fk: ForeignKey, from_table: str, rows: Sequence[int]) -> list[int]:
        """Join ``rows`` of ``from_table`` across ``fk`` (either direction), keeping multiplicity."""
        if from_table == fk.table:
            src = self.table(fk.table)
            j = src.position(fk.column)
            idx = self._value_index(fk.ref_table, fk.ref_column)
        else:
            src = self.table(fk.ref_table)
            j = src.position(fk.ref_column)
            idx = self._value_index(fk.table, fk.column)
        out: list[int] = []
        for r in rows:
            v = src.rows[r][j]
            if v is not None:
                out.extend(idx.get(v, ()))
        return out

    def join_paths(self, start: str, max_order: int) -> list[tuple[tuple[ForeignKey, str], ...]]:
        """All table-simple FK paths from ``start`` of length 1..max_order, in a fixed order."""
        start = self.table(start).name
        paths: list[tuple] = []

        def extend(path: tuple, visited: frozenset, here: str) -> None:
            if len(path) == max_order:
                return
            edges = sorted(self.edges_of(here), key=lambda e: (e[1], e[0].table, e[0].column, e[0].ref_column))
            for fk, other in edges:
                if other in visited:
                    continue
                p = path + ((fk, other),)
                paths.append(p)
                extend(p, visited | {other}, other)

        extend((), frozenset({start}), start)
        paths.sort(key=lambda p: (len(p), [(o, fk.table, fk.column) for fk, o in p]))
        return paths


def label_text(v: Value) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def fk_neighborhood(db: RelationalDatabase, start: str, max_order: int) -> list[str]:
    """Tables within ``max_order`` undirected FK hops of ``start``, by depth then name."""
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    start = db.table(start).name
    depth = {start: 0}
    queue = deque([start])
    while queue:
        here = queue.popleft()
        if depth[here] == max_order:
            continue
        for _, other in db.edges_of(here):
            if other not in depth:
                depth[other] = depth[here] + 1
                queue.append(other)
    del depth[start]
    return sorted(depth, key=lambda t: (depth[t], t))


def rows_for_instance(db: RelationalDatabase, table: str, instance: Value, max_order: int = 2) -> list[tuple]:
    """Rows of ``table`` joined to ``instance`` by any FK path of length <= max_order.

    A row reachable along several paths is returned once per path.
    """
    return [db.table(table).rows[i] for i in row_indices_for_instance(db, table, instance, max_order)]


def row_indices_for_instance(db: RelationalDatabase, table: str, instance: Value, max_order: int = 2) -> list[int]:
    tg = db._require_target()
    table = db.table(table).name
    root = db.instance_row(instance)
    out: list[int] = []
    for path in db._cached(("paths", tg.table, max_order), lambda: db.join_paths(tg.table, max_order)):
        if path[-1][1] != table:
            continue
        rows, here = [root], tg.table
        for fk, other in path:
            rows = db.step(fk, here, rows)
            here = other
            if not rows:
                break
        out.extend(rows)
    return out


def validate(db: RelationalDatabase, drop: bool = True) -> tuple[RelationalDatabase, ValidationReport]:
    """Report dangling FK values, null primary keys and empty tables.

    With ``drop`` set, rows holding a dangling FK value are removed (repeated
    until no dangling references remain); nothing else is changed.
    """
    tables = {n: replace(t, rows=list(t.rows)) for n, t in db.tables.items()}
    dangling: list = []
    while True:
        found = []
        for fk in db.foreign_keys:
            src, dst = tables[fk.table], tables[fk.ref_table]
            keys = set(dst.values(fk.ref_column))
            j = src.position(fk.column)
            for i, r in enumerate(src.rows):
                if r[j] is not None and r[j] not in keys:
                    found.append((fk.table, i, fk.column, r[j]))
        dangling.extend(found)
        if not found or not drop:
            break
        bad: dict[str, set[int]] = {}
        for t, i, _, _ in found:
            bad.setdefault(t, set()).add(i)
        for t, rows in bad.items():
            tables[t].rows = [r for i, r in enumerate(tables[t].rows) if i not in rows]
    for t, i, c, v in dangling:
        log.warning("dropping %s row %d: dangling foreign key %s=%r", t, i, c, v)

    null_keys = []
    for t in tables.values():
        if t.primary_key is not None:
            j = t.position(t.primary_key)
            null_keys.extend((t.name, i) for i, r in enumerate(t.rows) if r[j] is None)
    empty = tuple(n for n, t in tables.items() if t.row_count == 0)
    report = ValidationReport(tuple(dangling), tuple(null_keys), empty)
    if not drop or not dangling:
        return db, report
    return RelationalDatabase(tables.values(), db.foreign_keys, db.target), report


def load_database(
    path,
    target_table: str | None = None,
    target_attribute: str | None = None,
    positive_label: str | None = None,
) -> RelationalDatabase:
    """Parse a dump file, validate it and attach the target designation."""
    from .sqldump import parse_sql_dump

    with open(path, encoding="utf-8") as fh:
        db = parse_sql_dump(fh.read())
    db, report = validate(db)
    for line in report.lines():
        log.info("%s: %s", path, line)
    if target_table is not None:
        if target_attribute is None:
            raise RelStoreError("target_attribute is required with target_table")
        db = db.with_target(target_table, target_attribute, positive_label)
    return db
