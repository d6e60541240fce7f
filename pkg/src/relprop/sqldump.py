"""Reader and writer for ``.sql`` dump files.

Supported subset: ``CREATE TABLE`` (INT/INTEGER, FLOAT/REAL/DOUBLE,
VARCHAR/TEXT/CHAR and close relatives), inline or table-level ``PRIMARY
KEY`` and ``FOREIGN KEY ... REFERENCES``, ``ALTER TABLE ... ADD [CONSTRAINT
x] PRIMARY KEY/FOREIGN KEY`` and multi-row ``INSERT INTO``.  Other
statements (``DROP``, ``SET``, ``LOCK``, ``CREATE INDEX`` ...), index
definitions, engine clauses and comments are skipped.
"""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import dataclass

from .relstore import (
    INTEGER,
    REAL,
    TEXT,
    Column,
    ForeignKey,
    RelationalDatabase,
    Table,
)

log = logging.getLogger(__name__)


class SqlParseError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*|\#[^\n]*|/\*.*?\*/)
  | (?P<string>'(?:[^'\\]|\\.|'')*')
  | (?P<qident>`(?:[^`]|``)*`|"(?:[^"]|"")*"|\[[^\]]*\])
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<punct>[(),;.=])
  | (?P<other>.)
    """,
    re.VERBOSE | re.DOTALL,
)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "0": "\0", "b": "\b", "Z": "\x1a"}

_INT_TYPES = {"INT", "INTEGER", "BIGINT", "SMALLINT", "TINYINT", "MEDIUMINT", "SERIAL", "INT2", "INT4", "INT8"}
_REAL_TYPES = {"FLOAT", "REAL", "DOUBLE", "DECIMAL", "NUMERIC", "FLOAT4", "FLOAT8", "DEC"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper() if self.kind == "ident" else ""


def _unquote_string(text: str) -> str:
    body = text[1:-1]
    if "\\" not in body and "''" not in body:
        return body
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            out.append(_ESCAPES.get(nxt, nxt))
            i += 2
        elif ch == "'" and body[i + 1 : i + 2] == "'":
            out.append("'")
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _ident(tok: _Tok) -> str:
    if tok.kind == "qident":
        q = tok.text[0]
        body = tok.text[1:-1]
        return body if q == "[" else body.replace(q + q, q)
    return tok.text


def _column_type(declared: str) -> str:
    base = declared.split("(")[0].split()[0].upper() if declared else ""
    if base in _INT_TYPES:
        return INTEGER
    if base in _REAL_TYPES or base.startswith("DOUBLE"):
        return REAL
    return TEXT


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.newlines = [m.start() for m in re.finditer("\n", text)]

    def line_of(self, pos: int) -> int:
        return bisect.bisect_right(self.newlines, pos - 1) + 1

    def statements(self):
        """Yield token lists, one per top-level ``;``-terminated statement."""
        stmt: list[_Tok] = []
        for m in _TOKEN.finditer(self.text):
            kind = m.lastgroup
            if kind in ("ws", "comment"):
                continue
            text = m.group()
            if kind == "other" and text == "'":
                raise SqlParseError("unterminated string literal", self.line_of(m.start()))
            if kind == "punct" and text == ";":
                if stmt:
                    yield stmt
                stmt = []
                continue
            stmt.append(_Tok(kind, text, m.start()))
        if stmt:
            yield stmt

    def error(self, msg: str, tok: _Tok) -> SqlParseError:
        return SqlParseError(msg, self.line_of(tok.pos))


class _Cursor:
    def __init__(self, parser: _Parser, toks: list[_Tok]) -> None:
        self.p = parser
        self.toks = toks
        self.i = 0

    def peek(self, k: int = 0) -> _Tok | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise self.p.error("unexpected end of statement", self.toks[-1])
        self.i += 1
        return tok

    def accept(self, *words: str) -> bool:
        for k, w in enumerate(words):
            tok = self.peek(k)
            if tok is None or (tok.upper != w and tok.text != w):
                return False
        self.i += len(words)
        return True

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.upper != text and tok.text != text:
            raise self.p.error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def name(self) -> str:
        tok = self.next()
        if tok.kind not in ("ident", "qident"):
            raise self.p.error(f"expected identifier, found {tok.text!r}", tok)
        name = _ident(tok)
        # schema-qualified names keep only the table part
        while self.peek() is not None and self.peek().text == ".":
            self.i += 1
            name = _ident(self.next())
        return name

    def name_list(self) -> list[str]:
        self.expect("(")
        names = [self.name()]
        while self.accept(","):
            names.append(self.name())
        self.expect(")")
        return names

    def skip_group(self) -> None:
        """Skip a balanced parenthesised group starting at the cursor."""
        depth = 0
        while True:
            tok = self.next()
            if tok.text == "(":
                depth += 1
            elif tok.text == ")":
                depth -= 1
                if depth == 0:
                    return

    def at_end(self) -> bool:
        return self.i >= len(self.toks)


@dataclass
class _TableDraft:
    name: str
    columns: list[Column]
    primary_key: list[str]
    foreign_keys: list[tuple[str, str, str]]
    rows: list[tuple]
    line: int


def _parse_create(cur: _Cursor) -> _TableDraft:
    line = cur.p.line_of(cur.peek().pos)
    cur.accept("IF", "NOT", "EXISTS")
    name = cur.name()
    cur.expect("(")
    columns: list[Column] = []
    pk: list[str] = []
    fks: list[tuple[str, str, str]] = []
    while True:
        tok = cur.peek()
        if tok is None:
            raise cur.p.error("unterminated CREATE TABLE", cur.toks[-1])
        if cur.accept("CONSTRAINT"):
            if cur.peek().upper not in ("PRIMARY", "FOREIGN", "UNIQUE", "CHECK"):
                cur.name()
            tok = cur.peek()
        if cur.accept("PRIMARY", "KEY"):
            pk = cur.name_list()
            _skip_to_comma(cur)
        elif cur.accept("FOREIGN", "KEY"):
            if cur.peek().text != "(":
                cur.name()
            cols = cur.name_list()
            cur.expect("REFERENCES")
            ref = cur.name()
            ref_cols = cur.name_list() if cur.peek() is not None and cur.peek().text == "(" else []
            if len(cols) != 1 or len(ref_cols) > 1:
                log.warning("%s: composite foreign key %s ignored", name, cols)
            else:
                fks.append((cols[0], ref, ref_cols[0] if ref_cols else ""))
            _skip_to_comma(cur)
        elif tok.upper in ("KEY", "INDEX", "UNIQUE", "FULLTEXT", "SPATIAL", "CHECK"):
            _skip_to_comma(cur)
        else:
            col = cur.name()
            decl = _parse_type(cur)
            columns.append(Column(col, _column_type(decl), decl))
            inline_pk, inline_fk = _parse_column_modifiers(cur)
            if inline_pk:
                pk = [col]
            if inline_fk is not None:
                fks.append((col,) + inline_fk)
        if cur.accept(","):
            continue
        cur.expect(")")
        break
    # table options (ENGINE=..., CHARSET=...) are ignored
    if not columns:
        raise cur.p.error(f"table {name!r} declares no columns", cur.toks[0])
    return _TableDraft(name, columns, pk, fks, [], line)


def _parse_type(cur: _Cursor) -> str:
    tok = cur.peek()
    if tok is None or tok.kind != "ident" or tok.text in (",", ")"):
        raise cur.p.error("column type expected", tok or cur.toks[-1])
    parts = [cur.next().text]
    # multi-word types such as DOUBLE PRECISION or CHARACTER VARYING
    while cur.peek() is not None and cur.peek().upper in ("PRECISION", "VARYING", "UNSIGNED", "SIGNED", "ZEROFILL"):
        parts.append(cur.next().text)
    if cur.peek() is not None and cur.peek().text == "(":
        start = cur.i
        cur.skip_group()
        parts.append("".join(t.text for t in cur.toks[start : cur.i]))
    return " ".join(parts)


def _parse_column_modifiers(cur: _Cursor) -> tuple[bool, tuple[str, str] | None]:
    pk = False
    fk = None
    depth = 0
    while True:
        tok = cur.peek()
        if tok is None:
            return pk, fk
        if depth == 0 and tok.text in (",", ")"):
            return pk, fk
        if depth == 0 and cur.accept("PRIMARY", "KEY"):
            pk = True
            continue
        if depth == 0 and cur.accept("REFERENCES"):
            ref = cur.name()
            ref_cols = cur.name_list() if cur.peek() is not None and cur.peek().text == "(" else []
            fk = (ref, ref_cols[0] if ref_cols else "")
            continue
        cur.next()
        if tok.text == "(":
            depth += 1
        elif tok.text == ")":
            depth -= 1


def _skip_to_comma(cur: _Cursor) -> None:
    depth = 0
    while True:
        tok = cur.peek()
        if tok is None:
            return
        if depth == 0 and tok.text in (",", ")"):
            return
        cur.next()
        if tok.text == "(":
            depth += 1
        elif tok.text == ")":
            depth -= 1


def _literal(cur: _Cursor, tok: _Tok):
    if tok.kind == "string":
        return _unquote_string(tok.text)
    if tok.kind == "number":
        t = tok.text
        if re.fullmatch(r"[-+]?\d+", t):
            return int(t)
        return float(t)
    if tok.kind == "ident":
        up = tok.upper
        if up == "NULL":
            return None
        if up == "TRUE":
            return 1
        if up == "FALSE":
            return 0
    if tok.kind == "other" and tok.text == "-":
        nxt = cur.next()
        val = _literal(cur, nxt)
        if isinstance(val, (int, float)):
            return -val
    raise cur.p.error(f"unsupported literal {tok.text!r}", tok)


def _coerce(value, col: Column):
    if value is None:
        return None
    if col.type == INTEGER:
        if isinstance(value, int):
            return value
        try:
            f = float(value)
        except ValueError:
            return str(value)
        return int(f) if f.is_integer() else f
    if col.type == REAL:
        try:
            return float(value)
        except ValueError:
            return str(value)
    if isinstance(value, float) and value.is_integer() and col.type == TEXT:
        return str(value)
    return str(value)


def _parse_insert(cur: _Cursor, drafts: dict[str, _TableDraft]) -> None:
    start_tok = cur.peek()
    cur.accept("IGNORE")
    cur.expect("INTO")
    name = cur.name()
    draft = _find_table(drafts, name)
    if draft is None:
        raise cur.p.error(f"INSERT into undeclared table {name!r}", start_tok)
    positions = list(range(len(draft.columns)))
    if cur.peek() is not None and cur.peek().text == "(":
        cols = cur.name_list()
        by_name = {c.name: i for i, c in enumerate(draft.columns)}
        try:
            positions = [by_name[c] for c in cols]
        except KeyError as e:
            raise cur.p.error(f"unknown column {e.args[0]!r} in INSERT into {name!r}", start_tok) from None
    if not (cur.accept("VALUES") or cur.accept("VALUE")):
        raise cur.p.error("expected VALUES", cur.peek() or start_tok)
    n = len(draft.columns)
    toks = cur.toks
    while True:
        open_tok = cur.expect("(")
        values = []
        while True:
            tok = cur.next()
            if tok.text == ")" and tok.kind == "punct":
                if values:
                    raise cur.p.error("trailing comma in VALUES tuple", tok)
                break
            values.append(_literal(cur, tok))
            sep = cur.next()
            if sep.text == ")":
                break
            if sep.text != ",":
                raise cur.p.error(f"expected ',' or ')', found {sep.text!r}", sep)
        ordinal = len(draft.rows) + 1
        if len(values) != len(positions):
            raise cur.p.error(
                f"INSERT into {name!r}: row {ordinal} has {len(values)} values, expected {len(positions)}",
                open_tok,
            )
        if len(positions) == n and positions == list(range(n)):
            row = tuple(_coerce(v, c) for v, c in zip(values, draft.columns))
        else:
            full = [None] * n
            for p, v in zip(positions, values):
                full[p] = _coerce(v, draft.columns[p])
            row = tuple(full)
        draft.rows.append(row)
        if cur.accept(","):
            continue
        break
    del toks
    if not cur.at_end():
        tok = cur.peek()
        if not (tok.upper == "ON"):  # ON DUPLICATE KEY UPDATE ... is ignored
            raise cur.p.error(f"unexpected {tok.text!r} after VALUES", tok)


def _find_table(drafts: dict[str, _TableDraft], name: str) -> _TableDraft | None:
    if name in drafts:
        return drafts[name]
    matches = [d for n, d in drafts.items() if n.lower() == name.lower()]
    return matches[0] if len(matches) == 1 else None


def _parse_alter(cur: _Cursor, drafts: dict[str, _TableDraft]) -> None:
    cur.accept("ONLY")
    cur.accept("IF", "EXISTS")
    cur.accept("ONLY")
    name = cur.name()
    draft = _find_table(drafts, name)
    if draft is None:
        return
    while not cur.at_end():
        if cur.accept("ADD"):
            if cur.accept("CONSTRAINT") and cur.peek().upper not in ("PRIMARY", "FOREIGN"):
                cur.name()
            if cur.accept("PRIMARY", "KEY"):
                draft.primary_key = cur.name_list()
            elif cur.accept("FOREIGN", "KEY"):
                if cur.peek().text != "(":
                    cur.name()
                cols = cur.name_list()
                cur.expect("REFERENCES")
                ref = cur.name()
                ref_cols = cur.name_list() if cur.peek() is not None and cur.peek().text == "(" else []
                if len(cols) == 1 and len(ref_cols) <= 1:
                    draft.foreign_keys.append((cols[0], ref, ref_cols[0] if ref_cols else ""))
        _skip_to_comma(cur)
        if not cur.accept(","):
            break


def parse_sql_dump(text: str, infer_foreign_keys: bool = True) -> RelationalDatabase:
    """Parse dump text into a :class:`RelationalDatabase`.

    Tables that declare no foreign keys get them inferred by naming
    convention: a column ``<table>_id`` or a column named like another
    table's primary key.
    """
    if text.startswith("\ufeff"):
        text = text[1:]
    parser = _Parser(text)
    drafts: dict[str, _TableDraft] = {}
    for toks in parser.statements():
        cur = _Cursor(parser, toks)
        head = toks[0]
        if cur.accept("CREATE", "TABLE") or cur.accept("CREATE", "TEMPORARY", "TABLE"):
            draft = _parse_create(cur)
            if _find_table(drafts, draft.name) is not None:
                raise parser.error(f"duplicate table name {draft.name!r}", head)
            drafts[draft.name] = draft
        elif cur.accept("INSERT") or cur.accept("REPLACE"):
            _parse_insert(cur, drafts)
        elif cur.accept("ALTER", "TABLE"):
            _parse_alter(cur, drafts)
        elif head.kind not in ("ident", "qident"):
            raise parser.error(f"malformed statement starting with {head.text!r}", head)
    return _build(drafts, infer_foreign_keys)


def _build(drafts: dict[str, _TableDraft], infer: bool) -> RelationalDatabase:
    tables = []
    for d in drafts.values():
        pk = d.primary_key[0] if len(d.primary_key) == 1 else None
        if len(d.primary_key) > 1:
            log.warning("%s: composite primary key %s treated as no key", d.name, d.primary_key)
        tables.append(Table(d.name, tuple(d.columns), pk, d.rows))
    by_name = {t.name: t for t in tables}
    lower = {t.name.lower(): t for t in tables}
    fks: list[ForeignKey] = []
    for d in drafts.values():
        for col, ref, ref_col in d.foreign_keys:
            target = by_name.get(ref) or lower.get(ref.lower())
            if target is None:
                raise SqlParseError(f"foreign key {d.name}.{col} references unknown table {ref!r}", d.line)
            ref_col = ref_col or target.primary_key
            if ref_col is None:
                raise SqlParseError(f"foreign key {d.name}.{col} needs a referenced column", d.line)
            fks.append(ForeignKey(d.name, col, target.name, ref_col))
    if infer:
        declared = {fk.table for fk in fks}
        for t in tables:
            if t.name in declared:
                continue
            fks.extend(_infer_foreign_keys(t, tables))
    return RelationalDatabase(tables, fks)


def _infer_foreign_keys(table: Table, tables: list[Table]) -> list[ForeignKey]:
    out = []
    for c in table.columns:
        if c.name == table.primary_key:
            continue
        for other in tables:
            if other is table or other.primary_key is None:
                continue
            if c.name.lower() == f"{other.name.lower()}_id" or c.name.lower() == other.primary_key.lower():
                out.append(ForeignKey(table.name, c.name, other.name, other.primary_key))
                break
    return out


# -- writer -----------------------------------------------------------------


def _quote_ident(name: str) -> str:
    return "`" + name.replace("`", "``") + "`"


def _sql_literal(v) -> str:
    if v is None:
        return "NULL"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    s = str(v).replace("\\", "\\\\").replace("'", "''").replace("\n", "\\n").replace("\r", "\\r")
    return f"'{s}'"


def _declared(col: Column) -> str:
    if col.declared:
        return col.declared
    return {INTEGER: "INT", REAL: "DOUBLE", TEXT: "TEXT"}[col.type]


def serialize(db: RelationalDatabase, rows_per_insert: int = 500) -> str:
    """Render ``db`` as a dump in the supported subset (foreign keys written explicitly)."""
    out: list[str] = []
    fks_by_table: dict[str, list[ForeignKey]] = {}
    for fk in db.foreign_keys:
        fks_by_table.setdefault(fk.table, []).append(fk)
    for t in db.tables.values():
        defs = [f"  {_quote_ident(c.name)} {_declared(c)}" for c in t.columns]
        if t.primary_key is not None:
            defs.append(f"  PRIMARY KEY ({_quote_ident(t.primary_key)})")
        for fk in fks_by_table.get(t.name, []):
            defs.append(
                f"  FOREIGN KEY ({_quote_ident(fk.column)}) REFERENCES "
                f"{_quote_ident(fk.ref_table)} ({_quote_ident(fk.ref_column)})"
            )
        out.append(f"CREATE TABLE {_quote_ident(t.name)} (\n" + ",\n".join(defs) + "\n);")
    for t in db.tables.values():
        for i in range(0, len(t.rows), rows_per_insert):
            chunk = t.rows[i : i + rows_per_insert]
            vals = ",\n".join("(" + ", ".join(_sql_literal(v) for v in r) + ")" for r in chunk)
            out.append(f"INSERT INTO {_quote_ident(t.name)} VALUES\n{vals};")
    return "\n".join(out) + "\n"
