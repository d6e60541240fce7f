import math

import pytest
from hypothesis import given, strategies as st

from relprop import bundled_dataset
from relprop.relstore import INTEGER, REAL, TEXT, Column, ForeignKey, RelationalDatabase, Table
from relprop.sqldump import SqlParseError, parse_sql_dump, serialize


def _read(name):
    with open(bundled_dataset(name), encoding="utf-8") as fh:
        return fh.read()


def _shape(db):
    return (
        [(t.name, [(c.name, c.type) for c in t.columns], t.primary_key, list(t.rows)) for t in db.tables.values()],
        sorted(db.foreign_keys, key=str),
    )


def test_toy_dump():
    db = parse_sql_dump(_read("toy_trains"))
    assert [(n, t.row_count) for n, t in db.tables.items()] == [("TRAIN", 2), ("CAR", 4)]
    assert db.foreign_keys == (ForeignKey("CAR", "train", "TRAIN", "trainID"),)
    assert db.table("CAR").rows[3] == ("c52", "hexagon", "flat", "t5")


def test_single_table_has_no_edges():
    db = parse_sql_dump("CREATE TABLE x (a INT, b TEXT); INSERT INTO x VALUES (1, 'p');")
    assert db.foreign_keys == ()
    assert db.table("x").primary_key is None


def test_column_types_and_values():
    db = parse_sql_dump(
        "CREATE TABLE t (i INTEGER, f DOUBLE PRECISION, r REAL, d DECIMAL(5,2), s VARCHAR(10), c CHAR(2));"
        "INSERT INTO t VALUES (3, 1.5, 2, '4.25', 'it''s', NULL), (-1, -2e3, .5, 1, 'a\\nb', 'zz');"
    )
    t = db.table("t")
    assert [c.type for c in t.columns] == [INTEGER, REAL, REAL, REAL, TEXT, TEXT]
    assert t.rows[0] == (3, 1.5, 2.0, 4.25, "it's", None)
    assert t.rows[1] == (-1, -2000.0, 0.5, 1.0, "a\nb", "zz")


def test_comments_and_ignored_statements():
    text = """
    -- leading comment
    /* block
       comment */
    SET NAMES utf8;
    DROP TABLE IF EXISTS `a`;
    # hash comment
    CREATE TABLE `a` (`id` int(11) NOT NULL AUTO_INCREMENT, `v` text, PRIMARY KEY (`id`), KEY `ix` (`v`(10))) ENGINE=InnoDB DEFAULT CHARSET=utf8;
    LOCK TABLES `a` WRITE;
    INSERT INTO `a` (`v`, `id`) VALUES ('x;y', 1);
    UNLOCK TABLES;
    """
    db = parse_sql_dump(text)
    assert db.table("a").rows == [(1, "x;y")]
    assert db.table("a").primary_key == "id"


def test_inline_and_alter_keys():
    db = parse_sql_dump(
        "CREATE TABLE p (id INT PRIMARY KEY);"
        "CREATE TABLE c (cid INT, pid INT REFERENCES p(id));"
        "ALTER TABLE c ADD CONSTRAINT pk PRIMARY KEY (cid);"
        "CREATE TABLE d (did INT, owner INT);"
        "ALTER TABLE d ADD CONSTRAINT fk1 FOREIGN KEY (owner) REFERENCES c (cid);"
    )
    assert db.table("c").primary_key == "cid"
    assert set(db.foreign_keys) == {ForeignKey("c", "pid", "p", "id"), ForeignKey("d", "owner", "c", "cid")}


def test_foreign_key_inference_by_name():
    db = parse_sql_dump(
        "CREATE TABLE molecule (molecule_id TEXT PRIMARY KEY, y TEXT);"
        "CREATE TABLE atom (atom_id TEXT PRIMARY KEY, molecule_id TEXT, element TEXT);"
        "CREATE TABLE bond (id INT PRIMARY KEY, atom_id TEXT);"
        "CREATE TABLE note (id INT PRIMARY KEY, molecule_id2 TEXT);"
    )
    assert set(db.foreign_keys) == {
        ForeignKey("atom", "molecule_id", "molecule", "molecule_id"),
        ForeignKey("bond", "atom_id", "atom", "atom_id"),
    }
    assert parse_sql_dump("CREATE TABLE a (a_id INT PRIMARY KEY); CREATE TABLE b (x INT, a_id INT);", False).foreign_keys == ()


def test_table_suffix_naming_convention():
    db = parse_sql_dump("CREATE TABLE drug (code TEXT PRIMARY KEY); CREATE TABLE dose (id INT PRIMARY KEY, drug_id TEXT);")
    assert db.foreign_keys == (ForeignKey("dose", "drug_id", "drug", "code"),)


def test_declared_keys_suppress_inference():
    db = parse_sql_dump(
        "CREATE TABLE a (a_id INT PRIMARY KEY); CREATE TABLE b (b_id INT PRIMARY KEY);"
        "CREATE TABLE c (id INT, a_id INT, b_id INT, FOREIGN KEY (a_id) REFERENCES a (a_id));"
    )
    assert db.foreign_keys == (ForeignKey("c", "a_id", "a", "a_id"),)


@pytest.mark.parametrize(
    "text, message, line",
    [
        ("CREATE TABLE a (x INT);\nCREATE TABLE a (y INT);", "duplicate", 2),
        ("CREATE TABLE a (x INT, y INT);\n\nINSERT INTO a VALUES (1, 2), (3);", "'a'.*row 2 has 1 values, expected 2", 3),
        ("INSERT INTO nowhere VALUES (1);", "nowhere", 1),
        ("CREATE TABLE a (x INT);\n( 1 );", "malformed", 2),
        ("CREATE TABLE a (x INT);\nINSERT INTO a VALUES ('open);", "unterminated", 2),
    ],
)
def test_errors_carry_line_numbers(text, message, line):
    with pytest.raises(SqlParseError, match=message) as info:
        parse_sql_dump(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")


def test_bundled_dumps_round_trip():
    for name in ("toy_trains", "trains_synthetic"):
        db = parse_sql_dump(_read(name))
        again = parse_sql_dump(serialize(db))
        assert _shape(again) == _shape(db)
        assert serialize(again) == serialize(db)


def test_bundled_trains_dump_has_twenty_instances(trains_db):
    assert len(trains_db.instances()) == 20
    assert trains_db.classes == ("east", "west")


_names = st.text(alphabet="abcXYZ_ `9", min_size=1, max_size=6).filter(lambda s: s.strip() == s)
_text_values = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=8)


@st.composite
def databases(draw):
    names = draw(st.lists(_names, min_size=1, max_size=3, unique_by=str.lower))
    tables = []
    for name in names:
        n_cols = draw(st.integers(1, 4))
        col_names = draw(st.lists(_names, min_size=n_cols, max_size=n_cols, unique_by=str.lower))
        types = draw(st.lists(st.sampled_from([INTEGER, REAL, TEXT]), min_size=n_cols, max_size=n_cols))
        strategies = {
            INTEGER: st.integers(-(2**63), 2**63 - 1),
            REAL: st.floats(allow_nan=False, allow_infinity=False),
            TEXT: _text_values,
        }
        rows = draw(
            st.lists(
                st.tuples(*(st.one_of(st.none(), strategies[t]) for t in types)).map(tuple),
                max_size=5,
            )
        )
        cols = tuple(Column(c, t) for c, t in zip(col_names, types))
        tables.append(Table(name, cols, col_names[0] if types[0] == INTEGER else None, rows))
    fks = []
    if len(tables) > 1 and tables[0].primary_key is not None:
        src = tables[1]
        fks.append(ForeignKey(src.name, src.columns[-1].name, tables[0].name, tables[0].primary_key))
    return RelationalDatabase(tables, fks)


@given(databases(), st.integers(1, 3))
def test_serialize_then_parse_is_identity(db, per_insert):
    text = serialize(db, rows_per_insert=per_insert)
    again = parse_sql_dump(text, infer_foreign_keys=False)
    assert _shape(again) == _shape(db)
    assert serialize(parse_sql_dump(serialize(again), infer_foreign_keys=False)) == serialize(again)


def test_real_values_survive_exactly():
    db = RelationalDatabase([Table("t", (Column("x", REAL),), None, [(0.1,), (-1e-300,), (math.pi,)])])
    assert parse_sql_dump(serialize(db)).table("t").rows == [(0.1,), (-1e-300,), (math.pi,)]
