"""Generated datasets used by the tests, acceptance checks and scripts."""

from __future__ import annotations

import numpy as np

from .relstore import INTEGER, TEXT, Column, ForeignKey, RelationalDatabase, Table
from .wordify import InstanceBag, frequency_selection, to_sparse_matrix


def indicator_bags(n: int = 100, n_noise: int = 20, noise_per_bag: int = 3, seed: int = 0) -> list[InstanceBag]:
    """Class-indicator data: ``x1`` only in class-0 bags, ``x2`` only in class-1 bags.

    Every bag also holds ``noise_per_bag`` items drawn from a shared pool,
    independent of the class.
    """
    rng = np.random.default_rng(seed)
    bags = []
    for i in range(n):
        label = i % 2
        noise = rng.choice(n_noise, size=noise_per_bag, replace=False)
        items = (f"x{label + 1}",) + tuple(f"noise{j}" for j in sorted(noise))
        bags.append(InstanceBag(i, items, label))
    return bags


def indicator_dataset(n: int = 100, seed: int = 0):
    bags = indicator_bags(n, seed=seed)
    vocab = frequency_selection(bags, budget=10_000)
    matrix, labels = to_sparse_matrix(bags, vocab)
    return bags, vocab, matrix, labels


def _table(name, cols, pk, rows):
    return Table(name, tuple(Column(c, t) for c, t in cols), pk, rows)


def chain_database(length: int = 4) -> RelationalDatabase:
    """Tables A <- B <- C <- D ...; each table has one row linked to the previous table."""
    names = [chr(ord("A") + i) for i in range(length)]
    tables, fks = [], []
    for i, name in enumerate(names):
        cols = [("id", INTEGER), ("val", TEXT)]
        row: tuple = (1, f"{name.lower()}v")
        if i:
            cols.append(("parent", INTEGER))
            row = row + (1,)
            fks.append(ForeignKey(name, "parent", names[i - 1], "id"))
        if i == 0:
            cols.append(("label", TEXT))
            row = row + ("yes",)
            tables.append(_table(name, cols, "id", [row, (2, "av", "no")]))
        else:
            tables.append(_table(name, cols, "id", [row]))
    return RelationalDatabase(tables, fks).with_target("A", "label")


def diamond_database() -> RelationalDatabase:
    """Target T; B and C point at T; D points at both B and C.

    D row d1 links to b1 and c1, both of which belong to t1, so d1 is
    reachable from t1 along two distinct paths.
    """
    t = _table("T", [("id", INTEGER), ("cls", TEXT)], "id", [(1, "pos"), (2, "neg")])
    b = _table("B", [("id", INTEGER), ("t", INTEGER), ("colour", TEXT)], "id", [(1, 1, "red"), (2, 2, "blue")])
    c = _table("C", [("id", INTEGER), ("t", INTEGER), ("size", TEXT)], "id", [(1, 1, "big"), (2, 2, "small")])
    d = _table(
        "D",
        [("id", INTEGER), ("b", INTEGER), ("c", INTEGER), ("kind", TEXT)],
        "id",
        [(1, 1, 1, "k1"), (2, 2, 2, "k2")],
    )
    fks = [
        ForeignKey("B", "t", "T", "id"),
        ForeignKey("C", "t", "T", "id"),
        ForeignKey("D", "b", "B", "id"),
        ForeignKey("D", "c", "C", "id"),
    ]
    return RelationalDatabase([t, b, c, d], fks).with_target("T", "cls")


def scalability_database(n_customers: int = 100_000, seed: int = 0) -> RelationalDatabase:
    """Five-table star/snowflake schema around a ``customers`` target table.

    customers -> regions; orders -> customers; orders -> products;
    shipments -> orders.  Roughly 2.5 orders and 2.5 shipments per customer.
    """
    rng = np.random.default_rng(seed)
    n_regions, n_products = 50, 1000
    regions = _table(
        "regions",
        [("region_id", INTEGER), ("climate", TEXT), ("zone", TEXT)],
        "region_id",
        [(i, f"c{i % 4}", f"z{i % 7}") for i in range(n_regions)],
    )
    products = _table(
        "products",
        [("product_id", INTEGER), ("category", TEXT), ("brand", TEXT)],
        "product_id",
        [(i, f"cat{i % 12}", f"b{i % 30}") for i in range(n_products)],
    )
    seg = rng.integers(0, 6, n_customers)
    reg = rng.integers(0, n_regions, n_customers)
    churn = (rng.random(n_customers) < 0.3 + 0.08 * seg).astype(int)
    customers = _table(
        "customers",
        [("customer_id", INTEGER), ("segment", TEXT), ("tier", TEXT), ("region_id", INTEGER), ("churn", TEXT)],
        "customer_id",
        [
            (i, f"s{seg[i]}", f"t{(i * 7) % 3}", int(reg[i]), "yes" if churn[i] else "no")
            for i in range(n_customers)
        ],
    )
    n_orders = rng.integers(1, 5, n_customers)
    owner = np.repeat(np.arange(n_customers), n_orders)
    prod = rng.integers(0, n_products, len(owner))
    channel = rng.integers(0, 4, len(owner))
    orders = _table(
        "orders",
        [("order_id", INTEGER), ("customer_id", INTEGER), ("product_id", INTEGER), ("channel", TEXT)],
        "order_id",
        [(j, int(owner[j]), int(prod[j]), f"ch{channel[j]}") for j in range(len(owner))],
    )
    carrier = rng.integers(0, 5, len(owner))
    speed = rng.integers(0, 3, len(owner))
    shipments = _table(
        "shipments",
        [("shipment_id", INTEGER), ("order_id", INTEGER), ("carrier", TEXT), ("speed", TEXT)],
        "shipment_id",
        [(j, j, f"cr{carrier[j]}", f"sp{speed[j]}") for j in range(len(owner))],
    )
    fks = [
        ForeignKey("customers", "region_id", "regions", "region_id"),
        ForeignKey("orders", "customer_id", "customers", "customer_id"),
        ForeignKey("orders", "product_id", "products", "product_id"),
        ForeignKey("shipments", "order_id", "orders", "order_id"),
    ]
    db = RelationalDatabase([customers, regions, orders, products, shipments], fks)
    return db.with_target("customers", "churn")


# -- synthetic trains ---------------------------------------------------------

_SHAPES = ("rectangle", "u_shaped", "bucket", "hexagon", "ellipse")
_LOADS = ("circle", "triangle", "rectangle", "hexagon", "diamond")


def synthetic_trains(n_trains: int = 20, seed: int = 7) -> RelationalDatabase:
    """East/west trains generated at random and labelled by a fixed rule.

    A train is eastbound iff it has a short car with a closed roof.  The
    schema mirrors the usual trains/cars benchmark layout (cars carry ten
    attributes including keys).  This is a stand-in fixture, not the
    benchmark data.
    """
    rng = np.random.default_rng(seed)
    trains, cars = [], []
    car_id = 1
    for t in range(1, n_trains + 1):
        want_east = t % 2 == 1
        while True:
            n_cars = int(rng.integers(2, 5))
            layout = []
            for pos in range(1, n_cars + 1):
                length = "short" if rng.random() < 0.5 else "long"
                roof = ("none", "flat", "peaked", "jagged", "arc")[int(rng.integers(0, 5))]
                layout.append(
                    (
                        pos,
                        _SHAPES[int(rng.integers(0, len(_SHAPES)))],
                        length,
                        "double" if rng.random() < 0.15 else "not_double",
                        roof,
                        int(rng.integers(2, 4)),
                        _LOADS[int(rng.integers(0, len(_LOADS)))],
                        int(rng.integers(0, 4)),
                    )
                )
            east = any(s[2] == "short" and s[4] != "none" for s in layout)
            if east == want_east:
                break
        trains.append((t, "east" if east else "west"))
        for s in layout:
            cars.append((car_id, t) + s)
            car_id += 1
    train_tab = _table("trains", [("id", INTEGER), ("direction", TEXT)], "id", trains)
    car_tab = _table(
        "cars",
        [
            ("car_id", INTEGER),
            ("train_id", INTEGER),
            ("position", INTEGER),
            ("shape", TEXT),
            ("len", TEXT),
            ("sides", TEXT),
            ("roof", TEXT),
            ("wheels", INTEGER),
            ("load_shape", TEXT),
            ("load_num", INTEGER),
        ],
        "car_id",
        cars,
    )
    db = RelationalDatabase([train_tab, car_tab], [ForeignKey("cars", "train_id", "trains", "id")])
    return db.with_target("trains", "direction")

