import sqlite3

import pytest

from niche_nas.arch_space import ArchCell, encode
from niche_nas.benchmark.local_database import BenchmarkDB
from niche_nas.benchmark.store import canonical_columns
from niche_nas.errors import StoreLoadError


def make_rows(n, dataset="cifar10"):
    rows = []
    for i in range(n):
        rows.append({
            "arch": encode(ArchCell((i % 5, 0, 0, 0, 0, i // 5))),
            "dataset": dataset,
            "accuracy": 60.0 + i,
            "lat_edgegpu": 1.0 + 0.25 * i,
        })
    return rows


def test_local_db_basic(tmp_path):
    db = BenchmarkDB(str(tmp_path / "bench.db"), columns=canonical_columns(["edgegpu"], False))
    try:
        assert len(db) == 0
        assert db.add(make_rows(5)) == 5
        assert db.add(make_rows(3, dataset="cifar100")) == 3
        assert len(db) == 8
        assert db.columns == ["arch", "dataset", "accuracy", "lat_edgegpu"]

        rows = db.query(dataset="cifar100")
        assert [r["accuracy"] for r in rows] == [60.0, 61.0, 62.0]

        arch = make_rows(5)[2]["arch"]
        hit = db.query(dataset="cifar10", arch=arch)
        assert len(hit) == 1 and hit[0]["lat_edgegpu"] == 1.5
        assert "entries=8" in repr(db)
    finally:
        db.close()


def test_duplicate_key_fails_whole_batch(tmp_path):
    db = BenchmarkDB(str(tmp_path / "bench.db"), columns=canonical_columns(["edgegpu"], False))
    try:
        db.add(make_rows(2))
        with pytest.raises(sqlite3.IntegrityError):
            db.add(make_rows(4))
        assert len(db) == 2
    finally:
        db.close()


def test_missing_table_is_a_load_error(tmp_path):
    path = tmp_path / "empty.db"
    sqlite3.connect(path).close()
    with pytest.raises(StoreLoadError):
        BenchmarkDB(str(path), create=False)
