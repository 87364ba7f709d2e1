from typing import Sequence
from contextlib import contextmanager

from sqlite_utils import Database

from ..errors import StoreLoadError

import logging
logger = logging.getLogger(__name__)

__all__ = ["BenchmarkDB"]

_KEY = ("arch", "dataset")


class BenchmarkDB:
    """
    Benchmark records in a local SQLite file, one row per (arch, dataset),
    using sqlite-utils.

    Columns follow the canonical CSV schema, in the same order.
    """

    def __init__(
        self,
        db_path : str,
        columns : Sequence[str] | None = None,
        table_name : str = "records",
        create : bool = True,
    ):
        """
        Open (and optionally create) a benchmark database.

        Parameters
        ----------
        db_path : str
            Path to the SQLite database file.
        columns : Sequence[str] | None
            Canonical column names used when the table has to be created.
        table_name : str, optional
            Name of the table holding the records.
        create : bool, optional
            Create the table if it does not exist. If False, a missing table is
            a load error.
        """
        self.db_path = db_path
        self.table_name = table_name
        self.db = Database(db_path)

        if not self.table.exists():
            if not create or columns is None:
                self.db.close()
                raise StoreLoadError(f"No table {table_name!r} in benchmark database", db_path)
            schema = {c: (str if c in _KEY else float) for c in columns}
            self.table.create(schema, pk=_KEY)

    @contextmanager
    def transaction(self):
        """
        Commit on success, roll back and re-raise on error.
        """
        try:
            with self.db.conn:
                yield
        except Exception:
            logger.exception(f"Transaction failed on table {self.table_name!r}, rolling back.")
            raise

    def add(self, rows : dict | Sequence[dict]) -> int:
        """
        Insert benchmark rows. Duplicate (arch, dataset) keys fail the whole batch.

        Returns
        -------
        int
            Number of rows inserted.
        """
        if isinstance(rows, dict):
            rows = [rows]
        items = [dict(r) for r in rows]
        if not items:
            return 0
        with self.transaction():
            logger.info(f"Adding {len(items)} rows to benchmark DB {self.db_path!r}")
            self.table.insert_all(items, pk=_KEY)
        return len(items)

    def query(self, dataset : str | None = None, arch : str | None = None) -> list[dict]:
        """
        Rows matching the given filters, in insertion order.
        """
        sql = []
        params = {}
        if dataset is not None:
            sql.append("dataset = :dataset")
            params['dataset'] = dataset
        if arch is not None:
            sql.append("arch = :arch")
            params['arch'] = arch
        where = " AND ".join(sql) if sql else None
        return [dict(r) for r in self.table.rows_where(where, params, order_by="rowid")]

    @property
    def table(self):
        """
        The sqlite-utils table object holding the records.
        """
        return self.db[self.table_name]

    @property
    def columns(self) -> list[str]:
        return [c.name for c in self.table.columns]

    @property
    def rows(self):
        """
        Generator over all rows as dictionaries, in insertion order.
        """
        return self.table.rows_where(order_by="rowid")

    def close(self):
        self.db.close()

    def __len__(self):
        return self.table.count

    def __repr__(self):
        return (
            f"BenchmarkDB(\n"
            f"    db_path={self.db_path!r},\n"
            f"    table_name={self.table_name!r},\n"
            f"    entries={self.table.count}\n"
            f"  )"
        )
