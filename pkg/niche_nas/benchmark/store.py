from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence
import csv
import json
import math
import tomllib

import numpy as np

from ..arch_space import SPACE_SIZE, decode, encode
from ..errors import ArchDecodeError, ArchNotFoundError, ConfigError, StoreError, StoreLoadError
from ..objectives import FrontSet, NormalizationBounds, ObjectivePoint, non_dominated_sort, normalize_pairs

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'DEVICES',
    'NUM_PROXIES',
    'PROXY_COLUMNS',
    'BenchmarkRecord',
    'LookupResult',
    'DatasetTable',
    'ColumnMapping',
    'BenchmarkStore',
    'canonical_columns',
    'load_store',
    'save_store',
    'lookup',
    'true_front',
]

DEVICES = ("edgegpu", "raspi4", "edgetpu", "pixel3", "eyeriss", "fpga")
NUM_PROXIES = 13
PROXY_COLUMNS = tuple(f"zc_{i:02d}" for i in range(NUM_PROXIES))
_LAT_PREFIX = "lat_"
_BASE_COLUMNS = ("arch", "dataset", "accuracy")
_FORMATS = {
    ".csv": "csv",
    ".jsonl": "jsonl",
    ".ndjson": "jsonl",
    ".db": "sqlite",
    ".sqlite": "sqlite",
}


@dataclass(frozen=True)
class BenchmarkRecord:
    """
    One (architecture, dataset) row of a benchmark.

    Parameters
    ----------
    arch : str
        Canonical architecture string.
    dataset : str
        Dataset the accuracy refers to.
    accuracy : float
        Accuracy in percent.
    latency : Mapping[str, float]
        Latency in milliseconds per device id.
    proxy_features : tuple[float, ...] | None
        The 13 zero-cost proxy scores, if available.
    """
    arch : str
    dataset : str
    accuracy : float
    latency : Mapping[str, float] = field(default_factory=dict)
    proxy_features : tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.dataset:
            raise ValueError(f"Record for {self.arch!r} has an empty dataset name")
        if not math.isfinite(self.accuracy):
            raise ValueError(f"Record for {self.arch!r} has a non-finite accuracy")
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"Record for {self.arch!r} has accuracy {self.accuracy} outside [0, 100]")
        for device, value in self.latency.items():
            if not value > 0:
                raise ValueError(f"Latency for {self.arch!r} on {device!r} must be > 0, got {value}")
        object.__setattr__(self, 'latency', MappingProxyType(dict(self.latency)))
        if self.proxy_features is not None:
            features = tuple(float(v) for v in self.proxy_features)
            if len(features) != NUM_PROXIES:
                raise ValueError(
                    f"Record for {self.arch!r} has {len(features)} proxy features, expected {NUM_PROXIES}"
                )
            object.__setattr__(self, 'proxy_features', features)

    def to_row(self, devices : Sequence[str], with_proxies : bool) -> dict:
        row = {'arch': self.arch, 'dataset': self.dataset, 'accuracy': self.accuracy}
        for device in devices:
            row[_LAT_PREFIX + device] = self.latency[device]
        if with_proxies:
            row.update(zip(PROXY_COLUMNS, self.proxy_features))
        return row


class LookupResult(NamedTuple):
    point : ObjectivePoint
    proxy_features : tuple[float, ...] | None


@dataclass(frozen=True, eq=False)
class DatasetTable:
    """
    Column arrays of one dataset, in store order.
    """
    archs : tuple[str, ...]
    accuracy : np.ndarray
    latency : Mapping[str, np.ndarray]
    features : np.ndarray | None
    positions : Mapping[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'positions', MappingProxyType({a: i for i, a in enumerate(self.archs)}))

    def index_of(self, arch : str) -> int:
        return self.positions[arch]


def canonical_columns(devices : Sequence[str], with_proxies : bool) -> list[str]:
    """
    Header of the canonical CSV schema for ``devices``.
    """
    cols = list(_BASE_COLUMNS) + [_LAT_PREFIX + d for d in devices]
    if with_proxies:
        cols += list(PROXY_COLUMNS)
    return cols


@dataclass
class ColumnMapping:
    """
    Maps the columns of a foreign benchmark export onto the canonical schema.

    Parameters
    ----------
    columns : dict[str, str]
        Canonical column name -> foreign column name.
    defaults : dict[str, str | float]
        Constant values for canonical columns the export lacks (e.g. ``dataset``).

    Examples
    --------
    A mapping file::

        [columns]
        arch = "arch_str"
        accuracy = "test_accuracy"
        lat_edgegpu = "edgegpu_latency"

        [defaults]
        dataset = "cifar10"
    """
    columns : dict[str, str] = field(default_factory=dict)
    defaults : dict[str, str | float] = field(default_factory=dict)

    @classmethod
    def from_toml(cls, path : str | Path) -> 'ColumnMapping':
        with open(path, "rb") as f:
            data = tomllib.load(f)
        unknown = set(data) - {'columns', 'defaults'}
        if unknown:
            raise ConfigError(f"Unknown keys in column mapping {str(path)!r}: {sorted(unknown)}")
        return cls(columns=dict(data.get('columns', {})), defaults=dict(data.get('defaults', {})))

    def apply(self, header : Sequence[str]) -> dict[str, str]:
        """
        Foreign header name -> canonical name, for the columns that are kept.
        """
        reverse = {foreign: canonical for canonical, foreign in self.columns.items()}
        out = {}
        for name in header:
            if name in reverse:
                out[name] = reverse[name]
            elif name not in self.columns and _is_canonical_name(name):
                out[name] = name
        return out


def _is_canonical_name(name : str) -> bool:
    return name in _BASE_COLUMNS or name in PROXY_COLUMNS or name.startswith(_LAT_PREFIX)


class BenchmarkStore:
    """
    Read-only lookup tables of a benchmark: accuracy, per-device latency and
    optional zero-cost proxy features, keyed by (canonical arch, dataset).

    Parameters
    ----------
    records : Iterable[BenchmarkRecord]
        The records. Arch strings are canonicalized.
    devices : Sequence[str] | None
        Devices covered by every record. Defaults to the devices of the first record.
    source : str | None
        Where the records came from, for reporting.
    """

    def __init__(
        self,
        records : Iterable[BenchmarkRecord],
        devices : Sequence[str] | None = None,
        source : str | None = None,
    ):
        self.source = source
        self._records : dict[tuple[str, str], BenchmarkRecord] = {}
        for record in records:
            try:
                arch = encode(decode(record.arch))
            except ArchDecodeError as e:
                raise StoreError(f"Invalid architecture in record: {e}") from e
            if arch != record.arch:
                record = BenchmarkRecord(arch, record.dataset, record.accuracy, record.latency, record.proxy_features)
            key = (arch, record.dataset)
            if key in self._records:
                msg = f"Duplicate record for arch={arch!r} dataset={record.dataset!r}"
                logger.error(msg)
                raise StoreError(msg)
            self._records[key] = record
        if not self._records:
            raise StoreError("A benchmark store needs at least one record.")

        first = next(iter(self._records.values()))
        if devices is None:
            devices = [d for d in DEVICES if d in first.latency] + sorted(set(first.latency) - set(DEVICES))
        self.devices = tuple(devices)
        for record in self._records.values():
            missing = [d for d in self.devices if d not in record.latency]
            if missing:
                raise StoreError(f"Record {record.arch!r} lacks latency for devices {missing}")
        self.has_proxy_features = all(r.proxy_features is not None for r in self._records.values())
        self._tables = {ds: self._build_table(ds) for ds in sorted({k[1] for k in self._records})}
        logger.info(
            f"Benchmark store ready: {len(self)} records, datasets={self.datasets}, "
            f"devices={list(self.devices)}, proxies={self.has_proxy_features}"
        )

    def _build_table(self, dataset : str) -> DatasetTable:
        records = [r for (_, ds), r in self._records.items() if ds == dataset]
        features = None
        if self.has_proxy_features:
            features = np.array([r.proxy_features for r in records], dtype=float)
        return DatasetTable(
            archs=tuple(r.arch for r in records),
            accuracy=np.array([r.accuracy for r in records], dtype=float),
            latency=MappingProxyType({
                d: np.array([r.latency[d] for r in records], dtype=float) for d in self.devices
            }),
            features=features,
        )

    ################
    #### Access ####
    ################

    @property
    def datasets(self) -> list[str]:
        return list(self._tables)

    def default_dataset(self) -> str:
        return self.datasets[0]

    def canonical(self, arch : str) -> str:
        """
        Canonical form of ``arch``; unparseable strings are reported as not found.
        """
        try:
            return encode(decode(arch))
        except ArchDecodeError as e:
            raise ArchNotFoundError(f"Architecture {arch!r} is not a valid cell string: {e}") from e

    def record(self, arch : str, dataset : str) -> BenchmarkRecord:
        key = (self.canonical(arch), dataset)
        try:
            return self._records[key]
        except KeyError:
            raise ArchNotFoundError(f"Architecture {arch!r} not found for dataset {dataset!r}") from None

    def contains(self, arch : str, dataset : str) -> bool:
        try:
            self.record(arch, dataset)
        except ArchNotFoundError:
            return False
        return True

    def lookup(self, arch : str, device : str, dataset : str) -> LookupResult:
        """
        True objectives and proxy features of one architecture.

        Raises
        ------
        ArchNotFoundError
            If the architecture (or dataset) is not in the store.
        StoreError
            If ``device`` is not covered by the store.
        """
        if device not in self.devices:
            raise StoreError(f"Device {device!r} not in store (devices: {list(self.devices)})")
        record = self.record(arch, dataset)
        return LookupResult(ObjectivePoint(record.accuracy, record.latency[device]), record.proxy_features)

    def table(self, dataset : str) -> DatasetTable:
        try:
            return self._tables[dataset]
        except KeyError:
            raise ArchNotFoundError(f"Dataset {dataset!r} not in store (datasets: {self.datasets})") from None

    def is_complete(self, dataset : str) -> bool:
        """
        True when the store covers every cell of the search space for ``dataset``.
        """
        return dataset in self._tables and len(self._tables[dataset].archs) == SPACE_SIZE

    def bounds(self, device : str, dataset : str) -> NormalizationBounds:
        """
        Min/max accuracy and latency over all records of ``dataset``.
        """
        table = self.table(dataset)
        if device not in table.latency:
            raise StoreError(f"Device {device!r} not in store (devices: {list(self.devices)})")
        return NormalizationBounds.from_arrays(table.accuracy, table.latency[device])

    def true_front(
        self,
        device : str,
        dataset : str,
        allow_partial : bool = False,
        bounds : NormalizationBounds | None = None,
    ) -> FrontSet:
        """
        Brute-force Pareto front over every record of ``dataset``.

        Parameters
        ----------
        device : str
            Device whose latency is the second objective.
        dataset : str
            Dataset whose accuracy is the first objective.
        allow_partial : bool, optional
            Compute the front even if the store does not cover the whole space.
        bounds : NormalizationBounds | None, optional
            Normalization bounds. Default: the store's own bounds.

        Raises
        ------
        StoreError
            If the store is partial and ``allow_partial`` is False.
        """
        if not self.is_complete(dataset) and not allow_partial:
            msg = (
                f"Store covers {len(self.table(dataset).archs)} of {SPACE_SIZE} architectures for "
                f"{dataset!r}; the true front needs a complete store (or allow_partial)."
            )
            logger.error(msg)
            raise StoreError(msg)
        table = self.table(dataset)
        if bounds is None:
            bounds = self.bounds(device, dataset)
        order = sorted(range(len(table.archs)), key=lambda i: table.archs[i])
        points = normalize_pairs(table.accuracy[order], table.latency[device][order], bounds)
        return non_dominated_sort(points, [table.archs[i] for i in order])

    def save(self, path : str | Path, format : str | None = None) -> Path:
        return save_store(self, path, format=format)

    def __len__(self):
        return len(self._records)

    def __iter__(self) -> Iterator[BenchmarkRecord]:
        return iter(self._records.values())

    def __repr__(self):
        return (
            f"BenchmarkStore(\n"
            f"    source={self.source!r},\n"
            f"    records={len(self)},\n"
            f"    datasets={self.datasets},\n"
            f"    devices={list(self.devices)},\n"
            f"    proxies={self.has_proxy_features}\n"
            f"  )"
        )


###############
#### Files ####
###############

def _detect_format(path : Path, format : str | None) -> str:
    if format is not None:
        format = format.lower().replace('-', '')
        if format in ('csv', 'jsonl', 'jsonlines', 'sqlite'):
            return 'jsonl' if format == 'jsonlines' else format
        raise StoreError(f"Unknown store format {format!r} (csv, jsonl, sqlite)")
    try:
        return _FORMATS[path.suffix.lower()]
    except KeyError:
        raise StoreError(f"Cannot infer store format from {str(path)!r}; pass format explicitly") from None


class _RowParser:
    """
    Validates rows of one file against the canonical schema.
    """

    def __init__(self, header : Sequence[str], path : str, mapping : ColumnMapping | None):
        self.path = path
        self.mapping = mapping
        if mapping is not None:
            self.rename = mapping.apply(header)
        else:
            unknown = [h for h in header if not _is_canonical_name(h)]
            if unknown:
                raise StoreLoadError(f"Unknown column {unknown[0]!r}", path, 1, unknown[0])
            self.rename = {h: h for h in header}
        present = set(self.rename.values()) | set(mapping.defaults if mapping else ())
        for col in _BASE_COLUMNS:
            if col not in present:
                raise StoreLoadError(f"Missing column {col!r}", path, 1, col)
        self.devices = [
            d for d in DEVICES if _LAT_PREFIX + d in present
        ] + sorted(
            c[len(_LAT_PREFIX):] for c in present
            if c.startswith(_LAT_PREFIX) and c[len(_LAT_PREFIX):] not in DEVICES
        )
        if not self.devices:
            raise StoreLoadError("Missing latency columns (lat_<device>)", path, 1, "lat_edgegpu")
        proxies = [c for c in PROXY_COLUMNS if c in present]
        if proxies and len(proxies) != NUM_PROXIES:
            missing = next(c for c in PROXY_COLUMNS if c not in present)
            raise StoreLoadError("Proxy columns must be all present or all absent", path, 1, missing)
        self.with_proxies = bool(proxies)

    def _number(self, values : dict, column : str, line : int) -> float:
        raw = values.get(column)
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise StoreLoadError(f"Unparseable number {raw!r}", self.path, line, column) from None
        if not math.isfinite(value):
            raise StoreLoadError(f"Non-finite number {raw!r}", self.path, line, column)
        return value

    def parse(self, raw : dict, line : int) -> BenchmarkRecord:
        values = dict(self.mapping.defaults) if self.mapping else {}
        for name, value in raw.items():
            if name in self.rename:
                values[self.rename[name]] = value
        arch = values.get('arch')
        try:
            arch = encode(decode(arch))
        except ArchDecodeError as e:
            raise StoreLoadError(f"Invalid architecture string: {e}", self.path, line, 'arch') from None
        dataset = values.get('dataset')
        if not isinstance(dataset, str) or not dataset:
            raise StoreLoadError(f"Invalid dataset {dataset!r}", self.path, line, 'dataset')
        accuracy = self._number(values, 'accuracy', line)
        if not 0.0 <= accuracy <= 100.0:
            raise StoreLoadError(f"Accuracy must be in [0, 100], got {accuracy}", self.path, line, 'accuracy')
        latency = {}
        for device in self.devices:
            column = _LAT_PREFIX + device
            latency[device] = self._number(values, column, line)
            if latency[device] <= 0:
                raise StoreLoadError(f"Latency must be > 0, got {latency[device]}", self.path, line, column)
        features = None
        if self.with_proxies:
            features = tuple(self._number(values, c, line) for c in PROXY_COLUMNS)
        return BenchmarkRecord(arch, dataset, accuracy, latency, features)


def _read_csv(path : Path, mapping : ColumnMapping | None) -> tuple[list[BenchmarkRecord], list[str], list[int]]:
    records, lines = [], []
    with open(path, newline='') as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise StoreLoadError("Empty file", str(path), 1) from None
        parser = _RowParser(header, str(path), mapping)
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise StoreLoadError(
                    f"Expected {len(header)} fields, got {len(row)}", str(path), reader.line_num
                )
            records.append(parser.parse(dict(zip(header, row)), reader.line_num))
            lines.append(reader.line_num)
    return records, parser.devices, lines


def _read_jsonl(path : Path, mapping : ColumnMapping | None) -> tuple[list[BenchmarkRecord], list[str], list[int]]:
    records, lines = [], []
    parser = None
    with open(path) as f:
        for line_no, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as e:
                raise StoreLoadError(f"Invalid JSON: {e.msg}", str(path), line_no) from None
            if not isinstance(obj, dict):
                raise StoreLoadError("Each line must be a JSON object", str(path), line_no)
            if parser is None:
                parser = _RowParser(list(obj), str(path), mapping)
            records.append(parser.parse(obj, line_no))
            lines.append(line_no)
    if parser is None:
        raise StoreLoadError("Empty file", str(path), 1)
    return records, parser.devices, lines


def _read_sqlite(path : Path, mapping : ColumnMapping | None) -> tuple[list[BenchmarkRecord], list[str], list[int]]:
    from .local_database import BenchmarkDB
    records, lines = [], []
    db = BenchmarkDB(str(path), create=False)
    try:
        parser = _RowParser(db.columns, str(path), mapping)
        for i, row in enumerate(db.rows, start=1):
            records.append(parser.parse(row, i))
            lines.append(i)
    finally:
        db.close()
    return records, parser.devices, lines


def load_store(
    path : str | Path,
    format : str | None = None,
    mapping : ColumnMapping | None = None,
) -> BenchmarkStore:
    """
    Load a benchmark store from a CSV, JSON-lines or sqlite file.

    Parameters
    ----------
    path : str | Path
        The file to load.
    format : str | None
        ``'csv'``, ``'jsonl'`` or ``'sqlite'``. Inferred from the suffix if None.
    mapping : ColumnMapping | None
        Column mapping for foreign exports. Without a mapping the file must use
        the canonical column names and unknown columns are rejected.

    Raises
    ------
    StoreLoadError
        On a missing column, unparseable value or duplicate (arch, dataset),
        naming the offending line and column.
    StoreError
        If the file does not exist or the format is unknown.
    """
    path = Path(path)
    if not path.is_file():
        msg = f"Benchmark file not found: {str(path)!r}"
        logger.error(msg)
        raise StoreError(msg)
    fmt = _detect_format(path, format)
    reader = {'csv': _read_csv, 'jsonl': _read_jsonl, 'sqlite': _read_sqlite}[fmt]
    records, devices, lines = reader(path, mapping)
    seen = {}
    for record, line in zip(records, lines):
        key = (record.arch, record.dataset)
        if key in seen:
            raise StoreLoadError(
                f"Duplicate architecture {record.arch!r} for dataset {record.dataset!r} "
                f"(first seen on line {seen[key]})",
                str(path), line, 'arch',
            )
        seen[key] = line
    store = BenchmarkStore(records, devices=devices, source=str(path))
    logger.info(f"Loaded {len(records)} rows from {str(path)!r} ({fmt})")
    return store


def save_store(store : BenchmarkStore, path : str | Path, format : str | None = None) -> Path:
    """
    Write ``store`` in canonical schema. Floats are written with ``repr`` so a
    save/load/save cycle is byte-identical.
    """
    path = Path(path)
    fmt = _detect_format(path, format)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = canonical_columns(store.devices, store.has_proxy_features)
    rows = (r.to_row(store.devices, store.has_proxy_features) for r in store)
    if fmt == 'csv':
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for row in rows:
                writer.writerow([row[c] if isinstance(row[c], str) else repr(row[c]) for c in columns])
    elif fmt == 'jsonl':
        with open(path, 'w') as f:
            for row in rows:
                f.write(json.dumps({c: row[c] for c in columns}) + "\n")
    else:
        from .local_database import BenchmarkDB
        if path.exists():
            path.unlink()
        db = BenchmarkDB(str(path), columns=columns)
        try:
            db.add(list(rows))
        finally:
            db.close()
    logger.info(f"Saved {len(store)} records to {str(path)!r} ({fmt})")
    return path


def lookup(store : BenchmarkStore, arch : str, device : str, dataset : str) -> LookupResult:
    return store.lookup(arch, device, dataset)


def true_front(store : BenchmarkStore, device : str, dataset : str, allow_partial : bool = False) -> FrontSet:
    return store.true_front(device, dataset, allow_partial=allow_partial)
