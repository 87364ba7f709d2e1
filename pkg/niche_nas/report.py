"""
Run artifacts: front CSV, key/value report, evaluation log, HV trace, and
the scatter data merged from several fronts.
"""
from dataclasses import dataclass, field
from pathlib import Path
import csv
import json

from .errors import ConfigError, StoreLoadError
from .objectives import FrontSet, NormalizationBounds, REFERENCE_POINT, non_dominated_sort, normalize_pairs

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'FRONT_COLUMNS',
    'PLOT_COLUMNS',
    'FrontRow',
    'FrontFile',
    'report_metadata',
    'write_report',
    'write_front_csv',
    'read_metadata',
    'read_front_csv',
    'write_plot_data',
    'write_scatter_svg',
]

FRONT_COLUMNS = ('arch', 'niche', 'accuracy', 'latency', 'generation')
PLOT_COLUMNS = ('series', 'arch', 'accuracy', 'latency')

_BOUND_KEYS = ('acc_min', 'acc_max', 'lat_min', 'lat_max')


@dataclass(frozen=True)
class FrontRow:
    arch : str
    niche : int | None
    accuracy : float
    latency : float
    generation : int | None = None


@dataclass
class FrontFile:
    """
    A front read back from disk plus the metadata of its sibling report.
    """
    rows : list[FrontRow]
    metadata : dict[str, str] = field(default_factory=dict)
    path : Path | None = None

    @property
    def bounds(self) -> NormalizationBounds | None:
        """
        Normalization bounds recorded in the metadata, if all four are present.
        """
        if not all(k in self.metadata for k in _BOUND_KEYS):
            return None
        try:
            return NormalizationBounds(**{k: float(self.metadata[k]) for k in _BOUND_KEYS})
        except ValueError as e:
            path = str(self.path.parent / 'report.txt') if self.path is not None else None
            raise StoreLoadError(f"Invalid bounds in report metadata: {e}", path=path) from None

    def to_front_set(self, bounds : NormalizationBounds) -> FrontSet:
        return non_dominated_sort(
            normalize_pairs([r.accuracy for r in self.rows], [r.latency for r in self.rows], bounds),
            [r.arch for r in self.rows],
        )

    def __len__(self):
        return len(self.rows)


def _fmt(value) -> str:
    if value is None:
        return 'NA'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_metadata(report) -> dict[str, object]:
    """
    Flat metadata of a `RunReport`, in the order written to ``report.txt``.
    """
    cfg = report.config
    meta = {
        'mode': report.mode,
        'operator': report.operator,
        'predictor': report.predictor,
        'objective_source': report.objective_source,
        'device': cfg.device,
        'dataset': report.dataset,
        'seed': cfg.seed,
        'generations': cfg.generations,
        'init_per_niche': cfg.init_per_niche,
        'n_children': cfg.n_children,
        'crossover_prob': cfg.crossover_prob,
        'niches': len(report.archives),
        **report.bounds.to_dict(),
        'ref_f1': REFERENCE_POINT.f1,
        'ref_f2': REFERENCE_POINT.f2,
        'hv': report.hv,
        'igd': report.igd,
        'hv_truth': report.hv_truth,
        'n_front': len(report.front),
        'n_evaluated': report.n_evaluated,
        **report.stats.to_dict(),
    }
    for status in ('invalid', 'non_novel', 'constraint_violation', 'not_found', 'accepted', 'rejected'):
        meta[f"gate_{status}"] = report.gate_counts.get(status, 0)
    meta['service_mode'] = report.service_mode
    meta['wall_time'] = round(report.wall_time, 3)
    return meta


def write_front_csv(report, path : str | Path) -> Path:
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FRONT_COLUMNS)
        for m in report.front:
            writer.writerow([m.arch, m.niche, repr(float(report.reported_accuracy(m))), repr(float(m.latency)), m.generation])
    return path


def write_report(report, out_dir : str | Path) -> dict[str, Path]:
    """
    Write the artifacts of a run into ``out_dir``.

    Files: ``front.csv``, ``report.txt`` (``key=value``),
    ``evaluations.jsonl`` (one gate/evaluation record per line, replayable),
    ``hv_trace.csv`` and ``config.json``.

    Returns
    -------
    dict[str, Path]
        Written paths by artifact name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        'front': write_front_csv(report, out_dir / 'front.csv'),
        'report': out_dir / 'report.txt',
        'evaluations': out_dir / 'evaluations.jsonl',
        'hv_trace': out_dir / 'hv_trace.csv',
        'config': out_dir / 'config.json',
    }
    with open(paths['report'], 'w') as f:
        for key, value in report_metadata(report).items():
            f.write(f"{key}={_fmt(value)}\n")
    with open(paths['evaluations'], 'w') as f:
        for entry in report.evaluations:
            f.write(json.dumps(entry) + "\n")
    with open(paths['hv_trace'], 'w', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(['generation', 'hv'])
        for g, hv in enumerate(report.hv_trace):
            writer.writerow([g, repr(hv)])
    with open(paths['config'], 'w') as f:
        json.dump(report.config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote run report to {str(out_dir)!r}")
    return paths


def read_metadata(path : str | Path) -> dict[str, str]:
    meta = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or '=' not in line:
                continue
            key, value = line.split('=', 1)
            meta[key.strip()] = value.strip()
    return meta


def _optional_int(text : str | None) -> int | None:
    if text is None or text in ('', 'NA'):
        return None
    return int(text)


def read_front_csv(path : str | Path) -> FrontFile:
    """
    Read a front CSV with at least ``arch``, ``accuracy`` and ``latency``
    columns. Metadata comes from a ``report.txt`` next to the file, if any.

    Raises
    ------
    StoreLoadError
        If the file is missing, lacks a column or has a non-numeric value.
    """
    path = Path(path)
    if not path.is_file():
        msg = f"Front file not found: {str(path)!r}"
        logger.error(msg)
        raise StoreLoadError(msg, path=str(path))
    rows = []
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        for col in ('arch', 'accuracy', 'latency'):
            if col not in (reader.fieldnames or []):
                raise StoreLoadError(f"Front file lacks column {col!r}", path=str(path), row=1, column=col)
        for row in reader:
            try:
                rows.append(FrontRow(
                    arch=row['arch'],
                    niche=_optional_int(row.get('niche')),
                    accuracy=float(row['accuracy']),
                    latency=float(row['latency']),
                    generation=_optional_int(row.get('generation')),
                ))
            except ValueError as e:
                raise StoreLoadError(f"Invalid value: {e}", path=str(path), row=reader.line_num) from None
    meta_path = path.parent / 'report.txt'
    metadata = read_metadata(meta_path) if meta_path.is_file() else {}
    return FrontFile(rows, metadata, path)


def write_plot_data(fronts : list[tuple[str, FrontFile]], out : str | Path) -> Path:
    """
    Merge labeled fronts into one ``series,arch,accuracy,latency`` CSV.
    """
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PLOT_COLUMNS)
        for label, front in fronts:
            for r in front.rows:
                writer.writerow([label, r.arch, repr(r.accuracy), repr(r.latency)])
    logger.info(f"Wrote {sum(len(f) for _, f in fronts)} points in {len(fronts)} series to {str(out)!r}")
    return out


def write_scatter_svg(
    fronts : list[tuple[str, FrontFile]],
    out : str | Path,
    bounds : NormalizationBounds | None = None,
) -> Path:
    """
    Accuracy-vs-latency scatter of the fronts as SVG.

    Output is byte-stable for identical input: the SVG hash salt is fixed
    and no date is embedded. Axis limits follow ``bounds`` when given.
    Needs the ``plot`` extra (matplotlib).
    """
    try:
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt
    except ImportError:
        msg = "SVG output needs matplotlib: pip install 'niche_nas[plot]'"
        logger.error(msg)
        raise ConfigError(msg) from None

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({'svg.hashsalt': 'niche_nas', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for label, front in fronts:
            rows = sorted(front.rows, key=lambda r: r.latency)
            ax.plot(
                [r.latency for r in rows],
                [r.accuracy for r in rows],
                marker='o', linestyle='-', label=label,
            )
        if bounds is not None:
            ax.set_xlim(bounds.lat_min, bounds.lat_max)
            ax.set_ylim(bounds.acc_min, bounds.acc_max)
        ax.set_xlabel('Latency (ms)')
        ax.set_ylabel('Accuracy (%)')
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out, format='svg', metadata={'Date': None})
        plt.close(fig)
    logger.info(f"Wrote scatter plot to {str(out)!r}")
    return out
