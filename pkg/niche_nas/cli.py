"""
Command line of niche_nas.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 data error (store, front or predictor files), 4 text service
unreachable during a live search.
"""
from pathlib import Path
from typing import Sequence
import argparse
import csv
import sys

from .arch_space import DEFAULT_NICHES, NicheSet, decode, enumerate_space, niche_cardinalities
from .benchmark.store import BenchmarkStore, ColumnMapping, load_store, save_store
from .benchmark.synthetic import SyntheticModel, cached_synthetic_store, synthesize
from .config import CLI_KEYS, EngineConfig, load_config_file, merge_settings
from .engine import SearchEngine
from .errors import ConfigError, NicheNASError, PredictorError, StoreError, StoreLoadError
from .logging_utils import configure_logging
from .objectives import FrontSet, NormalizationBounds, compute_metrics
from .predictor import PredictorKind, evaluate_predictor, fit, load_predictor, make_predictor, save_predictor
from .report import FRONT_COLUMNS, FrontFile, read_front_csv, write_plot_data, write_report, write_scatter_svg

import logging
logger = logging.getLogger(__name__)

__all__ = ['EXIT_OK', 'EXIT_ERROR', 'EXIT_CONFIG', 'EXIT_DATA', 'EXIT_SERVICE', 'build_parser', 'main']

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SERVICE = 4


def _version() -> str:
    from importlib.metadata import version, PackageNotFoundError
    try:
        return version("niche_nas")
    except PackageNotFoundError:
        return "unknown"


#################
#### Helpers ####
#################

def _bounds_arg(text : str) -> NormalizationBounds:
    try:
        return NormalizationBounds.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _open_store(path : str | None, format : str | None = None, mapping : str | None = None, seed : int = 0) -> BenchmarkStore:
    if path is None:
        logger.info(f"No store given: using the synthetic store for seed {seed}")
        return cached_synthetic_store(seed)
    column_mapping = ColumnMapping.from_toml(mapping) if mapping else None
    return load_store(path, format=format, mapping=column_mapping)


def _niches_from_file(path : str | None) -> NicheSet:
    if path is None:
        return DEFAULT_NICHES
    data = load_config_file(path)
    if 'niches' not in data:
        return DEFAULT_NICHES
    return NicheSet.from_config(data['niches'])


def _write_front_rows(path : Path, rows : Sequence[tuple]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FRONT_COLUMNS)
        for arch, niche, acc, lat in rows:
            writer.writerow([arch, niche, repr(float(acc)), repr(float(lat)), 'NA'])
    return path


##################
#### Commands ####
##################

def cmd_synth(args) -> int:
    """
    Write a full synthetic store plus a ``<out>.model.json`` sidecar holding
    the generating model.
    """
    model = SyntheticModel.load(args.model_file) if args.model_file else SyntheticModel(seed=args.seed)
    store = synthesize(model)
    out = save_store(store, args.out, format=args.format)
    sidecar = model.save(Path(f"{out}.model.json"))
    print(f"Wrote {len(store)} records to {out} (model: {sidecar})")
    return EXIT_OK


def cmd_ingest(args) -> int:
    store = _open_store(args.input, args.format, args.mapping)
    out = save_store(store, args.out, format=args.out_format)
    print(f"Ingested {len(store)} records from {args.input} into {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    store = _open_store(args.store, args.store_format, args.mapping, seed=args.seed)
    kind = PredictorKind(args.predictor)
    if kind is PredictorKind.FITTED:
        predictor, report = fit(store, sample_size=args.sample_size, seed=args.seed, dataset=args.dataset)
    else:
        predictor = make_predictor(kind, store, args.dataset, feature_index=args.proxy_index)
        report = evaluate_predictor(predictor, store, holdout_seed=args.seed, holdout_size=args.sample_size)
    if args.out:
        save_predictor(predictor, args.out)
    for key, value in report.to_dict().items():
        if isinstance(value, list):
            value = ",".join(repr(v) for v in value)
        print(f"{key}={'NA' if value is None else value}")
    return EXIT_OK


def _engine_flags(args) -> dict:
    flags = {
        'store': args.store,
        'store_format': args.store_format,
        'mapping': args.mapping,
        'predictor_file': args.predictor_file,
        'out': args.out,
        'device': args.device,
        'dataset': args.dataset,
        'generations': args.generations,
        'crossover_prob': args.crossover_prob,
        'init_per_niche': args.init_per_niche,
        'n_children': args.n_children,
        'children_per_call': args.children_per_call,
        'operator': args.operator,
        'predictor': args.predictor,
        'proxy_index': args.proxy_index,
        'predictor_sample_size': args.sample_size,
        'seed': args.seed,
        'partitioned': args.partitioned,
        'max_operator_retries': args.max_operator_retries,
        'workers': args.workers,
        'archive_literal': args.archive_literal,
        'share_knowledge_base': args.share_kb,
        'parent_selection': args.parent_selection,
        'kb_capacity': args.kb_capacity,
        'latency_limit': args.latency_limit,
        'bounds': args.bounds,
        'allow_partial': args.allow_partial,
        'progress': args.progress,
    }
    service = {'model': args.model, 'endpoint': args.endpoint}
    if args.transcript:
        service['transcript_mode'], service['transcript_path'] = args.transcript
    flags['service'] = {k: v for k, v in service.items() if v is not None}
    return flags


def cmd_search(args) -> int:
    file_layer = load_config_file(args.config) if args.config else {}
    settings = merge_settings(file_layer, _engine_flags(args))
    cli = {k: settings.pop(k) for k in list(settings) if k in CLI_KEYS}
    if not settings.get('service'):
        settings.pop('service', None)
    config = EngineConfig.from_dict(settings)

    store = _open_store(cli.get('store'), cli.get('store_format'), cli.get('mapping'), seed=config.seed)
    dataset = config.dataset or store.default_dataset()
    if not store.is_complete(dataset) and not config.allow_partial:
        logger.warning(
            f"Store covers {len(store.table(dataset).archs)} architectures of {dataset!r}: "
            "searching with partial data, missing children are logged as not_found"
        )
    predictor = load_predictor(cli['predictor_file'], store) if cli.get('predictor_file') else None

    report = SearchEngine(config, store, predictor).run()
    paths = write_report(report, cli.get('out') or 'run')
    print(f"mode={report.mode} operator={report.operator} predictor={report.predictor}")
    print(f"front={len(report.front)} hv={report.hv:.6f} igd={'NA' if report.igd is None else f'{report.igd:.6f}'}")
    print(f"wrote {paths['front']}")
    if report.service_unreachable:
        logger.error(f"Every text service call failed ({report.stats.service_calls} calls)")
        return EXIT_SERVICE
    return EXIT_OK


def _bounds_from_rows(rows, source : str) -> NormalizationBounds:
    try:
        return NormalizationBounds.from_arrays([r.accuracy for r in rows], [r.latency for r in rows])
    except ValueError as e:
        msg = f"Cannot derive normalization bounds from {source}: {e}. Pass --bounds acc_min,acc_max,lat_min,lat_max"
        logger.error(msg)
        raise ConfigError(msg) from None


def _truth_front(args, bounds_hint : NormalizationBounds | None, found : FrontFile):
    """
    Truth front and bounds for ``metrics``: from a store, a front CSV, or none.
    """
    if args.truth_store:
        store = _open_store(args.truth_store, args.store_format, args.mapping)
        dataset = args.dataset or store.default_dataset()
        bounds = bounds_hint or store.bounds(args.device, dataset)
        return store.true_front(args.device, dataset, allow_partial=args.allow_partial, bounds=bounds), bounds
    if args.truth_front:
        truth = read_front_csv(args.truth_front)
        bounds = bounds_hint or truth.bounds
        if bounds is None:
            bounds = _bounds_from_rows(truth.rows + found.rows, f"{args.truth_front!r} and {args.front!r}")
        return truth.to_front_set(bounds), bounds
    bounds = bounds_hint
    if bounds is None:
        bounds = _bounds_from_rows(found.rows, repr(args.front))
    return None, bounds


def cmd_metrics(args) -> int:
    found = read_front_csv(args.front)
    if not len(found):
        msg = f"Front file {args.front!r} is empty: metrics are undefined"
        logger.error(msg)
        raise StoreLoadError(msg, path=args.front)
    truth, bounds = _truth_front(args, args.bounds or found.bounds, found)
    report = compute_metrics(found.to_front_set(bounds), truth, bounds)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_front(args) -> int:
    store = _open_store(args.store, args.store_format, args.mapping, seed=args.seed)
    dataset = args.dataset or store.default_dataset()
    bounds = store.bounds(args.device, dataset)
    front : FrontSet = store.true_front(args.device, dataset, allow_partial=args.allow_partial, bounds=bounds)
    rows = []
    for arch in front.arch_ids:
        r = store.lookup(arch, args.device, dataset)
        rows.append((arch, DEFAULT_NICHES.assign(decode(arch)), r.point.accuracy, r.point.latency))
    out = Path(args.out)
    _write_front_rows(out / 'front.csv', rows)
    report = compute_metrics(front, None, bounds)
    meta = report.to_text().splitlines()
    with open(out / 'report.txt', 'w') as f:
        f.write(f"device={args.device}\ndataset={dataset}\nobjective_source=true\n")
        f.write("\n".join(meta) + "\n")
    print(f"True front of {dataset}/{args.device}: {len(front)} architectures, hv={report.hv:.6f}")
    return EXIT_OK


def _labeled(spec : str) -> tuple[str, str]:
    if '=' in spec:
        label, path = spec.split('=', 1)
        return label, path
    return Path(spec).parent.name or Path(spec).stem, spec


def cmd_plot_data(args) -> int:
    fronts = []
    for spec in args.fronts:
        label, path = _labeled(spec)
        fronts.append((label, read_front_csv(path)))
    write_plot_data(fronts, args.out)
    if args.svg:
        bounds = args.bounds or next((f.bounds for _, f in fronts if f.bounds is not None), None)
        write_scatter_svg(fronts, args.svg, bounds)
    print(f"Wrote {sum(len(f) for _, f in fronts)} points in {len(fronts)} series to {args.out}")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    niches = _niches_from_file(args.config)
    counts = niche_cardinalities(niches)
    for niche in niches:
        print(f"niche {niche.niche_id}: {counts[niche.niche_id]:>5d}  {niche.describe()}")
    print(f"total: {sum(counts.values())}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(['arch', 'niche', 'n_conv3x3', 'n_conv1x1'])
            for cell in enumerate_space():
                profile = cell.complexity()
                writer.writerow([cell.encode(), niches.assign(cell), profile.n_conv3x3, profile.n_conv1x1])
    return EXIT_OK


################
#### Parser ####
################

def _add_store_args(p, required : bool = False):
    p.add_argument('--store', required=required, help="Benchmark store file (.csv, .jsonl, .db). Default: cached synthetic store.")
    p.add_argument('--store-format', choices=['csv', 'jsonl', 'sqlite'], help="Store format. Default: inferred from the suffix.")
    p.add_argument('--mapping', help="TOML column mapping for foreign benchmark exports.")


def _add_target_args(p):
    p.add_argument('--device', default='edgegpu', help="Hardware device column (default: edgegpu).")
    p.add_argument('--dataset', help="Dataset. Default: the store's first dataset.")
    p.add_argument('--allow-partial', action='store_true', help="Accept a store that does not cover the whole space.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='niche-nas',
        description="Niche-partitioned, hardware-aware evolutionary architecture search.",
    )
    parser.add_argument('--version', action='version', version=f"%(prog)s {_version()}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help="Log debug messages.")
    verbosity.add_argument('-q', '--quiet', action='store_true', help="Only log warnings and errors.")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help="Write a synthetic benchmark store.")
    p.add_argument('--seed', type=int, default=0, help="Synthetic model seed (default: 0).")
    p.add_argument('--model-file', help="Re-synthesize from a saved model sidecar instead of --seed.")
    p.add_argument('--format', choices=['csv', 'jsonl', 'sqlite'], help="Output format. Default: inferred from the suffix.")
    p.add_argument('--out', required=True, help="Output store path.")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('ingest', help="Validate a benchmark export and write it in canonical form.")
    p.add_argument('input', help="Benchmark file to read.")
    p.add_argument('--format', choices=['csv', 'jsonl', 'sqlite'], help="Input format. Default: inferred from the suffix.")
    p.add_argument('--mapping', help="TOML column mapping for foreign exports.")
    p.add_argument('--out', required=True, help="Output store path.")
    p.add_argument('--out-format', choices=['csv', 'jsonl', 'sqlite'], help="Output format. Default: inferred from the suffix.")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser('fit', help="Fit or evaluate a performance predictor.")
    _add_store_args(p)
    p.add_argument('--dataset', help="Dataset. Default: the store's first dataset.")
    p.add_argument('--predictor', default='fitted', choices=[k.value for k in PredictorKind], help="Predictor kind (default: fitted).")
    p.add_argument('--proxy-index', type=int, default=0, help="Proxy column of the single_proxy predictor.")
    p.add_argument('--sample-size', type=int, default=1000, help="Training sample (and holdout) size (default: 1000).")
    p.add_argument('--seed', type=int, default=0, help="Sampling seed (default: 0).")
    p.add_argument('--out', help="Save the predictor to this JSON file.")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser('search', help="Run the partitioned evolutionary search.")
    p.add_argument('--config', help="TOML config file; flags override its values.")
    p.add_argument('--store', help="Benchmark store file. Default: cached synthetic store.")
    p.add_argument('--store-format', choices=['csv', 'jsonl', 'sqlite'], help="Store format. Default: inferred from the suffix.")
    p.add_argument('--mapping', help="TOML column mapping for foreign benchmark exports.")
    p.add_argument('--predictor-file', help="Use a predictor saved by `fit`.")
    p.add_argument('--out', help="Output directory (default: run).")
    p.add_argument('--device', help="Device whose latency is minimized (default: edgegpu).")
    p.add_argument('--dataset', help="Dataset whose accuracy is maximized.")
    p.add_argument('--generations', type=int, help="Number of generations (default: 10).")
    p.add_argument('--crossover-prob', type=float, help="Crossover probability (default: 0.5).")
    p.add_argument('--init-per-niche', type=int, help="Initial population per niche (default: 5).")
    p.add_argument('--n-children', type=int, help="Children per niche per generation (default: 2).")
    p.add_argument('--children-per-call', type=int, help="Children per text service call (default: 1).")
    p.add_argument('--operator', choices=['baseline', 'llm'], help="Child generator (default: baseline).")
    p.add_argument('--predictor', choices=[k.value for k in PredictorKind], help="Predictor kind (default: fitted, or oracle without proxies).")
    p.add_argument('--proxy-index', type=int, help="Proxy column of the single_proxy predictor.")
    p.add_argument('--sample-size', type=int, help="Training sample size of the fitted predictor (default: 1000).")
    p.add_argument('--seed', type=int, help="Base seed (default: 0).")
    p.add_argument('--no-partition', dest='partitioned', action='store_false', default=None, help="Search the whole space as one niche with the same budget.")
    p.add_argument('--max-operator-retries', type=int, help="Extra attempts per failed service call (default: 2).")
    p.add_argument('--workers', type=int, help="Worker threads (default: number of niches).")
    p.add_argument('--archive-literal', action='store_true', default=None, help="Insert every child into the archive, even dominated ones.")
    p.add_argument('--share-kb', action='store_true', default=None, help="Share one knowledge base across niches.")
    p.add_argument('--parent-selection', choices=['uniform', 'rank'], help="Parent selection (default: uniform).")
    p.add_argument('--kb-capacity', type=int, help="Maximum knowledge-base rules (default: 20).")
    p.add_argument('--latency-limit', type=float, help="Latency bound in ms stated in the prompts.")
    p.add_argument('--bounds', type=_bounds_arg, help="Normalization bounds 'acc_min,acc_max,lat_min,lat_max'.")
    p.add_argument('--allow-partial', action='store_true', default=None, help="Accept a store that does not cover the whole space.")
    p.add_argument('--progress', action='store_true', default=None, help="Show a progress bar.")
    p.add_argument('--transcript', nargs=2, metavar=('MODE', 'PATH'), help="Service transcript: record or replay, and the JSON-lines file.")
    p.add_argument('--model', help="Text service model name.")
    p.add_argument('--endpoint', help="Text service endpoint URL.")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser('metrics', help="HV and IGD of a front file.")
    p.add_argument('front', help="Front CSV (arch, accuracy, latency).")
    truth = p.add_mutually_exclusive_group()
    truth.add_argument('--truth-store', help="Store whose true front is the reference.")
    truth.add_argument('--truth-front', help="Front CSV used as the reference.")
    p.add_argument('--store-format', choices=['csv', 'jsonl', 'sqlite'], help="Format of --truth-store.")
    p.add_argument('--mapping', help="TOML column mapping of --truth-store.")
    _add_target_args(p)
    p.add_argument('--bounds', type=_bounds_arg, help="Normalization bounds 'acc_min,acc_max,lat_min,lat_max'.")
    p.add_argument('--out', help="Also write the metrics to this file.")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser('front', help="Write the true Pareto front of a store.")
    _add_store_args(p)
    _add_target_args(p)
    p.add_argument('--seed', type=int, default=0, help="Synthetic store seed when --store is omitted.")
    p.add_argument('--out', required=True, help="Output directory.")
    p.set_defaults(func=cmd_front)

    p = sub.add_parser('plot-data', help="Merge fronts into scatter data (and an optional SVG).")
    p.add_argument('fronts', nargs='+', help="Front CSVs, optionally labeled as LABEL=PATH.")
    p.add_argument('--out', required=True, help="Merged CSV path.")
    p.add_argument('--svg', help="Also draw an SVG scatter (needs matplotlib).")
    p.add_argument('--bounds', type=_bounds_arg, help="Axis bounds 'acc_min,acc_max,lat_min,lat_max'.")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser('enumerate', help="Enumerate the search space and count niche members.")
    p.add_argument('--config', help="TOML file with a [[niches]] partition.")
    p.add_argument('--out', help="Write every architecture with its niche to this CSV.")
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv : Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    configure_logging(level)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (StoreError, PredictorError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NicheNASError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
