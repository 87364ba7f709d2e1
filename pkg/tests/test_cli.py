import argparse
import hashlib
import json
from pathlib import Path

import pytest

from niche_nas.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, build_parser, main
from niche_nas.report import read_front_csv, read_metadata


def parse_kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines() if "=" in line)


@pytest.fixture(scope="module")
def store_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("store") / "bench.csv"
    assert main(["-q", "synth", "--seed", "0", "--out", str(path)]) == EXIT_OK
    return path


@pytest.fixture(scope="module")
def truth_dir(store_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("truth")
    assert main(["-q", "front", "--store", str(store_csv), "--out", str(out)]) == EXIT_OK
    return out


def test_synth_writes_store_and_model(store_csv):
    with open(store_csv) as f:
        assert sum(1 for _ in f) == 15626
    model = json.loads(store_csv.with_name("bench.csv.model.json").read_text())
    assert model["seed"] == 0


def test_help_and_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "search" in capsys.readouterr().out
    with pytest.raises(SystemExit) as info:
        main(["search", "--no-such-flag"])
    assert info.value.code == 2


def test_enumerate(tmp_path, capsys):
    out = tmp_path / "space.csv"
    assert main(["-q", "enumerate", "--out", str(out)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("niche 0:   729")
    assert lines[-1] == "total: 15625"
    with open(out) as f:
        assert sum(1 for _ in f) == 15626


def test_search_writes_report(tmp_path, store_csv, capsys):
    run = tmp_path / "run"
    code = main([
        "-q", "search", "--store", str(store_csv), "--predictor", "oracle",
        "--seed", "7", "--generations", "3", "--out", str(run),
    ])
    assert code == EXIT_OK
    for name in ("front.csv", "report.txt", "evaluations.jsonl", "hv_trace.csv", "config.json"):
        assert (run / name).is_file()
    meta = read_metadata(run / "report.txt")
    assert meta["mode"] == "partitioned"
    assert meta["objective_source"] == "true"
    assert meta["seed"] == "7"
    assert int(meta["n_front"]) == len(read_front_csv(run / "front.csv"))
    assert "hv=" in capsys.readouterr().out


def test_config_file_and_flag_precedence(tmp_path, store_csv):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'store = "{store_csv.as_posix()}"\ngenerations = 2\ncrossover_prob = 0.0\npredictor = "oracle"\n')
    run = tmp_path / "run"
    assert main(["-q", "search", "--config", str(cfg), "--generations", "1", "--no-partition", "--out", str(run)]) == EXIT_OK
    saved = json.loads((run / "config.json").read_text())
    assert saved["generations"] == 1
    assert saved["crossover_prob"] == 0.0
    assert saved["partitioned"] is False
    assert read_metadata(run / "report.txt")["mode"] == "unpartitioned"


def test_metrics_against_itself(truth_dir, capsys):
    front = str(truth_dir / "front.csv")
    capsys.readouterr()
    assert main(["-q", "metrics", front, "--truth-front", front]) == EXIT_OK
    metrics = parse_kv(capsys.readouterr().out)
    assert float(metrics["igd"]) == 0.0
    assert float(metrics["hv"]) == pytest.approx(float(metrics["hv_truth"]))


def test_metrics_of_a_run(tmp_path, store_csv, capsys):
    run = tmp_path / "run"
    assert main(["-q", "search", "--store", str(store_csv), "--predictor", "oracle", "--generations", "2", "--out", str(run)]) == EXIT_OK
    capsys.readouterr()
    out = tmp_path / "metrics.txt"
    assert main(["-q", "metrics", str(run / "front.csv"), "--truth-store", str(store_csv), "--out", str(out)]) == EXIT_OK
    metrics = parse_kv(out.read_text())
    assert float(metrics["hv"]) <= float(metrics["hv_truth"])
    assert float(metrics["igd"]) > 0.0
    run_meta = read_metadata(run / "report.txt")
    assert float(metrics["hv"]) == pytest.approx(float(run_meta["hv"]))


def test_plot_data(tmp_path, truth_dir):
    merged = tmp_path / "plot.csv"
    front = truth_dir / "front.csv"
    assert main(["-q", "plot-data", f"truth={front}", f"again={front}", "--out", str(merged)]) == EXIT_OK
    lines = merged.read_text().splitlines()
    n = len(read_front_csv(front))
    assert lines[0] == "series,arch,accuracy,latency"
    assert len(lines) == 1 + 2 * n
    assert lines[1].startswith("truth,")
    assert lines[-1].startswith("again,")


def test_fit_prints_report(store_csv, capsys, tmp_path):
    out = tmp_path / "pred.json"
    assert main(["-q", "fit", "--store", str(store_csv), "--out", str(out)]) == EXIT_OK
    report = parse_kv(capsys.readouterr().out)
    assert report["kind"] == "fitted"
    assert float(report["spearman_holdout"]) >= 0.85
    assert out.is_file()


def test_error_exit_codes(tmp_path, capsys):
    assert main(["-q", "search", "--store", str(tmp_path / "missing.csv")]) == EXIT_DATA
    assert main(["-q", "search", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert main(["-q", "search", "--store", str(tmp_path / "missing.csv"), "--generations", "0"]) == EXIT_CONFIG
    empty = tmp_path / "empty.csv"
    empty.write_text("arch,accuracy,latency\n")
    assert main(["-q", "metrics", str(empty)]) == EXIT_DATA
    assert "error:" in capsys.readouterr().err


def test_metrics_of_degenerate_front(tmp_path, capsys):
    arch = "|nor_conv_3x3~0|+|nor_conv_3x3~0|none~1|+|none~0|none~1|none~2|"
    front = tmp_path / "one" / "front.csv"
    front.parent.mkdir()
    front.write_text(f"arch,accuracy,latency\n{arch},50.0,2.0\n")
    assert main(["-q", "metrics", str(front)]) == EXIT_CONFIG
    assert "--bounds" in capsys.readouterr().err
    assert main(["-q", "metrics", str(front), "--truth-front", str(front)]) == EXIT_CONFIG
    assert "--bounds" in capsys.readouterr().err

    assert main(["-q", "metrics", str(front), "--bounds", "0,100,1,3"]) == EXIT_OK
    metrics = parse_kv(capsys.readouterr().out)
    assert float(metrics["hv"]) > 0.0

    (front.parent / "report.txt").write_text("acc_min=50.0\nacc_max=50.0\nlat_min=1.0\nlat_max=3.0\n")
    assert main(["-q", "metrics", str(front)]) == EXIT_DATA
    assert "report.txt" in capsys.readouterr().err


def _subparsers(parser):
    return next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices


def test_help_documents_every_flag():
    parser = build_parser()
    top = parser.format_help()
    for name, sub in _subparsers(parser).items():
        assert name in top
        text = sub.format_help()
        for action in sub._actions:
            if isinstance(action, argparse._HelpAction):
                continue
            assert action.help, f"{name}: {action.dest} has no help text"
            for opt in action.option_strings or [action.dest]:
                assert opt in text, f"{name}: {opt} missing from --help"


def sha256_of(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_synth_seeds_differ_and_sidecar_reproduces(tmp_path, store_csv):
    one, two = tmp_path / "one.csv", tmp_path / "two.csv"
    assert main(["-q", "synth", "--seed", "1", "--out", str(one)]) == EXIT_OK
    assert main(["-q", "synth", "--seed", "2", "--out", str(two)]) == EXIT_OK
    assert sha256_of(one) != sha256_of(two)

    again = tmp_path / "again.csv"
    sidecar = store_csv.with_name("bench.csv.model.json")
    assert main(["-q", "synth", "--model-file", str(sidecar), "--out", str(again)]) == EXIT_OK
    assert sha256_of(again) == sha256_of(store_csv)
    assert again.with_name("again.csv.model.json").read_bytes() == sidecar.read_bytes()


def test_search_replays_recorded_transcript(tmp_path, store_csv, patched_service):
    transcript = tmp_path / "llm.jsonl"
    common = ["-q", "search", "--store", str(store_csv), "--predictor", "oracle", "--operator", "llm", "--seed", "3", "--generations", "2"]
    assert main(common + ["--transcript", "record", str(transcript), "--out", str(tmp_path / "rec")]) == EXIT_OK
    calls = len(patched_service.posts)
    assert calls > 0
    assert len(transcript.read_text(encoding="utf-8").splitlines()) == calls

    fronts = []
    for name in ("rep1", "rep2"):
        run = tmp_path / name
        assert main(common + ["--transcript", "replay", str(transcript), "--out", str(run)]) == EXIT_OK
        assert read_metadata(run / "report.txt")["service_mode"] == "replay"
        assert (run / "evaluations.jsonl").read_bytes() == (tmp_path / "rec" / "evaluations.jsonl").read_bytes()
        fronts.append((run / "front.csv").read_bytes())
    assert len(patched_service.posts) == calls
    assert fronts[0] == fronts[1] == (tmp_path / "rec" / "front.csv").read_bytes()


def test_search_replays_checked_in_transcript(tmp_path, store_csv, patched_service):
    transcript = Path(__file__).parent / "data" / "golden_transcript.jsonl"
    fronts = []
    for name in ("a", "b"):
        run = tmp_path / name
        code = main([
            "-q", "search", "--store", str(store_csv), "--predictor", "oracle", "--operator", "llm",
            "--seed", "5", "--generations", "2", "--transcript", "replay", str(transcript), "--out", str(run),
        ])
        # Prompts of this run are not in the file: every call misses and falls back
        assert code == EXIT_OK
        meta = read_metadata(run / "report.txt")
        assert meta["service_mode"] == "replay"
        assert int(meta["fallbacks"]) > 0
        fronts.append((run / "front.csv").read_bytes())
    assert fronts[0] == fronts[1]
    assert patched_service.posts == []
