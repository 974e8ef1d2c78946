"""Tests for the command-line interface.

All commands run in-process through ``main(argv)`` so exit codes and
stdout/stderr can be asserted directly.
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

import pytest

from calquery.bench import AGGREGATE_ID, read_results_csv
from calquery.calibration import CalibrationTable
from calquery.cli import main
from calquery.query import load_workload

_WS: dict[str, Path] = {}

_CONFIG = {
    "seed": 7,
    "graph": {"n_entities": 300, "n_relations": 6, "n_triples": 3000},
    "splits": {"opt": 20, "valid": 20, "eval": 10},
    "calibration": {"grid_size": 25},
    "scorer": {"top_k": 5},
    "baselines": {
        "static_neural_thetas": [0.8],
        "static_hybrid_thetas": [0.5],
    },
    "topologies": ["3p"],
    "alphas": [0.2, 0.4],
    "incompleteness": [0.2],
}


def _workspace() -> dict[str, Path]:
    """Build graph, workload, table, and results once through the CLI itself."""
    if _WS:
        return _WS
    root = Path(tempfile.mkdtemp(prefix="calquery-cli-"))
    config = root / "config.json"
    config.write_text(json.dumps(_CONFIG))
    graph_dir = root / "graph"
    assert main(["gen-graph", "--config", str(config), "--out", str(graph_dir)]) == 0
    assert (
        main(
            [
                "gen-workload",
                "--config",
                str(config),
                "--graph",
                str(graph_dir),
                "--out",
                str(root),
            ]
        )
        == 0
    )
    table = root / "table.json"
    assert (
        main(
            [
                "calibrate",
                "--config",
                str(config),
                "--graph",
                str(graph_dir),
                "--out",
                str(table),
            ]
        )
        == 0
    )
    results = root / "results.csv"
    assert (
        main(
            [
                "run",
                "--config",
                str(config),
                "--graph",
                str(graph_dir),
                "--table",
                str(table),
                "--workload",
                str(root / "workload_3p.jsonl"),
                "--out",
                str(results),
            ]
        )
        == 0
    )
    _WS.update(
        root=root,
        config=config,
        graph=graph_dir,
        table=table,
        workload=root / "workload_3p.jsonl",
        results=results,
    )
    return _WS


def test_gen_graph_snapshot_is_deterministic(tmp_path: Path, capsys):
    ws = _workspace()
    out = tmp_path / "again"
    assert main(["gen-graph", "--config", str(ws["config"]), "--out", str(out)]) == 0
    assert "wrote graph snapshot" in capsys.readouterr().out
    original = sorted(ws["graph"].iterdir())
    rebuilt = sorted(out.iterdir())
    assert [p.name for p in original] == [p.name for p in rebuilt]
    for a, b in zip(original, rebuilt):
        assert a.read_bytes() == b.read_bytes()


def test_seed_override_changes_graph(tmp_path: Path):
    ws = _workspace()
    out = tmp_path / "other-seed"
    assert (
        main(
            [
                "gen-graph",
                "--config",
                str(ws["config"]),
                "--seed",
                "8",
                "--out",
                str(out),
            ]
        )
        == 0
    )
    baseline = (ws["graph"] / "triples.tsv").read_bytes()
    reseeded = (out / "triples.tsv").read_bytes()
    assert baseline != reseeded


def test_gen_workload_writes_jsonl(tmp_path: Path):
    ws = _workspace()
    instances = load_workload(ws["workload"])
    assert len(instances) == 50  # opt + valid + eval
    assert all(inst.topology.value == "3p" for inst in instances)
    # Restricting to one topology via the flag produces the same file.
    out = tmp_path / "wl"
    assert (
        main(
            [
                "gen-workload",
                "--config",
                str(ws["config"]),
                "--graph",
                str(ws["graph"]),
                "--topology",
                "3p",
                "--out",
                str(out),
            ]
        )
        == 0
    )
    assert (out / "workload_3p.jsonl").read_bytes() == ws["workload"].read_bytes()


def test_calibrate_writes_table():
    ws = _workspace()
    table = CalibrationTable.load(ws["table"])
    assert [(e.topology, e.alpha) for e in table.entries] == [("3p", 0.2), ("3p", 0.4)]
    assert table.meta["seed"] == 7
    assert table.meta["incompleteness"] == 0.2


def test_run_emits_calibrated_rows():
    ws = _workspace()
    rows = read_results_csv(ws["results"])
    per_query = [r for r in rows if r["query_id"] != AGGREGATE_ID]
    aggregates = [r for r in rows if r["query_id"] == AGGREGATE_ID]
    # Both table entries execute over the 50-query workload file.
    assert len(per_query) == 100
    assert len(aggregates) == 2
    assert {r["strategy"] for r in rows} == {"calibrated"}
    assert {r["param"] for r in aggregates} == {0.2, 0.4}
    header = ws["results"].read_text().splitlines()[0]
    assert header.startswith("# seeds master=7")


def test_baseline_command(tmp_path: Path):
    ws = _workspace()
    out = tmp_path / "baselines.csv"
    assert (
        main(
            [
                "baseline",
                "--config",
                str(ws["config"]),
                "--graph",
                str(ws["graph"]),
                "--out",
                str(out),
            ]
        )
        == 0
    )
    rows = read_results_csv(out)
    strategies = {r["strategy"] for r in rows}
    assert strategies == {
        "union_bound",
        "retrieval_only",
        "static_neural",
        "static_hybrid",
    }
    retrieval = [
        r
        for r in rows
        if r["strategy"] == "retrieval_only" and r["query_id"] != AGGREGATE_ID
    ]
    assert len(retrieval) == 10  # the eval split
    assert all(r["param"] is None for r in retrieval)
    assert all(r["precision"] in (0.0, 1.0) or r["precision"] <= 1.0 for r in retrieval)


def test_report_to_stdout(capsys):
    ws = _workspace()
    capsys.readouterr()
    assert main(["report", "--in", str(ws["results"])]) == 0
    out = capsys.readouterr().out
    assert "Validity: empirical recall vs target" in out
    assert "Abstention rate by incompleteness" in out


def test_report_to_file(tmp_path: Path):
    ws = _workspace()
    out = tmp_path / "report.txt"
    assert main(["report", "--in", str(ws["results"]), "--out", str(out)]) == 0
    assert "Hybrid-hop fraction" in out.read_text()


def test_missing_table_is_one_line_error(capsys, tmp_path: Path):
    ws = _workspace()
    code = main(
        [
            "run",
            "--config",
            str(ws["config"]),
            "--graph",
            str(ws["graph"]),
            "--table",
            str(tmp_path / "missing.json"),
            "--workload",
            str(ws["workload"]),
            "--out",
            str(tmp_path / "r.csv"),
        ]
    )
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert len(err.strip().splitlines()) == 1


def test_multi_fraction_config_rejected_for_calibrate(capsys, tmp_path: Path):
    ws = _workspace()
    config = tmp_path / "multi.json"
    raw = dict(_CONFIG)
    raw["incompleteness"] = [0.1, 0.2]
    config.write_text(json.dumps(raw))
    code = main(
        [
            "calibrate",
            "--config",
            str(config),
            "--graph",
            str(ws["graph"]),
            "--out",
            str(tmp_path / "t.json"),
        ]
    )
    assert code == 1
    assert "exactly one incompleteness" in capsys.readouterr().err


def test_unknown_command_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["gen-graph", "--bogus", "x"])
    assert info.value.code == 2


def test_missing_required_out_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["gen-graph"])
    assert info.value.code == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "calquery" in capsys.readouterr().out
