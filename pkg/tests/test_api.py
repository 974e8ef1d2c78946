"""Tests for the HTTP service endpoints."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from calquery.api import create_app
from calquery.calibration import CalibrationTable, Calibrator
from calquery.engine import EngineContext, GateConfig, execute_query, unified_score
from calquery.graph import generate_synthetic
from calquery.query import generate_workload, instantiate
from calquery.scorer import SyntheticScorer

_CACHE: dict[str, object] = {}


def _service():
    if "client" not in _CACHE:
        graph = generate_synthetic(300, 6, 3000, seed=71)
        graph.drop_edges(0.2, seed=72)
        scorer = SyntheticScorer(graph=graph, seed=73)
        gate = GateConfig()
        ctx = EngineContext(graph=graph, scorer=scorer, gate=gate)
        opt = generate_workload(graph, "3p", 20, seed=74)
        valid = generate_workload(graph, "3p", 20, seed=75)
        calib = Calibrator(graph, scorer, gate, opt, valid, grid_size=25, top_k=5)
        table = CalibrationTable(meta={"seed": 71})
        table.add(calib.entry(0.2))
        table.add(calib.entry(0.4))
        _CACHE["ctx"] = ctx
        _CACHE["table"] = table
        _CACHE["eval"] = generate_workload(graph, "3p", 5, seed=76)
        _CACHE["client"] = TestClient(create_app(ctx, table))
    return _CACHE["client"], _CACHE["ctx"], _CACHE["table"], _CACHE["eval"]


def test_health_reports_graph_and_table_sizes():
    client, ctx, table, _ = _service()
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["n_entities"] == ctx.graph.n_entities
    assert body["n_relations"] == ctx.graph.n_relations
    assert body["n_triples"] == ctx.graph.n_triples
    assert body["n_observed"] == ctx.graph.n_observed
    assert body["calibration_entries"] == 2


def test_calibration_lists_entries():
    client, _, table, _ = _service()
    resp = client.get("/calibration")
    assert resp.status_code == 200
    body = resp.json()
    assert body["meta"] == {"seed": 71}
    assert [e["alpha"] for e in body["entries"]] == [0.2, 0.4]
    entry = body["entries"][0]
    stored = table.get("3p", 0.2)
    assert entry["topology"] == "3p"
    assert entry["lambdas"] == list(stored.lambdas)
    assert entry["strategy"] == stored.strategy
    assert entry["feasible"] == stored.feasible


def test_query_executes_with_calibrated_thresholds():
    client, ctx, table, eval_w = _service()
    inst = eval_w[0]
    resp = client.post(
        "/query",
        json={
            "topology": "3p",
            "anchors": list(inst.anchors),
            "relations": list(inst.relations),
            "alpha": 0.2,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    entry = table.get("3p", 0.2)
    expected, trace = execute_query(ctx, inst.dag(), entry.lambdas)
    assert body["answers"] == sorted(expected)
    assert body["abstained"] == trace.abstained
    assert body["alpha"] == 0.2
    assert body["recall_target"] == 0.8
    assert body["lambdas"] == list(entry.lambdas)
    assert body["strategy"] == entry.strategy
    assert len(body["trace"]["slots"]) == 3
    assert body["trace"]["total_invocations"] == trace.total_invocations


def test_query_unknown_alpha_is_404_with_available_listing():
    client, _, _, eval_w = _service()
    inst = eval_w[0]
    resp = client.post(
        "/query",
        json={
            "topology": "3p",
            "anchors": list(inst.anchors),
            "relations": list(inst.relations),
            "alpha": 0.33,
        },
    )
    assert resp.status_code == 404
    assert "available" in resp.json()["detail"]


def test_query_validation_errors_are_422():
    client, ctx, _, _ = _service()
    # Wrong anchor arity for the topology.
    resp = client.post(
        "/query",
        json={"topology": "3p", "anchors": [1, 2], "relations": [0, 1, 2], "alpha": 0.2},
    )
    assert resp.status_code == 422
    # Anchor out of graph range.
    resp = client.post(
        "/query",
        json={
            "topology": "3p",
            "anchors": [ctx.graph.n_entities + 10],
            "relations": [0, 1, 2],
            "alpha": 0.2,
        },
    )
    assert resp.status_code == 422
    # Malformed alpha is rejected by the request schema itself.
    resp = client.post(
        "/query",
        json={"topology": "3p", "anchors": [1], "relations": [0, 1, 2], "alpha": 2.0},
    )
    assert resp.status_code == 422
    # Unknown topology has no calibrated operating point, so the table
    # lookup reports it as missing.
    resp = client.post(
        "/query",
        json={"topology": "9p", "anchors": [1], "relations": [0], "alpha": 0.2},
    )
    assert resp.status_code == 404
    # Without a table lookup the same topology is a validation failure.
    resp = client.post(
        "/execute",
        json={"topology": "9p", "anchors": [1], "relations": [0], "lambdas": [0.5]},
    )
    assert resp.status_code == 422


def test_execute_matches_direct_engine_call():
    client, ctx, _, eval_w = _service()
    inst = eval_w[1]
    lambdas = [0.6, 0.5, 0.3]
    resp = client.post(
        "/execute",
        json={
            "topology": "3p",
            "anchors": list(inst.anchors),
            "relations": list(inst.relations),
            "lambdas": lambdas,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    expected, trace = execute_query(ctx, inst.dag(), lambdas)
    assert body["answers"] == sorted(expected)
    assert body["abstained"] == trace.abstained
    modes = [s["mode"] for s in body["trace"]["slots"]]
    assert modes == [s.mode.value for s in trace.slots]


def test_execute_rejects_wrong_lambda_count():
    client, _, _, eval_w = _service()
    inst = eval_w[0]
    resp = client.post(
        "/execute",
        json={
            "topology": "3p",
            "anchors": list(inst.anchors),
            "relations": list(inst.relations),
            "lambdas": [0.5],
        },
    )
    assert resp.status_code == 422


def test_score_matches_unified_score():
    client, ctx, _, _ = _service()
    for h, r, t in [(0, 0, 1), (5, 2, 9), (100, 5, 200)]:
        resp = client.post("/score", json={"head": h, "relation": r, "tail": t})
        assert resp.status_code == 200
        body = resp.json()
        value, provenance = unified_score(ctx, h, r, t)
        assert body["unified"] == value
        assert body["provenance"] == provenance.value
        assert body["raw"] == ctx.scorer.score(h, r, t)
        assert (body["head"], body["relation"], body["tail"]) == (h, r, t)


def test_score_out_of_range_is_422():
    client, ctx, _, _ = _service()
    resp = client.post(
        "/score", json={"head": ctx.graph.n_entities, "relation": 0, "tail": 0}
    )
    assert resp.status_code == 422
    resp = client.post("/score", json={"head": 0, "relation": 99, "tail": 0})
    assert resp.status_code == 422
    resp = client.post("/score", json={"head": -1, "relation": 0, "tail": 0})
    assert resp.status_code == 422


def test_unknown_body_keys_rejected():
    client, _, _, _ = _service()
    resp = client.post(
        "/score", json={"head": 0, "relation": 0, "tail": 0, "extra": 1}
    )
    assert resp.status_code == 422
