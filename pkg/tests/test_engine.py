"""Tests for the gated execution engine."""

from __future__ import annotations

import hashlib
import math
import random
import struct

import numpy as np
import pytest

from calquery.engine import (
    EngineContext,
    GateConfig,
    GateMode,
    Provenance,
    execute_query,
    gate_execute,
    tiebreak_hash,
    unified_score,
)
from calquery.errors import ConfigurationError, ExecutionError
from calquery.graph import ViewKind, generate_synthetic
from calquery.query import instantiate
from calquery.scorer import SyntheticScorer


def _ctx(seed: int = 19, drop: float = 0.2, **kwargs) -> EngineContext:
    graph = generate_synthetic(300, 6, 3000, seed)
    if drop:
        graph.drop_edges(drop, seed=seed + 1)
    scorer = SyntheticScorer(graph=graph, seed=seed + 2)
    return EngineContext(graph=graph, scorer=scorer, gate=GateConfig(), **kwargs)


# -- tiebreak hash -------------------------------------------------------------


def test_tiebreak_hash_frozen_values():
    assert tiebreak_hash(1, 2, 3) == 0.6648575118649017
    assert tiebreak_hash(0, 0, 0) == 0.08792112927792595
    assert tiebreak_hash(17, 4, 1999) == 0.882424220193654


def test_tiebreak_hash_matches_md5_recompute():
    rng = random.Random(0)
    for _ in range(200):
        h, r, t = rng.randrange(5000), rng.randrange(40), rng.randrange(5000)
        digest = hashlib.md5(struct.pack("<3q", h, r, t)).digest()
        expected = int.from_bytes(digest[:8], "big") * 2.0**-64
        assert tiebreak_hash(h, r, t) == expected


def test_tiebreak_hash_range_and_determinism():
    rng = random.Random(1)
    for _ in range(500):
        h, r, t = rng.randrange(10**6), rng.randrange(100), rng.randrange(10**6)
        v = tiebreak_hash(h, r, t)
        assert 0.0 <= v < 1.0
        assert tiebreak_hash(h, r, t) == v


# -- gate config ---------------------------------------------------------------


def test_gate_config_validation():
    GateConfig(delta=0.5, epsilon=1e-9)
    with pytest.raises(ConfigurationError):
        GateConfig(delta=0.0)
    with pytest.raises(ConfigurationError):
        GateConfig(delta=1.0)
    with pytest.raises(ConfigurationError):
        GateConfig(delta=0.5, epsilon=0.0)
    with pytest.raises(ConfigurationError):
        GateConfig(delta=0.5, epsilon=0.5)


# -- unified score -------------------------------------------------------------


def test_unified_score_formula_and_provenance():
    ctx = _ctx()
    view = ctx.view
    delta, eps = ctx.gate.delta, ctx.gate.epsilon
    rng = random.Random(2)
    observed = ctx.graph.triples[ctx.graph.observed]
    seen_retrieved = seen_inferred = 0
    for _ in range(300):
        if rng.random() < 0.5 and observed.shape[0]:
            h, r, t = observed[rng.randrange(observed.shape[0])].tolist()
        else:
            h = rng.randrange(ctx.graph.n_entities)
            r = rng.randrange(ctx.graph.n_relations)
            t = rng.randrange(ctx.graph.n_entities)
        value, prov = unified_score(ctx, h, r, t)
        if view.has(h, r, t):
            seen_retrieved += 1
            assert prov is Provenance.RETRIEVED
            assert value == delta + (1.0 - delta) * tiebreak_hash(h, r, t)
            assert delta <= value < 1.0
        else:
            seen_inferred += 1
            assert prov is Provenance.INFERRED
            assert value == ctx.scorer.score(h, r, t) * (delta - eps)
            assert 0.0 <= value <= delta - eps
    assert seen_retrieved > 0 and seen_inferred > 0


def test_unified_score_bands_are_disjoint():
    # The smallest retrieved value (delta) strictly exceeds the largest
    # possible inferred value (delta - epsilon), whatever the hash says.
    gate = GateConfig()
    assert gate.delta > 1.0 * (gate.delta - gate.epsilon)


# -- retrieval gate ------------------------------------------------------------


def test_gate_at_delta_admits_all_observed_with_zero_invocations():
    ctx = _ctx()
    view = ctx.view
    rng = random.Random(3)
    for _ in range(30):
        relation = rng.randrange(ctx.graph.n_relations)
        sources = {rng.randrange(ctx.graph.n_entities) for _ in range(rng.randrange(1, 6))}
        admitted, stats = gate_execute(ctx, 0, sources, relation, ctx.gate.delta)
        assert admitted == view.retrieve(sources, relation)
        assert stats.mode is GateMode.RETRIEVAL_ONLY
        assert stats.invocations == 0
        assert stats.input_size == len(sources)
        assert stats.output_size == len(admitted)


def test_gate_above_delta_matches_hash_oracle():
    ctx = _ctx()
    view = ctx.view
    delta = ctx.gate.delta
    rng = random.Random(4)
    for _ in range(30):
        relation = rng.randrange(ctx.graph.n_relations)
        sources = sorted({rng.randrange(ctx.graph.n_entities) for _ in range(4)})
        lam = rng.uniform(delta + 0.01, 0.99)
        expected = set()
        for src in sources:
            for tail in view.tails(src, relation).tolist():
                if delta + (1.0 - delta) * tiebreak_hash(src, relation, tail) >= lam:
                    expected.add(tail)
        admitted, stats = gate_execute(ctx, 0, sources, relation, lam)
        assert admitted == expected
        assert stats.mode is GateMode.RETRIEVAL_ONLY
        assert stats.invocations == 0


def test_gate_above_delta_shrinks_with_threshold():
    ctx = _ctx()
    rng = random.Random(5)
    relation = 1
    sources = list(range(40))
    baseline, _ = gate_execute(ctx, 0, sources, relation, ctx.gate.delta)
    strict, _ = gate_execute(ctx, 0, sources, relation, 0.95)
    assert strict <= baseline
    assert len(baseline) > 0


# -- hybrid gate ---------------------------------------------------------------


def test_hybrid_matches_brute_force_oracle():
    ctx = _ctx()
    view = ctx.view
    band = ctx.gate.delta - ctx.gate.epsilon
    rng = random.Random(6)
    for _ in range(15):
        relation = rng.randrange(ctx.graph.n_relations)
        sources = sorted({rng.randrange(ctx.graph.n_entities) for _ in range(3)})
        lam = rng.uniform(0.05, 0.45)
        retrieved = view.retrieve(sources, relation)
        everything = np.arange(ctx.graph.n_entities)
        phi = ctx.scorer.score_block(sources, relation, everything)
        inferred = {
            int(c)
            for c in everything
            if int(c) not in retrieved and float(phi[:, c].max()) * band >= lam
        }
        admitted, stats = gate_execute(ctx, 0, sources, relation, lam)
        assert admitted == retrieved | inferred
        assert stats.mode is GateMode.HYBRID
        assert stats.invocations == len(sources) * ctx.graph.n_entities
        assert stats.input_size == len(sources)


def test_hybrid_deduplicates_sources():
    ctx = _ctx()
    admitted_dup, stats_dup = gate_execute(ctx, 0, [5, 5, 5, 9], 2, 0.3)
    admitted_ref, stats_ref = gate_execute(ctx, 0, [5, 9], 2, 0.3)
    assert admitted_dup == admitted_ref
    assert stats_dup.invocations == stats_ref.invocations == 2 * ctx.graph.n_entities


def test_gate_rejects_non_finite_threshold():
    ctx = _ctx()
    for lam in (math.nan, math.inf, -math.inf):
        with pytest.raises(ExecutionError, match="finite"):
            gate_execute(ctx, 0, [1], 0, lam)


# -- nestedness ----------------------------------------------------------------


def test_admission_is_nested_in_threshold():
    ctx = _ctx()
    rng = random.Random(7)
    for _ in range(100):
        relation = rng.randrange(ctx.graph.n_relations)
        sources = {rng.randrange(ctx.graph.n_entities) for _ in range(rng.randrange(1, 5))}
        lo, hi = sorted((rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)))
        if lo == hi:
            continue
        loose, _ = gate_execute(ctx, 0, sources, relation, lo)
        tight, _ = gate_execute(ctx, 0, sources, relation, hi)
        assert tight <= loose


# -- full query execution ------------------------------------------------------


def test_execute_query_trace_modes_and_totals():
    ctx = _ctx()
    dag = instantiate("3p", [7], [0, 1, 2])
    lambdas = [0.9, 0.5, 0.3]
    answers, trace = execute_query(ctx, dag, lambdas)
    assert len(trace.slots) == 3
    assert [s.slot for s in trace.slots] == [0, 1, 2]
    assert trace.slots[0].mode is GateMode.RETRIEVAL_ONLY
    assert trace.slots[1].mode is GateMode.RETRIEVAL_ONLY
    assert trace.slots[2].mode is GateMode.HYBRID
    assert trace.hybrid_hops == 1
    assert trace.total_invocations == trace.slots[2].invocations
    assert trace.abstained == (len(answers) == 0)


def test_execute_query_is_deterministic():
    ctx = _ctx()
    dag = instantiate("2ip", [3, 11], [1, 2, 4])
    a1, t1 = execute_query(ctx, dag, [0.4, 0.6, 0.3])
    a2, t2 = execute_query(ctx, dag, [0.4, 0.6, 0.3])
    assert a1 == a2
    assert t1 == t2


def test_execute_query_abstains_on_impossible_threshold():
    ctx = _ctx()
    dag = instantiate("3p", [7], [0, 1, 2])
    answers, trace = execute_query(ctx, dag, [1.0, 1.0, 1.0])
    assert answers == set()
    assert trace.abstained
    assert trace.total_invocations == 0


def test_execute_query_validation_errors():
    ctx = _ctx()
    dag = instantiate("3p", [7], [0, 1, 2])
    with pytest.raises(ExecutionError, match="thresholds"):
        execute_query(ctx, dag, [0.5, 0.5])
    with pytest.raises(ExecutionError, match="finite"):
        execute_query(ctx, dag, [0.5, math.nan, 0.5])
    bad_anchor = instantiate("1p", [ctx.graph.n_entities + 5], [0])
    with pytest.raises(ExecutionError, match="anchor"):
        execute_query(ctx, bad_anchor, [0.5])
    bad_rel = instantiate("1p", [0], [ctx.graph.n_relations])
    with pytest.raises(ExecutionError, match="relation"):
        execute_query(ctx, bad_rel, [0.5])


def test_execute_nested_answer_sets_across_strategies():
    # Pointwise-larger threshold vectors can only shrink the answer set.
    ctx = _ctx()
    rng = random.Random(8)
    for _ in range(25):
        anchors = [rng.randrange(ctx.graph.n_entities)]
        relations = [rng.randrange(ctx.graph.n_relations) for _ in range(3)]
        dag = instantiate("3p", anchors, relations)
        base = [rng.uniform(0.1, 0.9) for _ in range(3)]
        bumped = [min(1.0, b + rng.uniform(0.0, 0.3)) for b in base]
        loose, _ = execute_query(ctx, dag, base)
        tight, _ = execute_query(ctx, dag, bumped)
        assert tight <= loose


# -- runtime cap ---------------------------------------------------------------


def test_runtime_top_k_caps_inferred_admissions():
    free = _ctx(seed=23)
    capped = _ctx(seed=23, runtime_top_k=5)
    view = free.view
    rng = random.Random(9)
    saw_cap_bind = False
    for _ in range(20):
        relation = rng.randrange(free.graph.n_relations)
        sources = sorted({rng.randrange(free.graph.n_entities) for _ in range(3)})
        lam = rng.uniform(0.05, 0.3)
        full, _ = gate_execute(free, 0, sources, relation, lam)
        trimmed, stats = gate_execute(capped, 0, sources, relation, lam)
        retrieved = view.retrieve(sources, relation)
        assert trimmed <= full
        assert retrieved <= trimmed
        assert len(trimmed - retrieved) <= 5
        assert stats.mode is GateMode.HYBRID
        if len(full - retrieved) > 5:
            saw_cap_bind = True
            assert len(trimmed - retrieved) == 5
        else:
            assert trimmed == full
    assert saw_cap_bind


# -- auditing ------------------------------------------------------------------


class _Recorder:
    def __init__(self) -> None:
        self.events: list[tuple[np.ndarray, Provenance]] = []

    def __call__(self, values: np.ndarray, provenance: Provenance) -> None:
        self.events.append((np.array(values, copy=True), provenance))


def test_auditor_sees_hybrid_inferred_values():
    rec = _Recorder()
    ctx = _ctx(auditor=rec)
    sources = [4, 8]
    relation = 1
    admitted, _ = gate_execute(ctx, 0, sources, relation, 0.2)
    assert rec.events
    assert all(prov is Provenance.INFERRED for _, prov in rec.events)
    band = ctx.gate.delta - ctx.gate.epsilon
    total = 0
    for values, _ in rec.events:
        assert np.all(values >= 0.0)
        assert np.all(values <= band)
        total += values.size
    retrieved = ctx.view.retrieve(sources, relation)
    assert total == len(sources) * (ctx.graph.n_entities - len(retrieved))


def test_auditor_sees_slow_path_retrieved_values():
    rec = _Recorder()
    ctx = _ctx(auditor=rec)
    gate_execute(ctx, 0, list(range(50)), 2, 0.9)
    assert rec.events
    assert all(prov is Provenance.RETRIEVED for _, prov in rec.events)
    for values, _ in rec.events:
        assert np.all(values >= ctx.gate.delta)
        assert np.all(values < 1.0)


def test_fast_retrieval_path_emits_no_audit_events():
    # At or below delta the gate answers from the index alone, so no
    # unified scores are materialized and the auditor stays silent.
    rec = _Recorder()
    ctx = _ctx(auditor=rec)
    gate_execute(ctx, 0, list(range(50)), 2, ctx.gate.delta)
    gate_execute(ctx, 0, list(range(50)), 3, 0.4999999)
    assert rec.events == [] or all(
        prov is Provenance.INFERRED for _, prov in rec.events
    )
    # 0.4999999 < delta routes to hybrid, so only the exact-delta call is
    # guaranteed silent; rerun it alone to pin that down.
    rec2 = _Recorder()
    ctx2 = _ctx(auditor=rec2)
    gate_execute(ctx2, 0, list(range(50)), 2, ctx2.gate.delta)
    assert rec2.events == []
