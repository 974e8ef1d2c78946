"""HTTP service exposing the calibrated query engine.

The service is a thin wrapper: it owns one engine context (graph,
scorer, gate) and one calibration table, both built ahead of time.
Query execution itself stays in-process and synchronous.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..calibration import CalibrationEntry, CalibrationTable
from ..engine import EngineContext, ExecutionTrace, execute_query, unified_score
from ..errors import CalibrationError, ExecutionError, QueryStructureError
from ..query import instantiate
from .schemas import (
    CalibrationEntryOut,
    ExecuteRequest,
    ExecuteResponse,
    HealthResponse,
    QueryRequest,
    QueryResponse,
    ScoreRequest,
    ScoreResponse,
    SlotStatsOut,
    TableOut,
    TraceOut,
)


def _trace_out(trace: ExecutionTrace) -> TraceOut:
    return TraceOut(
        slots=[
            SlotStatsOut(
                slot=s.slot,
                mode=s.mode.value,
                invocations=s.invocations,
                input_size=s.input_size,
                output_size=s.output_size,
            )
            for s in trace.slots
        ],
        abstained=trace.abstained,
        total_invocations=trace.total_invocations,
        hybrid_hops=trace.hybrid_hops,
    )


def _entry_out(entry: CalibrationEntry) -> CalibrationEntryOut:
    return CalibrationEntryOut(
        topology=entry.topology,
        alpha=entry.alpha,
        lambdas=list(entry.lambdas),
        eta=entry.eta,
        strategy=entry.strategy,
        gammas=list(entry.gammas),
        delta=entry.delta,
        epsilon=entry.epsilon,
        feasible=entry.feasible,
        corrected_risk=entry.corrected_risk,
        n_opt=entry.n_opt,
        n_valid=entry.n_valid,
    )


def create_app(ctx: EngineContext, table: CalibrationTable) -> FastAPI:
    app = FastAPI(title="calquery", version="0.1.0")

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        g = ctx.graph
        return HealthResponse(
            status="ok",
            n_entities=g.n_entities,
            n_relations=g.n_relations,
            n_triples=g.n_triples,
            n_observed=g.n_observed,
            calibration_entries=len(table.entries),
        )

    @app.get("/calibration", response_model=TableOut)
    def calibration() -> TableOut:
        return TableOut(meta=table.meta, entries=[_entry_out(e) for e in table.entries])

    @app.post("/query", response_model=QueryResponse)
    def query(req: QueryRequest) -> QueryResponse:
        try:
            entry = table.get(req.topology, req.alpha)
        except CalibrationError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        try:
            dag = instantiate(req.topology, req.anchors, req.relations)
            answers, trace = execute_query(ctx, dag, list(entry.lambdas))
        except (QueryStructureError, ExecutionError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return QueryResponse(
            answers=sorted(answers),
            abstained=trace.abstained,
            alpha=entry.alpha,
            recall_target=1.0 - entry.alpha,
            lambdas=list(entry.lambdas),
            strategy=entry.strategy,
            feasible=entry.feasible,
            trace=_trace_out(trace),
        )

    @app.post("/execute", response_model=ExecuteResponse)
    def execute(req: ExecuteRequest) -> ExecuteResponse:
        try:
            dag = instantiate(req.topology, req.anchors, req.relations)
            answers, trace = execute_query(ctx, dag, req.lambdas)
        except (QueryStructureError, ExecutionError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return ExecuteResponse(
            answers=sorted(answers), abstained=trace.abstained, trace=_trace_out(trace)
        )

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest) -> ScoreResponse:
        g = ctx.graph
        if req.head >= g.n_entities or req.tail >= g.n_entities or req.relation >= g.n_relations:
            raise HTTPException(status_code=422, detail="entity or relation id out of range")
        value, provenance = unified_score(ctx, req.head, req.relation, req.tail)
        raw = ctx.scorer.score(req.head, req.relation, req.tail)
        return ScoreResponse(
            head=req.head,
            relation=req.relation,
            tail=req.tail,
            raw=raw,
            unified=value,
            provenance=provenance.value,
        )

    return app
