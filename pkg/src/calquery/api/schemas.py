"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HealthResponse(_Model):
    status: str
    n_entities: int
    n_relations: int
    n_triples: int
    n_observed: int
    calibration_entries: int


class CalibrationEntryOut(_Model):
    topology: str
    alpha: float
    lambdas: list[float]
    eta: float
    strategy: str
    gammas: list[float]
    delta: float
    epsilon: float
    feasible: bool
    corrected_risk: float
    n_opt: int
    n_valid: int


class TableOut(_Model):
    meta: dict
    entries: list[CalibrationEntryOut]


class SlotStatsOut(_Model):
    slot: int
    mode: str
    invocations: int
    input_size: int
    output_size: int


class TraceOut(_Model):
    slots: list[SlotStatsOut]
    abstained: bool
    total_invocations: int
    hybrid_hops: int


class QueryRequest(_Model):
    topology: str
    anchors: list[int] = Field(min_length=1, max_length=2)
    relations: list[int] = Field(min_length=1, max_length=3)
    alpha: float = Field(gt=0.0, lt=1.0)


class QueryResponse(_Model):
    answers: list[int]
    abstained: bool
    alpha: float
    recall_target: float
    lambdas: list[float]
    strategy: str
    feasible: bool
    trace: TraceOut


class ExecuteRequest(_Model):
    topology: str
    anchors: list[int] = Field(min_length=1, max_length=2)
    relations: list[int] = Field(min_length=1, max_length=3)
    lambdas: list[float] = Field(min_length=1, max_length=3)


class ExecuteResponse(_Model):
    answers: list[int]
    abstained: bool
    trace: TraceOut


class ScoreRequest(_Model):
    head: int = Field(ge=0)
    relation: int = Field(ge=0)
    tail: int = Field(ge=0)


class ScoreResponse(_Model):
    head: int
    relation: int
    tail: int
    raw: float
    unified: float
    provenance: str
