"""Experiment configuration: JSON schema with unknown keys rejected."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigurationError
from .query import Topology


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GraphSection(_Section):
    n_entities: int = Field(default=2000, ge=2)
    n_relations: int = Field(default=16, ge=1)
    n_triples: int = Field(default=40000, ge=1)
    # Optional external triple file (tab-separated); overrides the synthetic sizes.
    triples_path: str | None = None


class SplitsSection(_Section):
    opt: int = Field(default=600, ge=1)
    valid: int = Field(default=600, ge=1)
    eval: int = Field(default=300, ge=1)

    @property
    def total(self) -> int:
        return self.opt + self.valid + self.eval


class GateSection(_Section):
    delta: float = Field(default=0.5, gt=0.0, lt=1.0)
    epsilon: float = Field(default=1e-9, gt=0.0)

    @field_validator("epsilon")
    @classmethod
    def _epsilon_below_delta(cls, value: float, info) -> float:
        delta = info.data.get("delta", 0.5)
        if value >= delta:
            raise ValueError(f"epsilon must be < delta, got {value} >= {delta}")
        return value


class ScorerSection(_Section):
    fidelity: Literal["strong", "weak"] = "strong"
    # Explicit Beta shapes override the preset when both are given.
    pos_shape: float | None = Field(default=None, gt=0.0)
    neg_shape: float | None = Field(default=None, gt=0.0)
    seed: int | None = None
    top_k: int = Field(default=10, ge=0)


class CalibrationSection(_Section):
    grid_size: int = Field(default=100, ge=2)
    max_intermediate: int = Field(default=50, ge=1)


class BaselinesSection(_Section):
    static_neural_thetas: list[float] = Field(default=[0.7, 0.8, 0.9, 0.99])
    static_hybrid_thetas: list[float] = Field(default=[0.4, 0.5, 0.6, 0.7])
    include_retrieval_only: bool = True
    include_union_bound: bool = True

    @field_validator("static_neural_thetas", "static_hybrid_thetas")
    @classmethod
    def _thetas_valid(cls, values: list[float]) -> list[float]:
        for theta in values:
            if not 0.0 < theta < 1.0:
                raise ValueError(f"theta must be in (0, 1), got {theta}")
        if len(set(values)) != len(values):
            raise ValueError(f"duplicate theta values: {values}")
        return values


class ExperimentConfig(_Section):
    seed: int = 7
    graph: GraphSection = Field(default_factory=GraphSection)
    splits: SplitsSection = Field(default_factory=SplitsSection)
    gate: GateSection = Field(default_factory=GateSection)
    scorer: ScorerSection = Field(default_factory=ScorerSection)
    calibration: CalibrationSection = Field(default_factory=CalibrationSection)
    baselines: BaselinesSection = Field(default_factory=BaselinesSection)
    topologies: list[str] = Field(default=["3p", "2u", "2ip"])
    alphas: list[float] = Field(default=[0.1, 0.2, 0.3, 0.4])
    incompleteness: list[float] = Field(default=[0.05, 0.2, 0.4])

    @field_validator("topologies")
    @classmethod
    def _topologies_valid(cls, values: list[str]) -> list[str]:
        if not values:
            raise ValueError("topologies must be non-empty")
        for t in values:
            try:
                Topology(t)
            except ValueError:
                raise ValueError(
                    f"unknown topology {t!r}; expected one of "
                    f"{[x.value for x in Topology]}"
                ) from None
        if len(set(values)) != len(values):
            raise ValueError(f"duplicate topologies: {values}")
        return values

    @field_validator("alphas")
    @classmethod
    def _alphas_valid(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("alphas must be non-empty")
        for a in values:
            if not 0.0 < a < 1.0:
                raise ValueError(f"alpha must be in (0, 1), got {a}")
        if len(set(values)) != len(values):
            raise ValueError(f"duplicate alphas: {values}")
        return values

    @field_validator("incompleteness")
    @classmethod
    def _fracs_valid(cls, values: list[float]) -> list[float]:
        if not values:
            raise ValueError("incompleteness must be non-empty")
        for f in values:
            if not 0.0 <= f < 1.0:
                raise ValueError(f"incompleteness fraction must be in [0, 1), got {f}")
        if len(set(values)) != len(values):
            raise ValueError(f"duplicate incompleteness fractions: {values}")
        return values


def load_config(path: str | Path) -> ExperimentConfig:
    """Load and validate an experiment config; unknown keys are an error."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(raw, source=str(path))


def parse_config(raw: dict, source: str = "<dict>") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{source}: config root must be a JSON object")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        issues = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(f"{source}: {issues}") from exc
