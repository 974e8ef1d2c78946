"""Gated query execution over an incomplete graph.

Every candidate triple gets one unified score: facts present in the
execution view score ``delta + (1 - delta) * H(triple)`` with ``H`` a
deterministic tiebreak hash, and unobserved candidates score
``phi * (delta - epsilon)`` with ``phi`` the neural score.  Admission at
a hop is the single rule ``score >= lambda``; because the two bands are
disjoint, a threshold at or above ``delta`` makes the hop a pure
retrieval operation (zero scorer invocations), while a threshold below
``delta`` admits every observed fact and additionally scans the
vocabulary for inferred candidates (hybrid mode).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ExecutionError
from .graph import KnowledgeGraph, GraphView, ViewKind
from .query import QueryDag, evaluate
from .scorer import ScoreFunction

_CHUNK = 64


class GateMode(str, Enum):
    RETRIEVAL_ONLY = "retrieval_only"
    HYBRID = "hybrid"


class Provenance(str, Enum):
    RETRIEVED = "retrieved"
    INFERRED = "inferred"


# Auditor receives every computed unified-score array plus its provenance.
Auditor = Callable[[np.ndarray, Provenance], None]


@dataclass(frozen=True)
class GateConfig:
    """Unified-score geometry: routing threshold and band separation."""

    delta: float = 0.5
    epsilon: float = 1e-9

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 < self.epsilon < self.delta:
            raise ConfigurationError(
                f"epsilon must be in (0, delta), got {self.epsilon}"
            )


def tiebreak_hash(head: int, relation: int, tail: int) -> float:
    """Platform-stable hash of a triple into [0, 1).

    MD5 of the little-endian packed int64 triple; the first 8 digest
    bytes, read big-endian, scaled by 2**-64.
    """
    digest = hashlib.md5(struct.pack("<3q", head, relation, tail)).digest()
    return int.from_bytes(digest[:8], "big") * (2.0**-64)


@dataclass
class EngineContext:
    """Everything needed to execute queries: graph view, scorer, gate.

    ``runtime_top_k`` caps the number of inferred admissions per hybrid
    hop; it is an engineering escape hatch and stays off by default
    (hybrid hops scan the whole vocabulary without restriction).
    """

    graph: KnowledgeGraph
    scorer: ScoreFunction
    gate: GateConfig = field(default_factory=GateConfig)
    view_kind: ViewKind = ViewKind.OBSERVED
    auditor: Auditor | None = None
    runtime_top_k: int | None = None

    @property
    def view(self) -> GraphView:
        return self.graph.view(self.view_kind)


def unified_score(ctx: EngineContext, head: int, relation: int, tail: int) -> tuple[float, Provenance]:
    """Pointwise unified score with its provenance."""
    head, relation, tail = int(head), int(relation), int(tail)
    if ctx.view.has(head, relation, tail):
        value = ctx.gate.delta + (1.0 - ctx.gate.delta) * tiebreak_hash(head, relation, tail)
        return value, Provenance.RETRIEVED
    phi = ctx.scorer.score(head, relation, tail)
    return phi * (ctx.gate.delta - ctx.gate.epsilon), Provenance.INFERRED


@dataclass(frozen=True)
class GateStats:
    slot: int
    mode: GateMode
    invocations: int
    input_size: int
    output_size: int


@dataclass(frozen=True)
class ExecutionTrace:
    slots: tuple[GateStats, ...]
    abstained: bool

    @property
    def total_invocations(self) -> int:
        return sum(s.invocations for s in self.slots)

    @property
    def hybrid_hops(self) -> int:
        return sum(1 for s in self.slots if s.mode is GateMode.HYBRID)


def gate_execute(
    ctx: EngineContext, slot: int, sources: Iterable[int], relation: int, lam: float
) -> tuple[set[int], GateStats]:
    """Run one gated hop: admit tails whose unified score clears ``lam``."""
    if not math.isfinite(lam):
        raise ExecutionError(f"slot {slot}: threshold must be finite, got {lam}")
    src_list = sorted(int(s) for s in set(sources))
    delta = ctx.gate.delta
    if lam >= delta:
        admitted = _retrieval_admit(ctx, src_list, relation, lam)
        stats = GateStats(slot, GateMode.RETRIEVAL_ONLY, 0, len(src_list), len(admitted))
        return admitted, stats
    admitted = _hybrid_admit(ctx, src_list, relation, lam)
    invocations = len(src_list) * ctx.graph.n_entities
    stats = GateStats(slot, GateMode.HYBRID, invocations, len(src_list), len(admitted))
    return admitted, stats


def _retrieval_admit(
    ctx: EngineContext, sources: list[int], relation: int, lam: float
) -> set[int]:
    view = ctx.view
    delta = ctx.gate.delta
    if lam <= delta:
        # Every retrieved fact scores >= delta, so all observed tails pass.
        return view.retrieve(sources, relation)
    admitted: set[int] = set()
    audited: list[float] = []
    for src in sources:
        for tail in view.tails(src, relation).tolist():
            if tail in admitted:
                continue
            value = delta + (1.0 - delta) * tiebreak_hash(src, relation, tail)
            audited.append(value)
            if value >= lam:
                admitted.add(tail)
    if ctx.auditor is not None and audited:
        ctx.auditor(np.asarray(audited, dtype=np.float64), Provenance.RETRIEVED)
    return admitted


def _hybrid_admit(
    ctx: EngineContext, sources: list[int], relation: int, lam: float
) -> set[int]:
    view = ctx.view
    band = ctx.gate.delta - ctx.gate.epsilon
    admitted = view.retrieve(sources, relation)
    if not sources:
        return admitted
    remaining = np.ones(ctx.graph.n_entities, dtype=bool)
    if admitted:
        remaining[sorted(admitted)] = False
    candidates = np.flatnonzero(remaining)
    if ctx.runtime_top_k is not None:
        return _hybrid_admit_capped(ctx, sources, relation, lam, admitted, candidates)
    # Any-semantics over sources: a candidate admitted by one source need
    # not be scored against later ones, so scan in chunks and shrink.
    for start in range(0, len(sources), _CHUNK):
        if candidates.size == 0:
            break
        chunk = sources[start : start + _CHUNK]
        phi = ctx.scorer.score_block(chunk, relation, candidates)
        values = phi * band
        if ctx.auditor is not None:
            ctx.auditor(values.reshape(-1), Provenance.INFERRED)
        passed = (values >= lam).any(axis=0)
        if passed.any():
            admitted.update(candidates[passed].tolist())
            candidates = candidates[~passed]
    return admitted


def _hybrid_admit_capped(
    ctx: EngineContext,
    sources: list[int],
    relation: int,
    lam: float,
    admitted: set[int],
    candidates: np.ndarray,
) -> set[int]:
    # Escape-hatch path: keep only the runtime_top_k best inferred
    # candidates, so every (source, candidate) value must be computed.
    band = ctx.gate.delta - ctx.gate.epsilon
    if candidates.size == 0:
        return admitted
    best = np.full(candidates.shape[0], -np.inf)
    for start in range(0, len(sources), _CHUNK):
        chunk = sources[start : start + _CHUNK]
        phi = ctx.scorer.score_block(chunk, relation, candidates)
        values = phi * band
        if ctx.auditor is not None:
            ctx.auditor(values.reshape(-1), Provenance.INFERRED)
        best = np.maximum(best, values.max(axis=0))
    passing = np.flatnonzero(best >= lam)
    if passing.size > ctx.runtime_top_k:
        order = np.lexsort((candidates[passing], -best[passing]))
        passing = passing[order[: ctx.runtime_top_k]]
    admitted.update(candidates[passing].tolist())
    return admitted


def execute_query(
    ctx: EngineContext, dag: QueryDag, lambdas: Sequence[float]
) -> tuple[set[int], ExecutionTrace]:
    """Execute a query DAG with one calibrated threshold per gate slot."""
    k = dag.k
    lams = [float(x) for x in lambdas]
    if len(lams) != k:
        raise ExecutionError(f"expected {k} thresholds for this query, got {len(lams)}")
    n_entities = ctx.graph.n_entities
    for anchor in dag.anchors:
        if not 0 <= anchor < n_entities:
            raise ExecutionError(f"anchor entity {anchor} out of range [0, {n_entities})")
    for relation in dag.relations:
        if not 0 <= relation < ctx.graph.n_relations:
            raise ExecutionError(
                f"relation {relation} out of range [0, {ctx.graph.n_relations})"
            )
    stats_by_slot: dict[int, GateStats] = {}

    def project(slot: int, src: frozenset[int], relation: int) -> set[int]:
        result, stats = gate_execute(ctx, slot, src, relation, lams[slot])
        stats_by_slot[slot] = stats
        return result

    final, _ = evaluate(dag, project)
    slots = tuple(stats_by_slot[i] for i in range(k))
    return final, ExecutionTrace(slots, abstained=len(final) == 0)
