"""Baseline strategies the calibrated engine is compared against.

* retrieval_only: exact traversal of the observed graph (a uniform
  threshold vector at the routing threshold delta).
* static_neural: raw neural scores thresholded at a fixed theta over the
  whole vocabulary, no retrieval.
* static_hybrid: the conformal gate with the same fixed threshold at
  every slot (no calibration).
* union_bound: per-slot scalar risk calibration at alpha / k against
  per-hop false-negative rate with ground-truth inputs fed to each hop.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .calibration import (
    CrcSelection,
    EmpiricalQuantile,
    RiskEstimate,
    crc_select,
)
from .engine import (
    EngineContext,
    ExecutionTrace,
    GateConfig,
    GateMode,
    GateStats,
    execute_query,
    tiebreak_hash,
)
from .errors import CalibrationError, ConfigurationError
from .graph import KnowledgeGraph, ViewKind
from .query import NodeKind, QueryDag, QueryInstance, evaluate
from .scorer import ScoreFunction

_CHUNK = 64


class BaselineKind(str, Enum):
    RETRIEVAL_ONLY = "retrieval_only"
    STATIC_NEURAL = "static_neural"
    STATIC_HYBRID = "static_hybrid"
    UNION_BOUND = "union_bound"


@dataclass(frozen=True)
class BaselineSpec:
    kind: BaselineKind
    theta: float | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        kind = BaselineKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (BaselineKind.STATIC_NEURAL, BaselineKind.STATIC_HYBRID):
            if self.theta is None or not 0.0 < self.theta < 1.0:
                raise ConfigurationError(
                    f"{kind.value} needs theta in (0, 1), got {self.theta}"
                )
            if self.alpha is not None:
                raise ConfigurationError(f"{kind.value} does not take alpha")
        elif kind is BaselineKind.UNION_BOUND:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ConfigurationError(
                    f"union_bound needs alpha in (0, 1), got {self.alpha}"
                )
            if self.theta is not None:
                raise ConfigurationError("union_bound does not take theta")
        else:
            if self.theta is not None or self.alpha is not None:
                raise ConfigurationError("retrieval_only takes neither theta nor alpha")

    @property
    def param(self) -> float | None:
        """The value reported in the results 'param' column."""
        return self.theta if self.theta is not None else self.alpha


def run_baseline(
    spec: BaselineSpec,
    ctx: EngineContext,
    instance: QueryInstance,
    lambdas: Sequence[float] | None = None,
) -> tuple[set[int], ExecutionTrace]:
    """Execute one instance under a baseline strategy."""
    dag = instance.dag()
    if spec.kind is BaselineKind.RETRIEVAL_ONLY:
        return execute_query(ctx, dag, [ctx.gate.delta] * dag.k)
    if spec.kind is BaselineKind.STATIC_HYBRID:
        return execute_query(ctx, dag, [spec.theta] * dag.k)
    if spec.kind is BaselineKind.UNION_BOUND:
        if lambdas is None:
            raise ConfigurationError(
                "union_bound execution needs the calibrated threshold vector"
            )
        return execute_query(ctx, dag, lambdas)
    return _run_static_neural(ctx, dag, spec.theta)


def _run_static_neural(
    ctx: EngineContext, dag: QueryDag, theta: float
) -> tuple[set[int], ExecutionTrace]:
    stats_by_slot: dict[int, GateStats] = {}
    n_entities = ctx.graph.n_entities

    def project(slot: int, sources: frozenset[int], relation: int) -> set[int]:
        src_list = sorted(int(s) for s in sources)
        admitted = _neural_admit(ctx.scorer, src_list, relation, theta, n_entities)
        stats_by_slot[slot] = GateStats(
            slot,
            GateMode.HYBRID,
            len(src_list) * n_entities,
            len(src_list),
            len(admitted),
        )
        return admitted

    final, _ = evaluate(dag, project)
    slots = tuple(stats_by_slot[i] for i in range(dag.k))
    return final, ExecutionTrace(slots, abstained=len(final) == 0)


def _neural_admit(
    scorer: ScoreFunction,
    sources: list[int],
    relation: int,
    theta: float,
    n_entities: int,
) -> set[int]:
    admitted: set[int] = set()
    if not sources:
        return admitted
    candidates = np.arange(n_entities, dtype=np.int64)
    for start in range(0, len(sources), _CHUNK):
        if candidates.size == 0:
            break
        chunk = sources[start : start + _CHUNK]
        phi = scorer.score_block(chunk, relation, candidates)
        passed = (phi >= theta).any(axis=0)
        if passed.any():
            admitted.update(candidates[passed].tolist())
            candidates = candidates[~passed]
    return admitted


# -- union-bound calibration -----------------------------------------------------


@dataclass(frozen=True)
class UnionBoundCalibration:
    """Per-slot thresholds, each certified at alpha / k on per-hop loss."""

    topology: str
    alpha: float
    lambdas: tuple[float, ...]
    feasible: bool
    per_slot_corrected: tuple[float, ...]
    n: int


def _gt_io(dag: QueryDag, instance: QueryInstance) -> list[tuple[frozenset[int], frozenset[int]]]:
    """Per slot: (ground-truth input set, ground-truth output set)."""
    node_gt: list[frozenset[int]] = []
    per_slot: list[tuple[frozenset[int], frozenset[int]]] = []
    for node in dag.nodes:
        if node.kind is NodeKind.ANCHOR:
            node_gt.append(frozenset([node.entity]))
        elif node.kind is NodeKind.PROJECTION:
            inputs = node_gt[node.children[0]]
            outputs = instance.truth.per_slot[node.gate_slot]
            per_slot.append((inputs, outputs))
            node_gt.append(outputs)
        elif node.kind is NodeKind.INTERSECTION:
            acc = node_gt[node.children[0]]
            for child in node.children[1:]:
                acc = acc & node_gt[child]
            node_gt.append(acc)
        else:
            acc = node_gt[node.children[0]]
            for child in node.children[1:]:
                acc = acc | node_gt[child]
            node_gt.append(acc)
    return per_slot


def _unified_pairs(
    graph: KnowledgeGraph,
    scorer: ScoreFunction,
    gate: GateConfig,
    sources: np.ndarray,
    relation: int,
    targets: np.ndarray,
) -> np.ndarray:
    """Unified-score matrix for (sources x targets) on the observed view."""
    phi = scorer.score_block(sources, relation, targets)
    mat = phi * (gate.delta - gate.epsilon)
    for i, src in enumerate(sources.tolist()):
        obs = graph.tails(src, relation, ViewKind.OBSERVED)
        if obs.size == 0:
            continue
        mask = np.isin(targets, obs)
        for pos in np.flatnonzero(mask).tolist():
            tail = int(targets[pos])
            mat[i, pos] = gate.delta + (1.0 - gate.delta) * tiebreak_hash(src, relation, tail)
    return mat


@dataclass
class HopScores:
    """Per-hop ground-truth target scores, one array per (query, slot)."""

    topology: str
    k: int
    per_query: list[list[np.ndarray]]

    @property
    def n(self) -> int:
        return len(self.per_query)


def collect_hop_scores(
    graph: KnowledgeGraph,
    scorer: ScoreFunction,
    gate: GateConfig,
    instances: Sequence[QueryInstance],
) -> HopScores:
    """Measure each hop in isolation with ground-truth inputs.

    For every query and slot, records the unified score of each
    ground-truth target, maximized over the slot's ground-truth sources.
    """
    if not instances:
        raise CalibrationError("empty union-bound calibration workload")
    topology = instances[0].topology
    k = instances[0].dag().k
    per_query: list[list[np.ndarray]] = []
    for inst in instances:
        if inst.topology is not topology:
            raise CalibrationError("mixed topologies in union-bound workload")
        dag = inst.dag()
        slots: list[np.ndarray] = []
        for slot, (inputs, outputs) in enumerate(_gt_io(dag, inst)):
            sources = np.array(sorted(inputs), dtype=np.int64)
            targets = np.array(sorted(outputs), dtype=np.int64)
            mat = _unified_pairs(graph, scorer, gate, sources, dag.relations[slot], targets)
            slots.append(mat.max(axis=0))
        per_query.append(slots)
    return HopScores(topology=topology.value, k=k, per_query=per_query)


def calibrate_union_bound(
    hop_scores: HopScores, alpha: float, grid_size: int = 100
) -> UnionBoundCalibration:
    """Calibrate each slot separately at budget alpha / k.

    A hop's loss at a threshold is the fraction of its ground-truth
    targets scoring below it; the slot threshold is the largest quantile
    whose corrected per-hop risk stays within alpha / k.  A slot whose
    budget is unreachable falls back to its sample minimum and marks the
    whole vector infeasible.
    """
    if not 0.0 < alpha < 1.0:
        raise CalibrationError(f"alpha must be in (0, 1), got {alpha}")
    n = hop_scores.n
    if n == 0:
        raise CalibrationError("empty union-bound calibration workload")
    grid = np.linspace(0.0, 1.0, int(grid_size))
    budget = alpha / hop_scores.k
    lambdas: list[float] = []
    corrected: list[float] = []
    feasible = True
    for slot in range(hop_scores.k):
        slot_scores = [q[slot] for q in hop_scores.per_query]
        pooled = np.sort(np.concatenate(slot_scores))
        quantile = EmpiricalQuantile(pooled)
        lam_grid = np.asarray(quantile(grid), dtype=np.float64)
        risk = np.zeros(grid.shape[0])
        for scores in slot_scores:
            risk += (scores[None, :] < lam_grid[:, None]).mean(axis=1)
        risk /= n
        estimates = [
            RiskEstimate(float(grid[i]), float(risk[i]), 0.0)
            for i in range(grid.shape[0])
        ]
        selection: CrcSelection = crc_select(estimates, budget, n)
        if selection.feasible:
            lambdas.append(float(lam_grid[selection.index]))
            corrected.append(float(selection.corrected))
        else:
            feasible = False
            lambdas.append(float(pooled[0]))
            corrected.append(float((n * risk[0] + 1.0) / (n + 1.0)))
    return UnionBoundCalibration(
        topology=hop_scores.topology,
        alpha=float(alpha),
        lambdas=tuple(lambdas),
        feasible=feasible,
        per_slot_corrected=tuple(corrected),
        n=n,
    )
