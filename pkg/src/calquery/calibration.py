"""Risk calibration: per-slot thresholds with a finite-sample recall bound.

The calibrator pools unified scores of ground-truth candidates per gate
slot, turns them into empirical quantile functions, and scalarizes a
single knob ``eta`` into a full threshold vector via per-slot exponents.
Raising ``eta`` raises every threshold, so result sets shrink and the
empirical false-negative rate is non-decreasing; the selection rule
picks the largest ``eta`` whose corrected risk stays within the budget
``alpha``, which minimizes answer-set size subject to the bound.

Candidate frontiers during calibration are pruned to ground truth plus
the top scoring inferred candidates per hop.  Pruned outputs are subsets
of unrestricted outputs at the same thresholds, so the calibrated risk
upper-bounds the runtime risk and the guarantee carries over.

Risk is certified on the optimization split only; the validation split
is used solely to pick among exponent strategies by mean answer-set
cardinality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import EngineContext, GateConfig, execute_query, tiebreak_hash
from .errors import CalibrationError
from .graph import KnowledgeGraph, ViewKind
from .metrics import fnr_loss
from .query import NodeKind, QueryInstance, Topology
from .scorer import ScoreFunction

_TABLE_FORMAT = "calquery-table-v1"


# -- empirical quantiles -------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalQuantile:
    """Lower empirical quantile (inverse CDF) of a sorted sample.

    ``Q(p)`` returns the ``max(1, ceil(p * n))``-th order statistic, so
    ``Q(0)`` is the sample minimum and ``Q(1)`` the maximum.
    """

    sample: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.sample, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise CalibrationError("empty quantile sample")
        if not np.all(np.isfinite(arr)):
            raise CalibrationError("quantile sample contains non-finite values")
        if np.any(np.diff(arr) < 0):
            raise CalibrationError("quantile sample must be sorted ascending")
        object.__setattr__(self, "sample", arr)

    @property
    def n(self) -> int:
        return int(self.sample.shape[0])

    def __call__(self, p: float | np.ndarray) -> float | np.ndarray:
        arr = np.asarray(p, dtype=np.float64)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise CalibrationError(f"quantile level out of [0, 1]: {p}")
        idx = np.ceil(arr * self.n).astype(np.int64)
        idx = np.clip(idx, 1, self.n) - 1
        out = self.sample[idx]
        if np.isscalar(p) or np.ndim(p) == 0:
            return float(out)
        return out


# -- scalarization -------------------------------------------------------------


@dataclass(frozen=True)
class ScalarizationStrategy:
    """Per-slot exponents mapping one knob into a threshold vector.

    Exponents above 1 push a slot toward lower quantiles (looser
    thresholds); below 1 toward higher ones (tighter).
    """

    label: str
    gammas: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.gammas or any(g <= 0 for g in self.gammas):
            raise CalibrationError(f"gammas must be positive, got {self.gammas}")

    def thresholds(self, eta: float, quantiles: Sequence[EmpiricalQuantile]) -> np.ndarray:
        """Threshold vector at ``eta``; one entry per gate slot."""
        if len(quantiles) != len(self.gammas):
            raise CalibrationError(
                f"strategy has {len(self.gammas)} slots, got {len(quantiles)} quantiles"
            )
        if not 0.0 <= eta <= 1.0:
            raise CalibrationError(f"eta must be in [0, 1], got {eta}")
        return np.array(
            [q(float(eta) ** g) for q, g in zip(quantiles, self.gammas)], dtype=np.float64
        )

    def threshold_grid(
        self, grid: np.ndarray, quantiles: Sequence[EmpiricalQuantile]
    ) -> np.ndarray:
        """Thresholds for every grid value; shape (len(grid), k)."""
        if len(quantiles) != len(self.gammas):
            raise CalibrationError(
                f"strategy has {len(self.gammas)} slots, got {len(quantiles)} quantiles"
            )
        cols = [q(np.power(grid, g)) for q, g in zip(quantiles, self.gammas)]
        return np.column_stack(cols)


def default_strategies(k: int) -> list[ScalarizationStrategy]:
    """The strategy family swept during calibration, deduplicated."""
    if k < 1:
        raise CalibrationError(f"k must be positive, got {k}")
    ramp_down = (1.5, 1.0, 0.5)
    ramp_up = (0.5, 1.0, 1.5)
    raw = [
        ("uniform", (1.0,) * k),
        ("early_loose", tuple(ramp_down[:k]) if k <= 3 else (1.5,) + (1.0,) * (k - 2) + (0.5,)),
        ("late_loose", tuple(ramp_up[:k]) if k <= 3 else (0.5,) + (1.0,) * (k - 2) + (1.5,)),
        ("tight", (0.7,) * k),
        ("loose", (1.5,) * k),
    ]
    seen: set[tuple[float, ...]] = set()
    out: list[ScalarizationStrategy] = []
    for label, gammas in raw:
        if gammas in seen:
            continue
        seen.add(gammas)
        out.append(ScalarizationStrategy(label, gammas))
    return out


# -- conformal risk control ----------------------------------------------------


@dataclass(frozen=True)
class RiskEstimate:
    """Empirical risk and mean cardinality at one knob value."""

    eta: float
    risk: float
    cardinality: float


@dataclass(frozen=True)
class CrcSelection:
    index: int | None
    eta: float | None
    corrected: float | None
    feasible: bool


def corrected_risk(risk: float | np.ndarray, n: int) -> float | np.ndarray:
    """Finite-sample corrected risk: (n * risk + 1) / (n + 1), loss bound 1."""
    return (n * np.asarray(risk, dtype=np.float64) + 1.0) / (n + 1.0)


def crc_select(estimates: Sequence[RiskEstimate], alpha: float, n: int) -> CrcSelection:
    """Pick the largest knob whose corrected risk stays within ``alpha``.

    Estimates must be ordered by strictly increasing ``eta`` with
    non-decreasing risk (the nestedness invariant); a violation is a bug
    upstream and raises instead of being patched over.
    """
    if not estimates:
        raise CalibrationError("no risk estimates to select from")
    if not 0.0 < alpha < 1.0:
        raise CalibrationError(f"alpha must be in (0, 1), got {alpha}")
    if n < 1:
        raise CalibrationError(f"calibration size must be positive, got {n}")
    etas = np.array([e.eta for e in estimates], dtype=np.float64)
    risks = np.array([e.risk for e in estimates], dtype=np.float64)
    if np.any(np.diff(etas) <= 0):
        raise CalibrationError("risk estimates must have strictly increasing eta")
    if np.any(np.diff(risks) < -1e-9):
        raise CalibrationError(
            "empirical risk decreased as eta grew; nestedness is broken"
        )
    feasible = corrected_risk(risks, n) <= alpha
    idx = np.flatnonzero(feasible)
    if idx.size == 0:
        return CrcSelection(index=None, eta=None, corrected=None, feasible=False)
    i = int(idx[-1])
    return CrcSelection(
        index=i,
        eta=float(etas[i]),
        corrected=float(corrected_risk(risks[i], n)),
        feasible=True,
    )


# -- pruned score collection ---------------------------------------------------


@dataclass
class _ReplayNode:
    kind: NodeKind
    universe: np.ndarray
    parent: int = -1
    slot: int = -1
    score_mat: np.ndarray | None = None
    children: tuple[int, ...] = ()
    child_pos: tuple[np.ndarray, ...] = ()


@dataclass
class ReplayQuery:
    """Pruned per-query score matrices supporting batched threshold sweeps."""

    nodes: list[_ReplayNode]
    gt_mask: np.ndarray
    gt_count: int
    k: int

    def replay(self, lam_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Loss and cardinality for each threshold-vector row of ``lam_mat``."""
        lam_mat = np.atleast_2d(np.asarray(lam_mat, dtype=np.float64))
        if lam_mat.shape[1] != self.k:
            raise CalibrationError(
                f"threshold matrix has {lam_mat.shape[1]} slots, query has {self.k}"
            )
        n_rows = lam_mat.shape[0]
        outs: list[np.ndarray] = []
        for node in self.nodes:
            if node.kind is NodeKind.ANCHOR:
                outs.append(np.ones((n_rows, 1), dtype=bool))
            elif node.kind is NodeKind.PROJECTION:
                parent = outs[node.parent]
                lam = lam_mat[:, node.slot][:, None, None]
                passed = node.score_mat[None, :, :] >= lam
                outs.append((passed & parent[:, :, None]).any(axis=1))
            elif node.kind is NodeKind.INTERSECTION:
                acc = outs[node.children[0]][:, node.child_pos[0]]
                for child, pos in zip(node.children[1:], node.child_pos[1:]):
                    acc = acc & outs[child][:, pos]
                outs.append(acc)
            else:
                out = np.zeros((n_rows, node.universe.shape[0]), dtype=bool)
                for child, pos in zip(node.children, node.child_pos):
                    out[:, pos] |= outs[child]
                outs.append(out)
        final = outs[-1]
        hits = (final & self.gt_mask[None, :]).sum(axis=1)
        loss = 1.0 - hits / self.gt_count
        card = final.sum(axis=1).astype(np.float64)
        return loss, card


@dataclass
class CalibrationScores:
    """Collected scores for one workload: pooled slot samples plus replays."""

    topology: Topology
    k: int
    slot_samples: list[np.ndarray]
    queries: list[ReplayQuery]

    @property
    def n_queries(self) -> int:
        return len(self.queries)


def collect_scores(
    graph: KnowledgeGraph,
    scorer: ScoreFunction,
    gate: GateConfig,
    instances: Sequence[QueryInstance],
    top_k: int = 10,
) -> CalibrationScores:
    """Simulate pruned execution and record ground-truth candidate scores.

    Per projection slot, the candidate frontier propagated to the next hop
    is the slot's ground truth plus the ``top_k`` highest scoring inferred
    candidates; the recorded sample for the slot is each ground-truth
    candidate's unified score maximized over the pruned source set.
    """
    if not instances:
        raise CalibrationError("cannot collect scores from an empty workload")
    topology = instances[0].topology
    k = instances[0].dag().k
    slot_pool: list[list[np.ndarray]] = [[] for _ in range(k)]
    queries: list[ReplayQuery] = []
    for inst in instances:
        if inst.topology is not topology:
            raise CalibrationError("mixed topologies in one calibration workload")
        replay, samples = _collect_instance(graph, scorer, gate, inst, top_k)
        queries.append(replay)
        for j in range(k):
            slot_pool[j].append(samples[j])
    slot_samples = [np.concatenate(chunks) for chunks in slot_pool]
    return CalibrationScores(topology, k, slot_samples, queries)


def _collect_instance(
    graph: KnowledgeGraph,
    scorer: ScoreFunction,
    gate: GateConfig,
    inst: QueryInstance,
    top_k: int,
) -> tuple[ReplayQuery, list[np.ndarray]]:
    dag = inst.dag()
    vocab = np.arange(graph.n_entities, dtype=np.int64)
    band = gate.delta - gate.epsilon
    nodes: list[_ReplayNode] = []
    samples: list[np.ndarray] = [np.empty(0)] * dag.k
    for node in dag.nodes:
        if node.kind is NodeKind.ANCHOR:
            nodes.append(
                _ReplayNode(NodeKind.ANCHOR, np.array([node.entity], dtype=np.int64))
            )
        elif node.kind is NodeKind.PROJECTION:
            parent_idx = node.children[0]
            parent_univ = nodes[parent_idx].universe
            slot = node.gate_slot
            rel = node.relation
            gt = np.array(sorted(inst.truth.per_slot[slot]), dtype=np.int64)
            phi_full = scorer.score_block(parent_univ, rel, vocab)
            observed = [
                graph.tails(int(s), rel, ViewKind.OBSERVED) for s in parent_univ.tolist()
            ]
            # Rank inferred candidates only: observed pairs and ground truth
            # are excluded from the ranking (ground truth joins the frontier
            # unconditionally).
            neural = phi_full.copy()
            for i, obs in enumerate(observed):
                if obs.size:
                    neural[i, obs] = -1.0
            neural_max = neural.max(axis=0)
            neural_max[gt] = -1.0
            order = np.lexsort((vocab, -neural_max))
            top = [int(t) for t in order[:top_k].tolist() if neural_max[t] >= 0.0]
            universe = np.array(sorted(set(gt.tolist()) | set(top)), dtype=np.int64)
            mat = phi_full[:, universe] * band
            for i, obs in enumerate(observed):
                if obs.size == 0:
                    continue
                src = int(parent_univ[i])
                mask = np.isin(universe, obs)
                for pos in np.flatnonzero(mask).tolist():
                    tail = int(universe[pos])
                    mat[i, pos] = gate.delta + (1.0 - gate.delta) * tiebreak_hash(
                        src, rel, tail
                    )
            gt_pos = np.searchsorted(universe, gt)
            samples[slot] = mat[:, gt_pos].max(axis=0)
            nodes.append(
                _ReplayNode(
                    NodeKind.PROJECTION, universe, parent=parent_idx, slot=slot, score_mat=mat
                )
            )
        else:
            child_univs = [nodes[c].universe for c in node.children]
            if node.kind is NodeKind.INTERSECTION:
                universe = reduce(np.intersect1d, child_univs)
                child_pos = tuple(np.searchsorted(cu, universe) for cu in child_univs)
            else:
                universe = reduce(np.union1d, child_univs)
                child_pos = tuple(np.searchsorted(universe, cu) for cu in child_univs)
            nodes.append(
                _ReplayNode(
                    node.kind, universe, children=node.children, child_pos=child_pos
                )
            )
    final_univ = nodes[-1].universe
    gt_final = np.array(sorted(inst.truth.final), dtype=np.int64)
    gt_mask = np.isin(final_univ, gt_final)
    if int(gt_mask.sum()) != gt_final.shape[0]:
        raise CalibrationError(
            f"query {inst.query_id}: pruned frontier lost ground-truth answers"
        )
    return ReplayQuery(nodes, gt_mask, gt_final.shape[0], dag.k), samples


# -- calibration entries and table ---------------------------------------------


@dataclass(frozen=True)
class CalibrationEntry:
    """One calibrated operating point: a threshold vector for (topology, alpha)."""

    topology: str
    alpha: float
    lambdas: tuple[float, ...]
    eta: float
    strategy: str
    gammas: tuple[float, ...]
    delta: float
    epsilon: float
    feasible: bool
    n_opt: int
    n_valid: int
    seed: int
    corrected_risk: float
    valid_cardinality: float
    slot_samples: tuple[tuple[float, ...], ...]

    def validate(self) -> None:
        """Recompute the threshold vector from the stored samples."""
        if len(self.lambdas) != len(self.gammas) or len(self.lambdas) != len(self.slot_samples):
            raise CalibrationError(f"entry {self.topology}/{self.alpha}: slot count mismatch")
        quantiles = [EmpiricalQuantile(np.asarray(s)) for s in self.slot_samples]
        strategy = ScalarizationStrategy(self.strategy, self.gammas)
        expected = strategy.thresholds(self.eta, quantiles)
        if list(expected) != list(self.lambdas):
            raise CalibrationError(
                f"entry {self.topology}/{self.alpha}: thresholds do not match "
                "the stored quantile samples"
            )
        GateConfig(self.delta, self.epsilon)

    def to_dict(self) -> dict:
        return {
            "topology": self.topology,
            "alpha": self.alpha,
            "lambdas": list(self.lambdas),
            "eta": self.eta,
            "strategy": self.strategy,
            "gammas": list(self.gammas),
            "delta": self.delta,
            "epsilon": self.epsilon,
            "feasible": self.feasible,
            "n_opt": self.n_opt,
            "n_valid": self.n_valid,
            "seed": self.seed,
            "corrected_risk": self.corrected_risk,
            "valid_cardinality": self.valid_cardinality,
            "slot_samples": [list(s) for s in self.slot_samples],
        }

    @classmethod
    def from_dict(cls, row: dict) -> "CalibrationEntry":
        try:
            entry = cls(
                topology=str(row["topology"]),
                alpha=float(row["alpha"]),
                lambdas=tuple(float(x) for x in row["lambdas"]),
                eta=float(row["eta"]),
                strategy=str(row["strategy"]),
                gammas=tuple(float(x) for x in row["gammas"]),
                delta=float(row["delta"]),
                epsilon=float(row["epsilon"]),
                feasible=bool(row["feasible"]),
                n_opt=int(row["n_opt"]),
                n_valid=int(row["n_valid"]),
                seed=int(row["seed"]),
                corrected_risk=float(row["corrected_risk"]),
                valid_cardinality=float(row["valid_cardinality"]),
                slot_samples=tuple(
                    tuple(float(x) for x in s) for s in row["slot_samples"]
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"malformed calibration entry: {exc}") from exc
        entry.validate()
        return entry


class CalibrationTable:
    """Lookup of calibration entries keyed by (topology, alpha)."""

    def __init__(self, meta: dict | None = None) -> None:
        self.meta = dict(meta or {})
        self._entries: dict[tuple[str, float], CalibrationEntry] = {}

    def add(self, entry: CalibrationEntry) -> None:
        key = (entry.topology, entry.alpha)
        if key in self._entries:
            raise CalibrationError(f"duplicate calibration entry for {key}")
        self._entries[key] = entry

    def get(self, topology: str, alpha: float) -> CalibrationEntry:
        key = (str(topology), float(alpha))
        try:
            return self._entries[key]
        except KeyError:
            available = sorted(self._entries)
            raise CalibrationError(
                f"no calibration entry for {key}; available: {available}"
            ) from None

    @property
    def entries(self) -> list[CalibrationEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def __len__(self) -> int:
        return len(self._entries)

    def save(self, path: str | Path) -> None:
        payload = {
            "format": _TABLE_FORMAT,
            "meta": self.meta,
            "entries": [e.to_dict() for e in self.entries],
        }
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationTable":
        path = Path(path)
        try:
            with path.open("r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except FileNotFoundError as exc:
            raise CalibrationError(f"calibration table not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise CalibrationError(f"corrupt calibration table {path}: {exc}") from exc
        if payload.get("format") != _TABLE_FORMAT:
            raise CalibrationError(
                f"unsupported calibration table format: {payload.get('format')!r}"
            )
        table = cls(meta=payload.get("meta") or {})
        for row in payload.get("entries", []):
            table.add(CalibrationEntry.from_dict(row))
        return table


# -- the calibrator ------------------------------------------------------------


class Calibrator:
    """Collects scores once, then serves entries for any risk budget.

    Score collection and the per-strategy risk/cardinality curves depend
    only on the graph state and workload, so they are computed once and
    reused across ``alpha`` values.
    """

    def __init__(
        self,
        graph: KnowledgeGraph,
        scorer: ScoreFunction,
        gate: GateConfig,
        opt_instances: Sequence[QueryInstance],
        valid_instances: Sequence[QueryInstance],
        *,
        grid_size: int = 100,
        top_k: int = 10,
        strategies: Sequence[ScalarizationStrategy] | None = None,
        seed: int = 0,
    ) -> None:
        if not opt_instances or not valid_instances:
            raise CalibrationError("calibration needs non-empty opt and valid splits")
        if grid_size < 2:
            raise CalibrationError(f"grid_size must be >= 2, got {grid_size}")
        self.gate = gate
        self.seed = int(seed)
        self.opt = collect_scores(graph, scorer, gate, opt_instances, top_k)
        self.valid = collect_scores(graph, scorer, gate, valid_instances, top_k)
        if self.valid.topology is not self.opt.topology:
            raise CalibrationError("opt and valid splits have different topologies")
        self.topology = self.opt.topology
        self.k = self.opt.k
        self.quantiles = [
            EmpiricalQuantile(np.sort(s)) for s in self.opt.slot_samples
        ]
        self.grid = np.linspace(0.0, 1.0, int(grid_size))
        self.strategies = list(strategies) if strategies else default_strategies(self.k)
        self.n_opt = self.opt.n_queries
        self.n_valid = self.valid.n_queries
        self._curves: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for strategy in self.strategies:
            lam_mat = strategy.threshold_grid(self.grid, self.quantiles)
            loss_sum = np.zeros(self.grid.shape[0])
            card_sum = np.zeros(self.grid.shape[0])
            for rq in self.opt.queries:
                loss, card = rq.replay(lam_mat)
                loss_sum += loss
                card_sum += card
            risk = loss_sum / self.n_opt
            if np.any(np.diff(risk) < -1e-9):
                raise CalibrationError(
                    f"strategy {strategy.label}: risk curve decreased with eta; "
                    "nestedness is broken"
                )
            self._curves[strategy.label] = (lam_mat, risk, card_sum / self.n_opt)

    def estimates(self, strategy_label: str) -> list[RiskEstimate]:
        lam_mat, risk, card = self._curves[strategy_label]
        return [
            RiskEstimate(float(self.grid[i]), float(risk[i]), float(card[i]))
            for i in range(self.grid.shape[0])
        ]

    def _valid_cardinality(self, lambdas: np.ndarray) -> float:
        total = 0.0
        row = lambdas[None, :]
        for rq in self.valid.queries:
            _, card = rq.replay(row)
            total += float(card[0])
        return total / self.n_valid

    def entry(self, alpha: float) -> CalibrationEntry:
        """Calibrate one risk budget: select strategy and knob, build the entry."""
        if not 0.0 < alpha < 1.0:
            raise CalibrationError(f"alpha must be in (0, 1), got {alpha}")
        best: tuple[float, int] | None = None
        best_payload: tuple[ScalarizationStrategy, CrcSelection, np.ndarray, float] | None = None
        for order, strategy in enumerate(self.strategies):
            lam_mat, risk, _ = self._curves[strategy.label]
            selection = crc_select(self.estimates(strategy.label), alpha, self.n_opt)
            if not selection.feasible:
                continue
            lambdas = lam_mat[selection.index]
            valid_card = self._valid_cardinality(lambdas)
            key = (valid_card, order)
            if best is None or key < best:
                best = key
                best_payload = (strategy, selection, lambdas, valid_card)
        if best_payload is None:
            # No strategy meets the budget at any knob value: fall back to the
            # loosest thresholds (slot minima) and flag the entry infeasible.
            strategy = self.strategies[0]
            lambdas = strategy.thresholds(0.0, self.quantiles)
            _, risk, _ = self._curves[strategy.label]
            return self._build_entry(
                alpha,
                strategy,
                eta=0.0,
                lambdas=lambdas,
                feasible=False,
                corrected=float(corrected_risk(risk[0], self.n_opt)),
                valid_card=self._valid_cardinality(lambdas),
            )
        strategy, selection, lambdas, valid_card = best_payload
        return self._build_entry(
            alpha,
            strategy,
            eta=float(selection.eta),
            lambdas=lambdas,
            feasible=True,
            corrected=float(selection.corrected),
            valid_card=valid_card,
        )

    def _build_entry(
        self,
        alpha: float,
        strategy: ScalarizationStrategy,
        *,
        eta: float,
        lambdas: np.ndarray,
        feasible: bool,
        corrected: float,
        valid_card: float,
    ) -> CalibrationEntry:
        entry = CalibrationEntry(
            topology=self.topology.value,
            alpha=float(alpha),
            lambdas=tuple(float(x) for x in lambdas),
            eta=eta,
            strategy=strategy.label,
            gammas=strategy.gammas,
            delta=self.gate.delta,
            epsilon=self.gate.epsilon,
            feasible=feasible,
            n_opt=self.n_opt,
            n_valid=self.n_valid,
            seed=self.seed,
            corrected_risk=corrected,
            valid_cardinality=valid_card,
            slot_samples=tuple(tuple(float(x) for x in q.sample) for q in self.quantiles),
        )
        entry.validate()
        return entry


# -- workload-level evaluation helpers ------------------------------------------


def empirical_risk(
    ctx: EngineContext, instances: Sequence[QueryInstance], lambdas: Sequence[float]
) -> float:
    """Mean false-negative-rate loss of unrestricted execution."""
    if not instances:
        raise CalibrationError("empty instance list")
    total = 0.0
    for inst in instances:
        answers, _ = execute_query(ctx, inst.dag(), lambdas)
        total += fnr_loss(answers, inst.truth.final)
    return total / len(instances)


def mean_cardinality(
    ctx: EngineContext, instances: Sequence[QueryInstance], lambdas: Sequence[float]
) -> float:
    """Mean answer-set size of unrestricted execution."""
    if not instances:
        raise CalibrationError("empty instance list")
    total = 0.0
    for inst in instances:
        answers, _ = execute_query(ctx, inst.dag(), lambdas)
        total += len(answers)
    return total / len(instances)
