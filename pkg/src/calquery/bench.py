"""Experiment orchestration, metrics rows, CSV emission, and reports.

The full sweep builds one synthetic graph, then for every incompleteness
fraction re-masks it, calibrates per topology, and executes the
calibrated engine plus all configured baselines on the held-out
evaluation split.  Every random choice flows from the master seed
through named sub-seeds, so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import (
    BaselineKind,
    BaselineSpec,
    calibrate_union_bound,
    collect_hop_scores,
    run_baseline,
)
from .calibration import CalibrationTable, Calibrator
from .config import ExperimentConfig
from .engine import (
    EngineContext,
    ExecutionTrace,
    GateConfig,
    Provenance,
    execute_query,
)
from .errors import BenchError
from .graph import KnowledgeGraph, generate_synthetic, load_triples
from .metrics import precision as precision_metric
from .metrics import recall as recall_metric
from .query import QueryInstance, generate_workload
from .scorer import FIDELITY_SHAPES, SyntheticScorer
from .seeding import derive_seed

CSV_COLUMNS = [
    "strategy",
    "topology",
    "incompleteness",
    "param",
    "query_id",
    "recall",
    "precision",
    "abstained",
    "cardinality",
    "neural_calls",
    "hybrid_hops",
    "total_hops",
]

AGGREGATE_ID = "ALL"
STRATEGY_CALIBRATED = "calibrated"


@dataclass(frozen=True)
class MetricsRecord:
    """Aggregate metrics for one (strategy, topology, incompleteness, param) cell."""

    strategy: str
    topology: str
    incompleteness: float
    param: float | None
    recall: float
    precision: float
    abstention_rate: float
    mean_neural_calls: float
    hybrid_hop_fraction: float
    mean_cardinality: float
    n_queries: int
    seed: int


class PartitionAuditor:
    """Counts unified-score evaluations and band violations."""

    def __init__(self, gate: GateConfig) -> None:
        self.gate = gate
        self.counts = {Provenance.RETRIEVED: 0, Provenance.INFERRED: 0}
        self.violations = {Provenance.RETRIEVED: 0, Provenance.INFERRED: 0}

    def __call__(self, values: np.ndarray, provenance: Provenance) -> None:
        v = np.asarray(values, dtype=np.float64)
        self.counts[provenance] += int(v.size)
        if provenance is Provenance.RETRIEVED:
            bad = np.count_nonzero((v < self.gate.delta) | (v > 1.0))
        else:
            bad = np.count_nonzero((v < 0.0) | (v > self.gate.delta - self.gate.epsilon))
        self.violations[provenance] += int(bad)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


# -- construction helpers ------------------------------------------------------


def build_graph(config: ExperimentConfig) -> KnowledgeGraph:
    if config.graph.triples_path:
        return load_triples(config.graph.triples_path)
    return generate_synthetic(
        config.graph.n_entities,
        config.graph.n_relations,
        config.graph.n_triples,
        derive_seed(config.seed, "graph"),
    )


def build_scorer(config: ExperimentConfig, graph: KnowledgeGraph) -> SyntheticScorer:
    seed = config.scorer.seed
    if seed is None:
        seed = derive_seed(config.seed, "scorer")
    if config.scorer.pos_shape is not None and config.scorer.neg_shape is not None:
        return SyntheticScorer(
            graph, seed, pos_shape=config.scorer.pos_shape, neg_shape=config.scorer.neg_shape
        )
    pos, neg = FIDELITY_SHAPES[config.scorer.fidelity]
    return SyntheticScorer(graph, seed, pos_shape=pos, neg_shape=neg)


def build_workloads(
    config: ExperimentConfig, graph: KnowledgeGraph
) -> dict[str, list[QueryInstance]]:
    out: dict[str, list[QueryInstance]] = {}
    for topology in config.topologies:
        out[topology] = generate_workload(
            graph,
            topology,
            config.splits.total,
            derive_seed(config.seed, f"workload/{topology}"),
            max_intermediate=config.calibration.max_intermediate,
        )
    return out


def split_instances(
    config: ExperimentConfig, instances: Sequence[QueryInstance]
) -> tuple[list[QueryInstance], list[QueryInstance], list[QueryInstance]]:
    n_opt, n_valid, n_eval = config.splits.opt, config.splits.valid, config.splits.eval
    if len(instances) < n_opt + n_valid + n_eval:
        raise BenchError(
            f"workload has {len(instances)} queries, need {n_opt + n_valid + n_eval}"
        )
    opt = list(instances[:n_opt])
    valid = list(instances[n_opt : n_opt + n_valid])
    eval_split = list(instances[n_opt + n_valid : n_opt + n_valid + n_eval])
    return opt, valid, eval_split


def single_fraction(config: ExperimentConfig) -> float:
    """The one incompleteness fraction this command operates at."""
    if len(config.incompleteness) != 1:
        raise BenchError(
            "this command needs a config with exactly one incompleteness "
            f"fraction, got {config.incompleteness}"
        )
    return config.incompleteness[0]


def apply_incompleteness(
    graph: KnowledgeGraph, config: ExperimentConfig, frac: float
) -> None:
    """Re-mask the graph at ``frac`` using the config-derived drop seed."""
    graph.drop_edges(frac, derive_seed(config.seed, f"drop/{frac!r}"))


def seed_header(config: ExperimentConfig) -> str:
    parts = [f"master={config.seed}", f"graph={derive_seed(config.seed, 'graph')}"]
    scorer_seed = config.scorer.seed
    if scorer_seed is None:
        scorer_seed = derive_seed(config.seed, "scorer")
    parts.append(f"scorer={scorer_seed}")
    for topology in config.topologies:
        parts.append(
            f"workload/{topology}={derive_seed(config.seed, f'workload/{topology}')}"
        )
    for frac in config.incompleteness:
        parts.append(f"drop/{frac!r}={derive_seed(config.seed, f'drop/{frac!r}')}")
    return "# seeds " + " ".join(parts)


# -- row construction ------------------------------------------------------------


def query_row(
    strategy: str,
    topology: str,
    incompleteness: float,
    param: float | None,
    instance: QueryInstance,
    answers: set[int],
    trace: ExecutionTrace,
) -> dict:
    truth = instance.truth.final
    return {
        "strategy": strategy,
        "topology": topology,
        "incompleteness": float(incompleteness),
        "param": None if param is None else float(param),
        "query_id": instance.query_id,
        "recall": recall_metric(answers, truth),
        "precision": precision_metric(answers, truth),
        "abstained": int(trace.abstained),
        "cardinality": len(answers),
        "neural_calls": trace.total_invocations,
        "hybrid_hops": trace.hybrid_hops,
        "total_hops": len(trace.slots),
    }


def aggregate_row(group: Sequence[dict]) -> dict:
    if not group:
        raise BenchError("cannot aggregate an empty row group")
    n = len(group)

    def mean(key: str) -> float:
        return sum(float(r[key]) for r in group) / n

    head = group[0]
    return {
        "strategy": head["strategy"],
        "topology": head["topology"],
        "incompleteness": head["incompleteness"],
        "param": head["param"],
        "query_id": AGGREGATE_ID,
        "recall": mean("recall"),
        "precision": mean("precision"),
        "abstained": mean("abstained"),
        "cardinality": mean("cardinality"),
        "neural_calls": mean("neural_calls"),
        "hybrid_hops": mean("hybrid_hops"),
        "total_hops": mean("total_hops"),
    }


def record_from_rows(group: Sequence[dict], seed: int) -> MetricsRecord:
    agg = aggregate_row(group)
    total_hops = sum(int(r["total_hops"]) for r in group)
    hybrid = sum(int(r["hybrid_hops"]) for r in group)
    return MetricsRecord(
        strategy=agg["strategy"],
        topology=agg["topology"],
        incompleteness=agg["incompleteness"],
        param=agg["param"],
        recall=agg["recall"],
        precision=agg["precision"],
        abstention_rate=agg["abstained"],
        mean_neural_calls=agg["neural_calls"],
        hybrid_hop_fraction=hybrid / total_hops if total_hops else 0.0,
        mean_cardinality=agg["cardinality"],
        n_queries=len(group),
        seed=seed,
    )


# -- CSV I/O ---------------------------------------------------------------------


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(rows: Sequence[dict], path: str | Path, header: str | None = None) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(header + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row[col]) for col in CSV_COLUMNS])


def read_results_csv(path: str | Path) -> list[dict]:
    path = Path(path)
    rows: list[dict] = []
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except FileNotFoundError as exc:
        raise BenchError(f"results file not found: {path}") from exc
    with fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise BenchError(f"{path}: empty results file") from None
    if header != CSV_COLUMNS:
        raise BenchError(f"{path}: unexpected CSV columns {header}")
    for cells in reader:
        if len(cells) != len(CSV_COLUMNS):
            raise BenchError(f"{path}: row with {len(cells)} cells")
        row = dict(zip(CSV_COLUMNS, cells))
        row["incompleteness"] = float(row["incompleteness"])
        row["param"] = None if row["param"] == "" else float(row["param"])
        for key in ("recall", "precision", "abstained", "cardinality", "neural_calls",
                    "hybrid_hops", "total_hops"):
            row[key] = float(row[key])
        rows.append(row)
    return rows


# -- experiment sweep ------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    tables: dict[float, CalibrationTable]
    traces: dict[tuple, list[tuple[str, ExecutionTrace]]] | None = None
    auditor: PartitionAuditor | None = None

    def per_query_rows(self) -> list[dict]:
        return [r for r in self.rows if r["query_id"] != AGGREGATE_ID]

    def aggregate_rows(self) -> list[dict]:
        return [r for r in self.rows if r["query_id"] == AGGREGATE_ID]


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    collect_traces: bool = False,
    audit: bool = False,
) -> ExperimentResult:
    """Run the full sweep described by ``config``.

    Writes ``results.csv``, one calibration table per incompleteness
    fraction, and ``report.txt`` when ``out_dir`` is given.
    """
    graph = build_graph(config)
    scorer = build_scorer(config, graph)
    gate = GateConfig(config.gate.delta, config.gate.epsilon)
    workloads = build_workloads(config, graph)
    auditor = PartitionAuditor(gate) if audit else None
    traces: dict[tuple, list[tuple[str, ExecutionTrace]]] | None = (
        {} if collect_traces else None
    )
    rows: list[dict] = []
    tables: dict[float, CalibrationTable] = {}

    def emit(
        strategy: str,
        topology: str,
        frac: float,
        param: float | None,
        executed: Iterable[tuple[QueryInstance, set[int], ExecutionTrace]],
    ) -> None:
        group = []
        trace_log = []
        for inst, answers, trace in executed:
            group.append(query_row(strategy, topology, frac, param, inst, answers, trace))
            trace_log.append((inst.query_id, trace))
        rows.extend(group)
        rows.append(aggregate_row(group))
        if traces is not None:
            traces[(strategy, topology, frac, param)] = trace_log

    for frac in config.incompleteness:
        apply_incompleteness(graph, config, frac)
        ctx = EngineContext(graph, scorer, gate, auditor=auditor)
        table = CalibrationTable(
            meta={
                "seed": config.seed,
                "incompleteness": frac,
                "n_entities": graph.n_entities,
                "n_relations": graph.n_relations,
                "n_triples": graph.n_triples,
                "n_observed": graph.n_observed,
                "scorer_fidelity": config.scorer.fidelity,
            }
        )
        for topology in config.topologies:
            opt_w, valid_w, eval_w = split_instances(config, workloads[topology])
            calibrator = Calibrator(
                graph,
                scorer,
                gate,
                opt_w,
                valid_w,
                grid_size=config.calibration.grid_size,
                top_k=config.scorer.top_k,
                seed=config.seed,
            )
            for alpha in config.alphas:
                entry = calibrator.entry(alpha)
                table.add(entry)
                emit(
                    STRATEGY_CALIBRATED,
                    topology,
                    frac,
                    alpha,
                    (
                        (inst, *execute_query(ctx, inst.dag(), entry.lambdas))
                        for inst in eval_w
                    ),
                )
            if config.baselines.include_union_bound:
                hop_scores = collect_hop_scores(graph, scorer, gate, opt_w + valid_w)
                for alpha in config.alphas:
                    ub = calibrate_union_bound(
                        hop_scores, alpha, config.calibration.grid_size
                    )
                    spec = BaselineSpec(BaselineKind.UNION_BOUND, alpha=alpha)
                    emit(
                        BaselineKind.UNION_BOUND.value,
                        topology,
                        frac,
                        alpha,
                        (
                            (inst, *run_baseline(spec, ctx, inst, ub.lambdas))
                            for inst in eval_w
                        ),
                    )
            if config.baselines.include_retrieval_only:
                spec = BaselineSpec(BaselineKind.RETRIEVAL_ONLY)
                emit(
                    BaselineKind.RETRIEVAL_ONLY.value,
                    topology,
                    frac,
                    None,
                    ((inst, *run_baseline(spec, ctx, inst)) for inst in eval_w),
                )
            for theta in config.baselines.static_neural_thetas:
                spec = BaselineSpec(BaselineKind.STATIC_NEURAL, theta=theta)
                emit(
                    BaselineKind.STATIC_NEURAL.value,
                    topology,
                    frac,
                    theta,
                    ((inst, *run_baseline(spec, ctx, inst)) for inst in eval_w),
                )
            for theta in config.baselines.static_hybrid_thetas:
                spec = BaselineSpec(BaselineKind.STATIC_HYBRID, theta=theta)
                emit(
                    BaselineKind.STATIC_HYBRID.value,
                    topology,
                    frac,
                    theta,
                    ((inst, *run_baseline(spec, ctx, inst)) for inst in eval_w),
                )
        tables[frac] = table

    result = ExperimentResult(config, rows, tables, traces, auditor)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_results_csv(rows, out_dir / "results.csv", header=seed_header(config))
        for frac, table in tables.items():
            table.save(out_dir / f"calibration_{frac!r}.json")
        (out_dir / "report.txt").write_text(compare_report(rows), encoding="utf-8")
    return result


# -- report ----------------------------------------------------------------------


def _render_table(title: str, headers: list[str], body: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in body:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [title, ""]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    if not body:
        lines.append("(no rows)")
    return "\n".join(lines)


def _fmt(x: float, nd: int = 4) -> str:
    return f"{x:.{nd}f}"


def compare_report(rows: Sequence[dict], recall_floor: float = 0.6) -> str:
    """Render comparison tables from result rows (per-query plus aggregates)."""
    per_query = [r for r in rows if r["query_id"] != AGGREGATE_ID]
    if not per_query:
        raise BenchError("no per-query rows to report on")

    def group_key(r: dict) -> tuple:
        return (r["strategy"], r["topology"], r["incompleteness"], r["param"])

    groups: dict[tuple, list[dict]] = {}
    for r in per_query:
        groups.setdefault(group_key(r), []).append(r)

    def sort_key(key: tuple) -> tuple:
        strategy, topology, frac, param = key
        return (strategy, topology, frac, -1.0 if param is None else param)

    # (a) validity: calibrated recall vs target with standard-error bands.
    validity_body = []
    for key in sorted(groups, key=sort_key):
        strategy, topology, frac, param = key
        if strategy != STRATEGY_CALIBRATED or param is None:
            continue
        recalls = [float(r["recall"]) for r in groups[key]]
        n = len(recalls)
        mean = sum(recalls) / n
        var = sum((x - mean) ** 2 for x in recalls) / (n - 1) if n > 1 else 0.0
        stderr = math.sqrt(var / n) if n > 0 else 0.0
        target = 1.0 - param
        validity_body.append(
            [
                topology,
                _fmt(frac, 2),
                _fmt(param, 2),
                _fmt(target, 2),
                _fmt(mean),
                _fmt(mean - target),
                _fmt(stderr),
                str(n),
            ]
        )
    validity = _render_table(
        "Validity: empirical recall vs target (calibrated engine)",
        ["topology", "incompl", "alpha", "target", "recall", "deviation", "stderr", "n"],
        validity_body,
    )

    # (b) precision at recall floor: best grid point per strategy.
    cells: dict[tuple, dict[str, tuple[float, float, float | None]]] = {}
    for key in sorted(groups, key=sort_key):
        strategy, topology, frac, param = key
        rows_g = groups[key]
        n = len(rows_g)
        mean_recall = sum(float(r["recall"]) for r in rows_g) / n
        mean_precision = sum(float(r["precision"]) for r in rows_g) / n
        if mean_recall < recall_floor:
            continue
        cell = cells.setdefault((topology, frac), {})
        current = cell.get(strategy)
        if current is None or mean_precision > current[0]:
            cell[strategy] = (mean_precision, mean_recall, param)
    floor_body = []
    strategies = sorted({k[0] for k in groups})
    for (topology, frac) in sorted(cells):
        for strategy in strategies:
            hit = cells[(topology, frac)].get(strategy)
            if hit is None:
                floor_body.append([topology, _fmt(frac, 2), strategy, "-", "-", "-"])
            else:
                prec, rec, param = hit
                floor_body.append(
                    [
                        topology,
                        _fmt(frac, 2),
                        strategy,
                        "-" if param is None else _fmt(param, 2),
                        _fmt(prec),
                        _fmt(rec),
                    ]
                )
    floor = _render_table(
        f"Best precision subject to recall >= {recall_floor} (per strategy grid)",
        ["topology", "incompl", "strategy", "param", "precision", "recall"],
        floor_body,
    )

    # (c) abstention by incompleteness.
    abst_body = []
    for key in sorted(groups, key=sort_key):
        strategy, topology, frac, param = key
        rows_g = groups[key]
        rate = sum(float(r["abstained"]) for r in rows_g) / len(rows_g)
        abst_body.append(
            [
                strategy,
                topology,
                _fmt(frac, 2),
                "-" if param is None else _fmt(param, 2),
                _fmt(rate),
            ]
        )
    abstention = _render_table(
        "Abstention rate by incompleteness",
        ["strategy", "topology", "incompl", "param", "abstention"],
        abst_body,
    )

    # (d) invocation fraction (calibrated engine).
    invoc_body = []
    for key in sorted(groups, key=sort_key):
        strategy, topology, frac, param = key
        if strategy != STRATEGY_CALIBRATED or param is None:
            continue
        rows_g = groups[key]
        hybrid = sum(int(r["hybrid_hops"]) for r in rows_g)
        total = sum(int(r["total_hops"]) for r in rows_g)
        calls = sum(float(r["neural_calls"]) for r in rows_g) / len(rows_g)
        invoc_body.append(
            [
                topology,
                _fmt(frac, 2),
                _fmt(param, 2),
                _fmt(1.0 - param, 2),
                _fmt(hybrid / total if total else 0.0),
                _fmt(calls, 1),
            ]
        )
    invocation = _render_table(
        "Hybrid-hop fraction and mean scorer calls (calibrated engine)",
        ["topology", "incompl", "alpha", "target", "hybrid_fraction", "mean_calls"],
        invoc_body,
    )

    return "\n\n".join([validity, floor, abstention, invocation]) + "\n"
