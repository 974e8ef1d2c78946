"""Command-line interface.

Every subcommand is a thin client over the library: it loads a config,
builds or loads artifacts, calls the same functions the test suite
uses, and writes files. Errors surface as a one-line diagnostic on
stderr with a non-zero exit status; unknown commands or flags exit
with status 2 via the argument parser.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .baselines import (
    BaselineKind,
    BaselineSpec,
    calibrate_union_bound,
    collect_hop_scores,
    run_baseline,
)
from .bench import (
    aggregate_row,
    apply_incompleteness,
    build_graph,
    build_scorer,
    build_workloads,
    compare_report,
    query_row,
    read_results_csv,
    run_experiment,
    seed_header,
    single_fraction,
    split_instances,
    write_results_csv,
    STRATEGY_CALIBRATED,
)
from .calibration import CalibrationTable, Calibrator
from .config import ExperimentConfig, load_config
from .engine import EngineContext, GateConfig, execute_query
from .errors import CalqueryError
from .graph import KnowledgeGraph, load_snapshot, save_snapshot
from .query import Topology, generate_workload, load_workload, save_workload
from .seeding import derive_seed


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = load_config(args.config)
    else:
        config = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = config.model_copy(update={"seed": args.seed})
    return config


def _graph_from_args(args: argparse.Namespace, config: ExperimentConfig) -> KnowledgeGraph:
    if getattr(args, "graph", None):
        return load_snapshot(args.graph)
    return build_graph(config)


def _add_common(parser: argparse.ArgumentParser, out_help: str, out_required: bool = True) -> None:
    parser.add_argument("--config", help="experiment config JSON (defaults apply if omitted)")
    parser.add_argument("--seed", type=int, help="override the config master seed")
    parser.add_argument("--out", required=out_required, help=out_help)


def cmd_gen_graph(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    graph = build_graph(config)
    save_snapshot(graph, args.out)
    print(
        f"wrote graph snapshot: {graph.n_entities} entities, "
        f"{graph.n_relations} relations, {graph.n_triples} triples -> {args.out}"
    )
    return 0


def cmd_gen_workload(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    graph = _graph_from_args(args, config)
    topologies = [args.topology] if args.topology else list(config.topologies)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for topology in topologies:
        Topology(topology)
        instances = generate_workload(
            graph,
            topology,
            config.splits.total,
            derive_seed(config.seed, f"workload/{topology}"),
            max_intermediate=config.calibration.max_intermediate,
        )
        path = out_dir / f"workload_{topology}.jsonl"
        save_workload(instances, path)
        print(f"wrote {len(instances)} {topology} queries -> {path}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    frac = single_fraction(config)
    graph = _graph_from_args(args, config)
    apply_incompleteness(graph, config, frac)
    scorer = build_scorer(config, graph)
    gate = GateConfig(config.gate.delta, config.gate.epsilon)
    workloads = build_workloads(config, graph)
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
        opt_w, valid_w, _ = split_instances(config, workloads[topology])
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
            table.add(calibrator.entry(alpha))
    table.save(args.out)
    feasible = sum(1 for e in table.entries if e.feasible)
    print(f"wrote {len(table.entries)} calibration entries ({feasible} feasible) -> {args.out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    frac = single_fraction(config)
    graph = _graph_from_args(args, config)
    apply_incompleteness(graph, config, frac)
    scorer = build_scorer(config, graph)
    ctx = EngineContext(graph, scorer, GateConfig(config.gate.delta, config.gate.epsilon))
    table = CalibrationTable.load(args.table)
    instances = load_workload(args.workload)
    by_topology: dict[str, list] = {}
    for inst in instances:
        by_topology.setdefault(inst.topology, []).append(inst)
    rows: list[dict] = []
    for entry in table.entries:
        batch = by_topology.get(entry.topology)
        if not batch:
            continue
        group = []
        for inst in batch:
            answers, trace = execute_query(ctx, inst.dag(), entry.lambdas)
            group.append(
                query_row(
                    STRATEGY_CALIBRATED, entry.topology, frac, entry.alpha,
                    inst, answers, trace,
                )
            )
        rows.extend(group)
        rows.append(aggregate_row(group))
    if not rows:
        raise CalqueryError(
            "no calibration entry matches any workload topology "
            f"(table: {sorted({e.topology for e in table.entries})}, "
            f"workload: {sorted(by_topology)})"
        )
    write_results_csv(rows, args.out, header=seed_header(config))
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    frac = single_fraction(config)
    graph = _graph_from_args(args, config)
    apply_incompleteness(graph, config, frac)
    scorer = build_scorer(config, graph)
    gate = GateConfig(config.gate.delta, config.gate.epsilon)
    ctx = EngineContext(graph, scorer, gate)
    workloads = build_workloads(config, graph)
    eval_override = load_workload(args.workload) if args.workload else None
    rows: list[dict] = []

    def emit(strategy: str, topology: str, param, spec, eval_w, lambdas=None) -> None:
        group = []
        for inst in eval_w:
            answers, trace = run_baseline(spec, ctx, inst, lambdas)
            group.append(query_row(strategy, topology, frac, param, inst, answers, trace))
        rows.extend(group)
        rows.append(aggregate_row(group))

    for topology in config.topologies:
        opt_w, valid_w, eval_w = split_instances(config, workloads[topology])
        if eval_override is not None:
            eval_w = [i for i in eval_override if i.topology == topology]
            if not eval_w:
                continue
        if config.baselines.include_union_bound:
            hop_scores = collect_hop_scores(graph, scorer, gate, opt_w + valid_w)
            for alpha in config.alphas:
                ub = calibrate_union_bound(hop_scores, alpha, config.calibration.grid_size)
                spec = BaselineSpec(BaselineKind.UNION_BOUND, alpha=alpha)
                emit(BaselineKind.UNION_BOUND.value, topology, alpha, spec, eval_w, ub.lambdas)
        if config.baselines.include_retrieval_only:
            spec = BaselineSpec(BaselineKind.RETRIEVAL_ONLY)
            emit(BaselineKind.RETRIEVAL_ONLY.value, topology, None, spec, eval_w)
        for theta in config.baselines.static_neural_thetas:
            spec = BaselineSpec(BaselineKind.STATIC_NEURAL, theta=theta)
            emit(BaselineKind.STATIC_NEURAL.value, topology, theta, spec, eval_w)
        for theta in config.baselines.static_hybrid_thetas:
            spec = BaselineSpec(BaselineKind.STATIC_HYBRID, theta=theta)
            emit(BaselineKind.STATIC_HYBRID.value, topology, theta, spec, eval_w)
    if not rows:
        raise CalqueryError("no baseline rows produced (empty workload or topology mismatch)")
    write_results_csv(rows, args.out, header=seed_header(config))
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    rows = read_results_csv(args.infile)
    text = compare_report(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote report -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    result = run_experiment(config, out_dir=args.out, audit=args.audit)
    n_eval = len(result.per_query_rows())
    print(f"wrote {n_eval} per-query rows plus aggregates -> {args.out}")
    if result.auditor is not None:
        print(
            f"audited {result.auditor.total} unified scores, "
            f"{result.auditor.total_violations} band violations"
        )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    config = _config_from_args(args)
    graph = load_snapshot(args.graph)
    if len(config.incompleteness) == 1:
        apply_incompleteness(graph, config, config.incompleteness[0])
    scorer = build_scorer(config, graph)
    ctx = EngineContext(graph, scorer, GateConfig(config.gate.delta, config.gate.epsilon))
    table = CalibrationTable.load(args.table)
    app = create_app(ctx, table)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calquery",
        description="Risk-calibrated query answering over incomplete knowledge graphs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-graph", help="generate a synthetic graph snapshot")
    _add_common(p, "output directory for the snapshot")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("gen-workload", help="generate query workloads")
    _add_common(p, "output directory for workload JSONL files")
    p.add_argument("--graph", help="load a graph snapshot instead of regenerating")
    p.add_argument("--topology", help="restrict to one topology (default: all in config)")
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("calibrate", help="calibrate thresholds and write a table")
    _add_common(p, "output calibration table JSON path")
    p.add_argument("--graph", help="load a graph snapshot instead of regenerating")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="execute a workload with a calibration table")
    _add_common(p, "output results CSV path")
    p.add_argument("--table", required=True, help="calibration table JSON")
    p.add_argument("--workload", required=True, help="workload JSONL file")
    p.add_argument("--graph", help="load a graph snapshot instead of regenerating")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="run baseline strategies")
    _add_common(p, "output results CSV path")
    p.add_argument("--graph", help="load a graph snapshot instead of regenerating")
    p.add_argument("--workload", help="evaluate on this workload JSONL instead of the eval split")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="render comparison tables from a results CSV")
    p.add_argument("--in", dest="infile", required=True, help="results CSV path")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="run the full experiment sweep")
    _add_common(p, "output directory for CSV, tables, and report")
    p.add_argument("--audit", action="store_true", help="audit unified-score bands while running")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="serve the query engine over HTTP")
    p.add_argument("--config", help="experiment config JSON (defaults apply if omitted)")
    p.add_argument("--seed", type=int, help="override the config master seed")
    p.add_argument("--graph", required=True, help="graph snapshot directory")
    p.add_argument("--table", required=True, help="calibration table JSON")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CalqueryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
