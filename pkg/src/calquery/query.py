"""Query DAGs, ground truth, and workload generation.

Queries are existential-positive multi-hop patterns over the graph:
anchors feed relation projections, whose outputs may be combined by
intersection or union.  A DAG is stored as a node list in topological
order (children precede parents); the last node is the sink.  Each
projection owns a gate slot, numbered in node-list order, which is the
unit the calibrator assigns thresholds to.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import QueryStructureError, WorkloadError
from .graph import GraphView, KnowledgeGraph, ViewKind

_WORKLOAD_FORMAT = "calquery-workload-v1"


class Topology(str, Enum):
    """Supported query shapes."""

    ONE_P = "1p"
    THREE_P = "3p"
    TWO_U = "2u"
    TWO_IP = "2ip"


# (number of anchors, number of relations/projections) per topology.
TOPOLOGY_ARITY: dict[Topology, tuple[int, int]] = {
    Topology.ONE_P: (1, 1),
    Topology.THREE_P: (1, 3),
    Topology.TWO_U: (2, 2),
    Topology.TWO_IP: (2, 3),
}


class NodeKind(str, Enum):
    ANCHOR = "anchor"
    PROJECTION = "projection"
    INTERSECTION = "intersection"
    UNION = "union"


@dataclass(frozen=True)
class QueryNode:
    kind: NodeKind
    entity: int | None = None
    relation: int | None = None
    gate_slot: int | None = None
    children: tuple[int, ...] = ()


@dataclass(frozen=True)
class QueryDag:
    """Node list in topological order; the last node is the sink."""

    nodes: tuple[QueryNode, ...]

    def __post_init__(self) -> None:
        if not self.nodes:
            raise QueryStructureError("empty query DAG")
        referenced: set[int] = set()
        slots: list[int] = []
        for idx, node in enumerate(self.nodes):
            for child in node.children:
                if not 0 <= child < idx:
                    raise QueryStructureError(
                        f"node {idx}: child {child} must precede it in the node list"
                    )
                referenced.add(child)
            if node.kind is NodeKind.ANCHOR:
                if node.children or node.entity is None:
                    raise QueryStructureError(f"node {idx}: anchor needs an entity and no children")
            elif node.kind is NodeKind.PROJECTION:
                if len(node.children) != 1 or node.relation is None or node.gate_slot is None:
                    raise QueryStructureError(
                        f"node {idx}: projection needs one child, a relation, and a gate slot"
                    )
                slots.append(node.gate_slot)
            else:
                if len(node.children) < 2:
                    raise QueryStructureError(f"node {idx}: set operator needs >= 2 children")
        if slots != list(range(len(slots))):
            raise QueryStructureError(
                f"gate slots must be 0..k-1 in node order, got {slots}"
            )
        dangling = set(range(len(self.nodes) - 1)) - referenced
        if dangling:
            raise QueryStructureError(f"nodes {sorted(dangling)} are not reachable from the sink")

    @property
    def k(self) -> int:
        """Number of projections (gate slots)."""
        return sum(1 for n in self.nodes if n.kind is NodeKind.PROJECTION)

    @property
    def anchors(self) -> tuple[int, ...]:
        return tuple(n.entity for n in self.nodes if n.kind is NodeKind.ANCHOR)

    @property
    def relations(self) -> tuple[int, ...]:
        return tuple(n.relation for n in self.nodes if n.kind is NodeKind.PROJECTION)


def instantiate(topology: Topology | str, anchors: Sequence[int], relations: Sequence[int]) -> QueryDag:
    """Build the DAG for one of the fixed topologies."""
    topology = Topology(topology)
    n_anchor, n_rel = TOPOLOGY_ARITY[topology]
    if len(anchors) != n_anchor:
        raise QueryStructureError(
            f"{topology.value} needs {n_anchor} anchors, got {len(anchors)}"
        )
    if len(relations) != n_rel:
        raise QueryStructureError(
            f"{topology.value} needs {n_rel} relations, got {len(relations)}"
        )
    a = [int(x) for x in anchors]
    r = [int(x) for x in relations]
    A, P, I, U = NodeKind.ANCHOR, NodeKind.PROJECTION, NodeKind.INTERSECTION, NodeKind.UNION
    if topology is Topology.ONE_P:
        nodes = (
            QueryNode(A, entity=a[0]),
            QueryNode(P, relation=r[0], gate_slot=0, children=(0,)),
        )
    elif topology is Topology.THREE_P:
        nodes = (
            QueryNode(A, entity=a[0]),
            QueryNode(P, relation=r[0], gate_slot=0, children=(0,)),
            QueryNode(P, relation=r[1], gate_slot=1, children=(1,)),
            QueryNode(P, relation=r[2], gate_slot=2, children=(2,)),
        )
    elif topology is Topology.TWO_U:
        nodes = (
            QueryNode(A, entity=a[0]),
            QueryNode(P, relation=r[0], gate_slot=0, children=(0,)),
            QueryNode(A, entity=a[1]),
            QueryNode(P, relation=r[1], gate_slot=1, children=(2,)),
            QueryNode(U, children=(1, 3)),
        )
    else:
        nodes = (
            QueryNode(A, entity=a[0]),
            QueryNode(P, relation=r[0], gate_slot=0, children=(0,)),
            QueryNode(A, entity=a[1]),
            QueryNode(P, relation=r[1], gate_slot=1, children=(2,)),
            QueryNode(I, children=(1, 3)),
            QueryNode(P, relation=r[2], gate_slot=2, children=(4,)),
        )
    return QueryDag(nodes)


def evaluate(
    dag: QueryDag, project: Callable[[int, frozenset[int], int], set[int]]
) -> tuple[set[int], list[set[int]]]:
    """Walk the DAG with a pluggable projection operator.

    ``project(slot, sources, relation)`` computes one hop.  Returns the
    sink output and the per-slot projection outputs.  Ground truth,
    gated execution, and every baseline run through this single walker
    so their query semantics cannot drift apart.
    """
    outputs: list[set[int]] = []
    per_slot: list[set[int]] = []
    for node in dag.nodes:
        if node.kind is NodeKind.ANCHOR:
            outputs.append({node.entity})
        elif node.kind is NodeKind.PROJECTION:
            sources = outputs[node.children[0]]
            result = project(node.gate_slot, frozenset(sources), node.relation)
            outputs.append(result)
            per_slot.append(result)
        elif node.kind is NodeKind.INTERSECTION:
            acc = set(outputs[node.children[0]])
            for child in node.children[1:]:
                acc &= outputs[child]
            outputs.append(acc)
        else:
            acc = set()
            for child in node.children:
                acc |= outputs[child]
            outputs.append(acc)
    return outputs[-1], per_slot


@dataclass(frozen=True)
class GroundTruth:
    """Exact per-slot and final answer sets over the complete view."""

    per_slot: tuple[frozenset[int], ...]
    final: frozenset[int]


def ground_truth(dag: QueryDag, view: GraphView) -> GroundTruth:
    """Exact evaluation by traversal of ``view`` (normally the complete view)."""

    def project(slot: int, sources: frozenset[int], relation: int) -> set[int]:
        return view.retrieve(sources, relation)

    final, per_slot = evaluate(dag, project)
    return GroundTruth(tuple(frozenset(s) for s in per_slot), frozenset(final))


@dataclass(frozen=True)
class QueryInstance:
    query_id: str
    topology: Topology
    anchors: tuple[int, ...]
    relations: tuple[int, ...]
    truth: GroundTruth

    def dag(self) -> QueryDag:
        return instantiate(self.topology, self.anchors, self.relations)


def generate_workload(
    graph: KnowledgeGraph,
    topology: Topology | str,
    n_queries: int,
    seed: int,
    max_intermediate: int = 50,
) -> list[QueryInstance]:
    """Sample query instances by seeded random walks over the complete view.

    Anchor edges are drawn uniformly from the triple list and extended by
    relation-constrained walks, so every projection slot has a witness and
    therefore non-empty ground truth.  Instances whose projection outputs
    exceed ``max_intermediate`` are rejected and redrawn.  Duplicates are
    allowed (sampling with replacement keeps the splits exchangeable).
    """
    topology = Topology(topology)
    if n_queries < 1:
        raise WorkloadError(f"n_queries must be positive, got {n_queries}")
    if max_intermediate < 1:
        raise WorkloadError(f"max_intermediate must be positive, got {max_intermediate}")
    view = graph.view(ViewKind.COMPLETE)
    triples = graph.triples
    n_triples = triples.shape[0]
    if n_triples == 0:
        raise WorkloadError("cannot sample queries from an empty graph")
    rng = random.Random(seed)
    out: list[QueryInstance] = []
    attempts = 0
    max_attempts = 200 * n_queries
    while len(out) < n_queries and attempts < max_attempts:
        attempts += 1
        drawn = _draw(rng, graph, view, topology, triples, n_triples)
        if drawn is None:
            continue
        anchors, relations = drawn
        dag = instantiate(topology, anchors, relations)
        truth = ground_truth(dag, view)
        if any(len(s) == 0 or len(s) > max_intermediate for s in truth.per_slot):
            continue
        if len(truth.final) == 0:
            continue
        qid = f"{topology.value}-s{seed}-q{len(out):05d}"
        out.append(QueryInstance(qid, topology, tuple(anchors), tuple(relations), truth))
    if len(out) < n_queries:
        raise WorkloadError(
            f"could only sample {len(out)}/{n_queries} {topology.value} queries "
            f"after {attempts} attempts; graph too sparse or cap too tight"
        )
    return out


def _draw(
    rng: random.Random,
    graph: KnowledgeGraph,
    view: GraphView,
    topology: Topology,
    triples,
    n_triples: int,
) -> tuple[list[int], list[int]] | None:
    def random_edge() -> tuple[int, int, int]:
        h, r, t = triples[rng.randrange(n_triples)].tolist()
        return h, r, t

    def step(entity: int) -> tuple[int, int] | None:
        # Uniform outgoing edge of `entity` across all relations.
        options: list[tuple[int, int]] = []
        for rel in range(graph.n_relations):
            for tail in view.tails(entity, rel).tolist():
                options.append((rel, tail))
        if not options:
            return None
        return options[rng.randrange(len(options))]

    if topology is Topology.ONE_P:
        h, r, _ = random_edge()
        return [h], [r]
    if topology is Topology.THREE_P:
        h, r1, t1 = random_edge()
        nxt = step(t1)
        if nxt is None:
            return None
        r2, t2 = nxt
        nxt = step(t2)
        if nxt is None:
            return None
        r3, _ = nxt
        return [h], [r1, r2, r3]
    if topology is Topology.TWO_U:
        h1, r1, _ = random_edge()
        h2, r2, _ = random_edge()
        return [h1, h2], [r1, r2]
    # TWO_IP: pick a middle entity with two distinct incoming branches and
    # at least one outgoing edge for the final hop.
    _, r1, mid = random_edge()
    heads1 = view.heads(mid, r1)
    h1 = int(heads1[rng.randrange(heads1.shape[0])])
    in_pairs: list[tuple[int, int]] = []
    for rel in range(graph.n_relations):
        for head in view.heads(mid, rel).tolist():
            if (head, rel) != (h1, r1):
                in_pairs.append((head, rel))
    if not in_pairs:
        return None
    h2, r2 = in_pairs[rng.randrange(len(in_pairs))]
    nxt = step(mid)
    if nxt is None:
        return None
    r3, _ = nxt
    return [h1, h2], [r1, r2, r3]


# -- serialization ------------------------------------------------------------


def save_workload(instances: Sequence[QueryInstance], path: str | Path) -> None:
    """Write instances as JSON lines with sorted ground-truth arrays."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inst in instances:
            row = {
                "query_id": inst.query_id,
                "topology": inst.topology.value,
                "anchors": list(inst.anchors),
                "relations": list(inst.relations),
                "gt_slots": [sorted(s) for s in inst.truth.per_slot],
                "gt_final": sorted(inst.truth.final),
            }
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def load_workload(path: str | Path) -> list[QueryInstance]:
    """Inverse of :func:`save_workload`; validates structure per line."""
    path = Path(path)
    if not path.exists():
        raise WorkloadError(f"workload file not found: {path}")
    out: list[QueryInstance] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                row = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise WorkloadError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                topology = Topology(row["topology"])
                anchors = tuple(int(x) for x in row["anchors"])
                relations = tuple(int(x) for x in row["relations"])
                truth = GroundTruth(
                    tuple(frozenset(int(x) for x in s) for s in row["gt_slots"]),
                    frozenset(int(x) for x in row["gt_final"]),
                )
                qid = str(row["query_id"])
            except (KeyError, ValueError, TypeError) as exc:
                raise WorkloadError(f"{path}:{lineno}: malformed workload row: {exc}") from exc
            n_anchor, n_rel = TOPOLOGY_ARITY[topology]
            if len(anchors) != n_anchor or len(relations) != n_rel:
                raise WorkloadError(
                    f"{path}:{lineno}: arity mismatch for topology {topology.value}"
                )
            if len(truth.per_slot) != n_rel:
                raise WorkloadError(
                    f"{path}:{lineno}: expected {n_rel} ground-truth slots, "
                    f"got {len(truth.per_slot)}"
                )
            out.append(QueryInstance(qid, topology, anchors, relations, truth))
    if not out:
        raise WorkloadError(f"{path}: empty workload")
    return out
