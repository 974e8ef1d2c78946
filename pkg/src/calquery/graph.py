"""Knowledge graph storage with complete and observed views.

A graph is a fixed set of triples over dense integer ids.  The
*complete* view always contains every triple; the *observed* view is
the subset left after simulated edge loss (``drop_edges``).  Both views
are served by forward/inverse adjacency indexes rebuilt on mutation.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphError, TripleParseError
from .seeding import derive_seed

EntityId = int
RelationId = int
Triple = tuple[int, int, int]

_SNAPSHOT_FORMAT = "calquery-graph-v1"
_TRIPLES_FILE = "triples.tsv"
_MANIFEST_FILE = "manifest.json"

# Probability that the synthetic generator reuses an existing endpoint
# (degree-proportional via history sampling) instead of a fresh uniform one.
_ATTACH_PROB = 0.6
_MAX_ATTEMPT_FACTOR = 20


class ViewKind(str, Enum):
    COMPLETE = "complete"
    OBSERVED = "observed"


def _build_indexes(
    triples: np.ndarray, mask: np.ndarray | None = None
) -> tuple[dict[tuple[int, int], np.ndarray], dict[tuple[int, int], np.ndarray]]:
    """Build (head, relation) -> tails and (tail, relation) -> heads maps."""
    fwd: dict[tuple[int, int], list[int]] = {}
    inv: dict[tuple[int, int], list[int]] = {}
    if mask is None:
        rows = triples
    else:
        rows = triples[mask]
    for h, r, t in rows.tolist():
        fwd.setdefault((h, r), []).append(t)
        inv.setdefault((t, r), []).append(h)
    fwd_arr = {k: np.array(sorted(v), dtype=np.int64) for k, v in fwd.items()}
    inv_arr = {k: np.array(sorted(v), dtype=np.int64) for k, v in inv.items()}
    return fwd_arr, inv_arr


@dataclass
class KnowledgeGraph:
    """Triple store with a complete view and a maskable observed view."""

    n_entities: int
    n_relations: int
    triples: np.ndarray
    observed: np.ndarray
    entity_labels: list[str] | None = None
    relation_labels: list[str] | None = None

    _fwd: dict[ViewKind, dict[tuple[int, int], np.ndarray]] = field(
        init=False, repr=False, default_factory=dict
    )
    _inv: dict[ViewKind, dict[tuple[int, int], np.ndarray]] = field(
        init=False, repr=False, default_factory=dict
    )
    _triple_sets: dict[ViewKind, set[Triple]] = field(
        init=False, repr=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        self.triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        self.observed = np.asarray(self.observed, dtype=bool).reshape(-1)
        if self.observed.shape[0] != self.triples.shape[0]:
            raise GraphError("observed mask length does not match triple count")
        self._validate_ids()
        self._check_duplicates()
        self._rebuild(ViewKind.COMPLETE)
        self._rebuild(ViewKind.OBSERVED)

    def _validate_ids(self) -> None:
        if self.triples.shape[0] == 0:
            return
        heads, rels, tails = self.triples[:, 0], self.triples[:, 1], self.triples[:, 2]
        if heads.min() < 0 or tails.min() < 0 or rels.min() < 0:
            raise GraphError("negative ids are not allowed")
        if max(heads.max(), tails.max()) >= self.n_entities:
            raise GraphError("entity id out of range")
        if rels.max() >= self.n_relations:
            raise GraphError("relation id out of range")

    def _check_duplicates(self) -> None:
        seen = {tuple(row) for row in self.triples.tolist()}
        if len(seen) != self.triples.shape[0]:
            raise GraphError("duplicate triples in graph")

    def _rebuild(self, kind: ViewKind) -> None:
        mask = None if kind is ViewKind.COMPLETE else self.observed
        fwd, inv = _build_indexes(self.triples, mask)
        self._fwd[kind] = fwd
        self._inv[kind] = inv
        rows = self.triples if mask is None else self.triples[mask]
        self._triple_sets[kind] = {tuple(row) for row in rows.tolist()}

    # -- accessors ---------------------------------------------------------

    @property
    def n_triples(self) -> int:
        return int(self.triples.shape[0])

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def view(self, kind: ViewKind | str) -> "GraphView":
        return GraphView(self, ViewKind(kind))

    def tails(self, head: int, relation: int, kind: ViewKind) -> np.ndarray:
        return self._fwd[kind].get((head, relation), _EMPTY_IDS)

    def heads(self, tail: int, relation: int, kind: ViewKind) -> np.ndarray:
        return self._inv[kind].get((tail, relation), _EMPTY_IDS)

    def has(self, head: int, relation: int, tail: int, kind: ViewKind) -> bool:
        return (head, relation, tail) in self._triple_sets[kind]

    # -- mutation ----------------------------------------------------------

    def drop_edges(self, fraction: float, seed: int) -> int:
        """Hide a seeded round-half-up fraction of triples from the observed view.

        Replaces any previous mask: the count is always taken against the
        complete triple list, never compounded with earlier drops.
        Returns the number of dropped triples.
        """
        if not 0.0 <= fraction < 1.0:
            raise GraphError(f"drop fraction must be in [0, 1), got {fraction}")
        n = self.n_triples
        count = int(np.floor(n * fraction + 0.5))
        rng = np.random.default_rng(seed)
        order = rng.permutation(n)
        mask = np.ones(n, dtype=bool)
        mask[order[:count]] = False
        self.observed = mask
        self._rebuild(ViewKind.OBSERVED)
        return count


_EMPTY_IDS = np.empty(0, dtype=np.int64)


@dataclass(frozen=True)
class GraphView:
    """Read-only facade over one view of a graph."""

    graph: KnowledgeGraph
    kind: ViewKind

    @property
    def n_entities(self) -> int:
        return self.graph.n_entities

    @property
    def n_relations(self) -> int:
        return self.graph.n_relations

    @property
    def n_triples(self) -> int:
        if self.kind is ViewKind.COMPLETE:
            return self.graph.n_triples
        return self.graph.n_observed

    def triples(self) -> np.ndarray:
        if self.kind is ViewKind.COMPLETE:
            return self.graph.triples
        return self.graph.triples[self.graph.observed]

    def tails(self, head: int, relation: int) -> np.ndarray:
        return self.graph.tails(head, relation, self.kind)

    def heads(self, tail: int, relation: int) -> np.ndarray:
        return self.graph.heads(tail, relation, self.kind)

    def has(self, head: int, relation: int, tail: int) -> bool:
        return self.graph.has(head, relation, tail, self.kind)

    def retrieve(self, sources: Iterable[int], relation: int) -> set[int]:
        """Union of tails reachable from ``sources`` via ``relation``."""
        out: set[int] = set()
        for src in sources:
            arr = self.graph.tails(int(src), relation, self.kind)
            if arr.size:
                out.update(arr.tolist())
        return out


# -- construction ------------------------------------------------------------


def generate_synthetic(
    n_entities: int, n_relations: int, n_triples: int, seed: int
) -> KnowledgeGraph:
    """Generate a synthetic graph by per-relation preferential attachment.

    Each relation receives an equal share of the triple budget.  Endpoints
    are drawn either uniformly or proportionally to their current degree
    within the relation (history sampling).  Duplicates are rejected, so
    the final count can fall slightly short of the budget when a relation
    saturates; the shortfall stays well inside a few percent at the
    intended densities.
    """
    if n_entities < 2 or n_relations < 1 or n_triples < 1:
        raise GraphError("graph dimensions must be positive (and >= 2 entities)")
    rows: list[Triple] = []
    base_quota, remainder = divmod(n_triples, n_relations)
    for rel in range(n_relations):
        quota = base_quota + (1 if rel < remainder else 0)
        rng = random.Random(derive_seed(seed, f"graph/relation/{rel}"))
        edges: set[tuple[int, int]] = set()
        heads_hist: list[int] = []
        tails_hist: list[int] = []
        attempts = 0
        max_attempts = _MAX_ATTEMPT_FACTOR * max(quota, 1)
        while len(edges) < quota and attempts < max_attempts:
            attempts += 1
            if heads_hist and rng.random() < _ATTACH_PROB:
                h = rng.choice(heads_hist)
            else:
                h = rng.randrange(n_entities)
            if tails_hist and rng.random() < _ATTACH_PROB:
                t = rng.choice(tails_hist)
            else:
                t = rng.randrange(n_entities)
            if h == t or (h, t) in edges:
                continue
            edges.add((h, t))
            heads_hist.append(h)
            tails_hist.append(t)
            rows.append((h, rel, t))
    triples = np.array(rows, dtype=np.int64)
    observed = np.ones(len(rows), dtype=bool)
    return KnowledgeGraph(n_entities, n_relations, triples, observed)


def load_triples(path: str | Path) -> KnowledgeGraph:
    """Load a tab-separated triple file, building vocabularies on the fly.

    Tokens may be arbitrary strings; ids are assigned in order of first
    occurrence (heads and tails share the entity vocabulary).  Duplicate
    triples are dropped silently.  Malformed lines raise
    :class:`TripleParseError` with a 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise TripleParseError(f"triple file not found: {path}")
    ent_ids: dict[str, int] = {}
    rel_ids: dict[str, int] = {}
    rows: list[Triple] = []
    seen: set[Triple] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n").rstrip("\r")
            if not stripped:
                continue
            parts = stripped.split("\t")
            if len(parts) != 3:
                raise TripleParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            h_tok, r_tok, t_tok = parts
            if not h_tok or not r_tok or not t_tok:
                raise TripleParseError(f"{path}:{lineno}: empty field")
            h = ent_ids.setdefault(h_tok, len(ent_ids))
            r = rel_ids.setdefault(r_tok, len(rel_ids))
            t = ent_ids.setdefault(t_tok, len(ent_ids))
            trip = (h, r, t)
            if trip in seen:
                continue
            seen.add(trip)
            rows.append(trip)
    if not rows:
        raise TripleParseError(f"{path}: no triples found")
    triples = np.array(rows, dtype=np.int64)
    graph = KnowledgeGraph(
        n_entities=len(ent_ids),
        n_relations=len(rel_ids),
        triples=triples,
        observed=np.ones(len(rows), dtype=bool),
        entity_labels=list(ent_ids),
        relation_labels=list(rel_ids),
    )
    return graph


def save_snapshot(graph: KnowledgeGraph, directory: str | Path) -> None:
    """Write ``triples.tsv`` (h, r, t, observed columns) and ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    obs = graph.observed.astype(np.int64)
    with (directory / _TRIPLES_FILE).open("w", encoding="utf-8") as fh:
        for (h, r, t), o in zip(graph.triples.tolist(), obs.tolist()):
            fh.write(f"{h}\t{r}\t{t}\t{o}\n")
    manifest = {
        "format": _SNAPSHOT_FORMAT,
        "n_entities": graph.n_entities,
        "n_relations": graph.n_relations,
        "n_triples": graph.n_triples,
        "n_observed": graph.n_observed,
        "entity_labels": graph.entity_labels,
        "relation_labels": graph.relation_labels,
    }
    with (directory / _MANIFEST_FILE).open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_snapshot(directory: str | Path) -> KnowledgeGraph:
    """Inverse of :func:`save_snapshot`; loss-free including the observed mask."""
    directory = Path(directory)
    manifest_path = directory / _MANIFEST_FILE
    try:
        with manifest_path.open("r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise GraphError(f"missing manifest: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise GraphError(f"corrupt manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != _SNAPSHOT_FORMAT:
        raise GraphError(f"unsupported snapshot format: {manifest.get('format')!r}")
    rows: list[Triple] = []
    flags: list[bool] = []
    tsv_path = directory / _TRIPLES_FILE
    with tsv_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split("\t")
            if len(parts) != 4:
                raise TripleParseError(
                    f"{tsv_path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
                )
            try:
                h, r, t, o = (int(p) for p in parts)
            except ValueError as exc:
                raise TripleParseError(f"{tsv_path}:{lineno}: non-integer token") from exc
            rows.append((h, r, t))
            flags.append(bool(o))
    triples = np.array(rows, dtype=np.int64).reshape(-1, 3)
    graph = KnowledgeGraph(
        n_entities=int(manifest["n_entities"]),
        n_relations=int(manifest["n_relations"]),
        triples=triples,
        observed=np.array(flags, dtype=bool),
        entity_labels=manifest.get("entity_labels"),
        relation_labels=manifest.get("relation_labels"),
    )
    if graph.n_triples != int(manifest["n_triples"]):
        raise GraphError("triple count does not match manifest")
    if graph.n_observed != int(manifest["n_observed"]):
        raise GraphError("observed count does not match manifest")
    return graph


def scan_retrieve(
    triples: Sequence[Triple] | np.ndarray, sources: Iterable[int], relation: int
) -> set[int]:
    """Brute-force reference for :meth:`GraphView.retrieve` (linear scan)."""
    src = {int(s) for s in sources}
    out: set[int] = set()
    arr = np.asarray(triples).reshape(-1, 3)
    for h, r, t in arr.tolist():
        if r == relation and h in src:
            out.add(t)
    return out
