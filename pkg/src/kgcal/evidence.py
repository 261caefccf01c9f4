"""Constrained relational paths: grounding, shortest-path enumeration, and
constraint mining over an immutable knowledge graph.

A path is an ordered sequence of (relation, direction) hops starting at a
query entity, optionally conjoined with a single answer-side filter triple
(constraint_relation, constraint_entity). Grounding evaluates the pattern
against the graph and returns the surviving candidate set.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass

from .errors import PathExplosionError
from .kg import FORWARD, INVERSE, UNKNOWN_ID, KnowledgeGraph

DEFAULT_MAX_DEPTH = 4
DEFAULT_MAX_PATHS = 256

# Name-level rendering prefix for inverse hops. Never produced unless
# inverse traversal is explicitly enabled.
INVERSE_MARK = "~"


@dataclass(frozen=True)
class ConstrainedPath:
    """A relation sequence plus an optional (relation, entity) answer filter."""

    steps: tuple[tuple[int, str], ...] = ()
    constraint: tuple[int, int] | None = None

    def __len__(self) -> int:
        return len(self.steps)

    def with_constraint(self, relation: int, entity: int) -> "ConstrainedPath":
        return ConstrainedPath(self.steps, (relation, entity))

    def sort_key(self) -> tuple:
        return (self.steps, self.constraint or (-1, -1))


@dataclass(frozen=True)
class GroundingResult:
    """Candidate answers of a grounded path, with per-hop frontier sizes."""

    candidates: frozenset[int]
    frontier_sizes: tuple[int, ...]


def forward_path(*relations: int) -> ConstrainedPath:
    """Convenience constructor for an all-forward path."""
    return ConstrainedPath(tuple((r, FORWARD) for r in relations))


def ground(graph: KnowledgeGraph, query_entity: int, path: ConstrainedPath) -> GroundingResult:
    """Evaluate ``path`` from ``query_entity`` against the graph.

    The frontier starts at {query_entity} and each hop maps it through the
    neighbor index (union over frontier members). A constraint keeps only
    final candidates a with (a, constraint_relation, constraint_entity) in
    the triple set. A zero-length path grounds to the query entity itself.
    Unknown ids are permitted and simply produce empty frontiers.
    """
    frontier: set[int] = {query_entity} if query_entity != UNKNOWN_ID else set()
    sizes: list[int] = []
    for relation, direction in path.steps:
        nxt: set[int] = set()
        for entity in frontier:
            nxt |= graph.neighbors(entity, relation, direction)
        frontier = nxt
        sizes.append(len(frontier))
    if path.constraint is not None:
        c_rel, c_ent = path.constraint
        frontier = {e for e in frontier if c_ent in graph.neighbors(e, c_rel, FORWARD)}
    return GroundingResult(frozenset(frontier), tuple(sizes))


def _bfs_layers(
    graph: KnowledgeGraph, start: int, limit: int, allow_inverse: bool, reverse: bool
) -> dict[int, int]:
    """Hop distances from ``start`` up to ``limit``.

    ``reverse=True`` measures distance TO ``start`` (edges walked backwards),
    which is what the layered enumeration needs for pruning.
    """
    dist = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        d = dist[node]
        if d == limit:
            continue
        if not reverse:
            edges = [t for _, t in graph.out_edges.get(node, ())]
            if allow_inverse:
                edges += [h for _, h in graph.in_edges.get(node, ())]
        else:
            edges = [h for _, h in graph.in_edges.get(node, ())]
            if allow_inverse:
                edges += [t for _, t in graph.out_edges.get(node, ())]
        for nxt in edges:
            if nxt not in dist:
                dist[nxt] = d + 1
                queue.append(nxt)
    return dist


def enumerate_shortest_paths(
    graph: KnowledgeGraph,
    source: int,
    target: int,
    max_depth: int,
    allow_inverse: bool = False,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> list[ConstrainedPath]:
    """All minimal-length relation sequences from source to target.

    Edges have uniform cost, so minimality reduces to breadth-first
    layering. Returns [ConstrainedPath(())] when source == target and []
    when the target is unreachable within ``max_depth``. Output is ordered
    lexicographically by relation-id sequence. Raises PathExplosionError
    if more than ``max_paths`` distinct sequences exist.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if source == UNKNOWN_ID or target == UNKNOWN_ID:
        return []
    if source == target:
        return [ConstrainedPath(())]

    dist_from_source = _bfs_layers(graph, source, max_depth, allow_inverse, reverse=False)
    if target not in dist_from_source:
        return []
    length = dist_from_source[target]
    dist_to_target = _bfs_layers(graph, target, length, allow_inverse, reverse=True)

    # Walk the shortest-path DAG layer by layer, tracking for every relation
    # sequence prefix the set of entities it can currently sit at. Each
    # prefix in the map extends to at least one minimal path (nodes are
    # pruned by remaining distance), so the map size is a lower bound on the
    # final path count and the cap check cannot fire spuriously.
    frontiers: dict[tuple[tuple[int, str], ...], set[int]] = {(): {source}}
    for hop in range(length):
        remaining = length - hop - 1
        nxt: dict[tuple[tuple[int, str], ...], set[int]] = defaultdict(set)
        for prefix, nodes in frontiers.items():
            for node in nodes:
                for relation, tail in graph.out_edges.get(node, ()):
                    if dist_to_target.get(tail) == remaining:
                        nxt[prefix + ((relation, FORWARD),)].add(tail)
                if allow_inverse:
                    for relation, head in graph.in_edges.get(node, ()):
                        if dist_to_target.get(head) == remaining:
                            nxt[prefix + ((relation, INVERSE),)].add(head)
        if len(nxt) > max_paths:
            raise PathExplosionError(
                f"more than {max_paths} minimal paths between entities "
                f"{source} and {target} (length {length})"
            )
        frontiers = nxt

    return [ConstrainedPath(steps) for steps in sorted(frontiers)]


def mine_constraints(
    graph: KnowledgeGraph,
    base: ConstrainedPath,
    grounded: frozenset[int] | set[int],
    answers: frozenset[int] | set[int],
) -> list[tuple[int, int]]:
    """Candidate (relation, entity) filters from gold answers' outgoing triples.

    Candidates are drawn from the one-hop outgoing neighborhood of entities
    in ``grounded & answers``; a pair is kept only if applying it as a
    constraint leaves at least one gold answer in the constrained grounding.
    Deduplicated, sorted by (relation id, entity id).
    """
    if base.constraint is not None:
        raise ValueError("base path already carries a constraint")
    supported = set(grounded) & set(answers)
    if not supported:
        return []
    candidates: set[tuple[int, int]] = set()
    for answer in supported:
        candidates.update(graph.out_edges.get(answer, ()))
    kept = []
    for relation, entity in sorted(candidates):
        filtered = {
            e for e in grounded if entity in graph.neighbors(e, relation, FORWARD)
        }
        if filtered & answers:
            kept.append((relation, entity))
    return kept


def path_to_names(
    graph: KnowledgeGraph, path: ConstrainedPath
) -> tuple[tuple[str, ...], tuple[str, str] | None]:
    """Resolve a path's ids to names.

    Inverse hops are prefixed with INVERSE_MARK so the rendering stays
    invertible; forward-only paths (the default) render as plain names.
    """
    relations = tuple(
        graph.relation_name(rel) if direction == FORWARD else INVERSE_MARK + graph.relation_name(rel)
        for rel, direction in path.steps
    )
    constraint = None
    if path.constraint is not None:
        c_rel, c_ent = path.constraint
        constraint = (graph.relation_name(c_rel), graph.entity_name(c_ent))
    return relations, constraint


def path_from_names(
    graph: KnowledgeGraph,
    relations: tuple[str, ...] | list[str],
    constraint: tuple[str, str] | None = None,
) -> ConstrainedPath:
    """Inverse of path_to_names. Unknown names map to UNKNOWN_ID and the
    resulting path grounds to the empty set."""
    steps = []
    for name in relations:
        if name.startswith(INVERSE_MARK):
            steps.append((graph.relation_id(name[len(INVERSE_MARK):]), INVERSE))
        else:
            steps.append((graph.relation_id(name), FORWARD))
    parsed_constraint = None
    if constraint is not None:
        c_rel, c_ent = constraint
        parsed_constraint = (graph.relation_id(c_rel), graph.entity_id(c_ent))
    return ConstrainedPath(tuple(steps), parsed_constraint)
