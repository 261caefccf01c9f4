"""Knowledge-graph storage: interned triples with forward and inverse indexes.

The graph is immutable after loading, so any number of concurrent readers
are safe. All query operations work on integer ids; names are resolved only
at I/O boundaries.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import TripleParseError

FORWARD = "forward"
INVERSE = "inverse"

# Sentinel id returned for names that are not in the graph. Lookups with it
# yield empty sets rather than errors.
UNKNOWN_ID = -1

_EMPTY: frozenset[int] = frozenset()


@dataclass
class KnowledgeGraph:
    """An indexed set of (head, relation, tail) triples.

    Entity and relation names are opaque strings interned to dense integer
    ids. ``out_index``/``in_index`` are exact inverses of each other:
    (h, r, t) is a triple iff t is in out_index[h, r] iff h is in in_index[t, r].
    """

    entity_names: list[str] = field(default_factory=list)
    relation_names: list[str] = field(default_factory=list)
    triples: frozenset[tuple[int, int, int]] = frozenset()
    out_index: dict[tuple[int, int], frozenset[int]] = field(default_factory=dict)
    in_index: dict[tuple[int, int], frozenset[int]] = field(default_factory=dict)
    # Per-entity edge lists, sorted by (relation id, neighbor id); used by
    # path search and constraint mining.
    out_edges: dict[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)
    in_edges: dict[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)
    _entity_ids: dict[str, int] = field(default_factory=dict)
    _relation_ids: dict[str, int] = field(default_factory=dict)

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    @property
    def num_triples(self) -> int:
        return len(self.triples)

    def entity_id(self, name: str) -> int:
        """Return the id for an entity name, or UNKNOWN_ID if absent."""
        return self._entity_ids.get(name, UNKNOWN_ID)

    def relation_id(self, name: str) -> int:
        """Return the id for a relation name, or UNKNOWN_ID if absent."""
        return self._relation_ids.get(name, UNKNOWN_ID)

    def entity_name(self, entity: int) -> str:
        if entity < 0 or entity >= len(self.entity_names):
            raise ValueError(f"unknown entity id {entity}")
        return self.entity_names[entity]

    def relation_name(self, relation: int) -> str:
        if relation < 0 or relation >= len(self.relation_names):
            raise ValueError(f"unknown relation id {relation}")
        return self.relation_names[relation]

    def neighbors(self, entity: int, relation: int, direction: str = FORWARD) -> frozenset[int]:
        """Entities reachable from ``entity`` over ``relation``.

        Forward follows (entity, relation, ?) triples; inverse follows
        (?, relation, entity). Unknown ids yield the empty set.
        """
        index = self.out_index if direction == FORWARD else self.in_index
        return index.get((entity, relation), _EMPTY)

    def has_triple(self, head: int, relation: int, tail: int) -> bool:
        return (head, relation, tail) in self.triples

    def stats(self) -> dict[str, int]:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "triples": self.num_triples,
        }


def load_kg(lines: Iterable[str]) -> KnowledgeGraph:
    """Build an indexed graph from ``head<TAB>relation<TAB>tail`` lines.

    Empty (or whitespace-only) lines are skipped; duplicate triples are
    deduplicated. A line with the wrong field count raises TripleParseError
    carrying its 1-based line number.
    """
    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}
    entity_names: list[str] = []
    relation_names: list[str] = []
    triples: set[tuple[int, int, int]] = set()

    def intern(name: str, ids: dict[str, int], names: list[str]) -> int:
        ident = ids.get(name)
        if ident is None:
            ident = len(names)
            ids[name] = ident
            names.append(name)
        return ident

    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TripleParseError(line_no, line)
        head, relation, tail = fields
        triples.add(
            (
                intern(head, entity_ids, entity_names),
                intern(relation, relation_ids, relation_names),
                intern(tail, entity_ids, entity_names),
            )
        )

    out_sets: dict[tuple[int, int], set[int]] = defaultdict(set)
    in_sets: dict[tuple[int, int], set[int]] = defaultdict(set)
    out_adj: dict[int, set[tuple[int, int]]] = defaultdict(set)
    in_adj: dict[int, set[tuple[int, int]]] = defaultdict(set)
    for head, relation, tail in triples:
        out_sets[(head, relation)].add(tail)
        in_sets[(tail, relation)].add(head)
        out_adj[head].add((relation, tail))
        in_adj[tail].add((relation, head))

    return KnowledgeGraph(
        entity_names=entity_names,
        relation_names=relation_names,
        triples=frozenset(triples),
        out_index={k: frozenset(v) for k, v in out_sets.items()},
        in_index={k: frozenset(v) for k, v in in_sets.items()},
        out_edges={k: tuple(sorted(v)) for k, v in out_adj.items()},
        in_edges={k: tuple(sorted(v)) for k, v in in_adj.items()},
        _entity_ids=entity_ids,
        _relation_ids=relation_ids,
    )


def dump_kg(graph: KnowledgeGraph) -> Iterator[str]:
    """Yield the graph back as triple lines, sorted by names for stable diffs."""
    rows = sorted(
        (graph.entity_name(h), graph.relation_name(r), graph.entity_name(t))
        for h, r, t in graph.triples
    )
    for head, relation, tail in rows:
        yield f"{head}\t{relation}\t{tail}"
