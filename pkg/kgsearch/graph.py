"""Immutable in-memory knowledge graph with an undirected incidence index."""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import aiofiles

from .const import COMMENT_PREFIX, PLACEHOLDER_TYPE, TSV_SEPARATOR, TYPE_SEPARATOR
from .errors import ContractViolation, GraphLoadError, GraphParseError

_LOGGER = logging.getLogger(__name__)


class Direction(Enum):
    """Which end of an edge an entity sits on."""

    OUT = "out"  # entity is the edge source
    IN = "in"  # entity is the edge target
    BOTH = "both"  # self-loop


@dataclass(frozen=True)
class Entity:
    """A named, typed node."""

    id: int
    name: str
    types: FrozenSet[str]


@dataclass(frozen=True)
class Edge:
    """A predicate-labeled directed edge."""

    index: int
    src: int
    dst: int
    predicate: int

    def other(self, u: int) -> int:
        """Return the endpoint opposite to u."""
        return self.dst if self.src == u else self.src


class KnowledgeGraph:
    """Knowledge graph G=(V,E,L) with dense entity and predicate ids.

    Instances are never mutated after construction, so search workers may read
    them concurrently without locking.
    """

    def __init__(
        self,
        entities: Sequence[Entity],
        predicates: Sequence[str],
        edges: Sequence[Edge],
    ) -> None:
        if not entities:
            raise ContractViolation("A knowledge graph needs at least one entity")
        self.entities: Tuple[Entity, ...] = tuple(entities)
        self.predicates: Tuple[str, ...] = tuple(predicates)
        self.edges: Tuple[Edge, ...] = tuple(edges)

        incidence: List[List[Tuple[int, Direction]]] = [[] for _ in self.entities]
        for edge in self.edges:
            if edge.src == edge.dst:
                incidence[edge.src].append((edge.index, Direction.BOTH))
            else:
                incidence[edge.src].append((edge.index, Direction.OUT))
                incidence[edge.dst].append((edge.index, Direction.IN))
        self.incidence: Tuple[Tuple[Tuple[int, Direction], ...], ...] = tuple(
            tuple(sorted(entry, key=lambda item: item[0])) for entry in incidence
        )
        # Neighbor lists are precomputed; expansion is the search hot path
        self._neighbors: Tuple[Tuple[Tuple[Edge, int], ...], ...] = tuple(
            tuple((self.edges[i], self.edges[i].other(u)) for i, _ in entry)
            for u, entry in enumerate(self.incidence)
        )

        self.name_index: Mapping[str, int] = MappingProxyType(
            {entity.name: entity.id for entity in self.entities}
        )
        type_index: Dict[str, set] = {}
        for entity in self.entities:
            for entity_type in entity.types:
                type_index.setdefault(entity_type, set()).add(entity.id)
        self.type_index: Mapping[str, FrozenSet[int]] = MappingProxyType(
            {key: frozenset(value) for key, value in type_index.items()}
        )
        self.predicate_index: Mapping[str, int] = MappingProxyType(
            {name: pid for pid, name in enumerate(self.predicates)}
        )

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def entity(self, u: int) -> Entity:
        """Return the entity with id u."""
        self._check_id(u)
        return self.entities[u]

    def entity_by_name(self, name: str) -> Optional[Entity]:
        """Return the entity named name, if any."""
        entity_id = self.name_index.get(name)
        return None if entity_id is None else self.entities[entity_id]

    def predicate_name(self, predicate: int) -> str:
        """Return the name of a predicate id."""
        return self.predicates[predicate]

    def neighbors(self, u: int) -> Tuple[Tuple[Edge, int], ...]:
        """Return (edge, other endpoint) pairs ignoring direction, by edge index."""
        self._check_id(u)
        return self._neighbors[u]

    def average_degree(self) -> float:
        """Return 2|E|/|V|."""
        return 2.0 * len(self.edges) / len(self.entities)

    def triples(self) -> Iterator[Tuple[str, str, str]]:
        """Yield (head, predicate, tail) name triples in edge order."""
        for edge in self.edges:
            yield (
                self.entities[edge.src].name,
                self.predicates[edge.predicate],
                self.entities[edge.dst].name,
            )

    def _check_id(self, u: int) -> None:
        if not isinstance(u, int) or u < 0 or u >= len(self.entities):
            raise ContractViolation(f"Invalid entity id: {u!r}")

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(entities={len(self.entities)}, edges={len(self.edges)}, "
            f"predicates={len(self.predicates)})"
        )


class _GraphBuilder:
    """Assigns dense ids in first-appearance order and deduplicates triples."""

    def __init__(self) -> None:
        self.names: List[str] = []
        self.types: Dict[str, set] = {}
        self.predicates: Dict[str, int] = {}
        self.triples: Dict[Tuple[int, int, int], None] = {}
        self._ids: Dict[str, int] = {}

    def entity(self, name: str, types: Iterable[str] = ()) -> int:
        entity_id = self._ids.get(name)
        if entity_id is None:
            entity_id = len(self.names)
            self._ids[name] = entity_id
            self.names.append(name)
            self.types[name] = set()
        self.types[name].update(t for t in types if t)
        return entity_id

    def triple(self, head: str, predicate: str, tail: str) -> None:
        src = self.entity(head)
        dst = self.entity(tail)
        pid = self.predicates.setdefault(predicate, len(self.predicates))
        self.triples.setdefault((src, dst, pid), None)

    def build(self) -> KnowledgeGraph:
        entities = [
            Entity(i, name, frozenset(self.types[name] or {PLACEHOLDER_TYPE}))
            for i, name in enumerate(self.names)
        ]
        edges = [
            Edge(index, src, dst, pid) for index, (src, dst, pid) in enumerate(self.triples)
        ]
        predicates = sorted(self.predicates, key=self.predicates.__getitem__)
        return KnowledgeGraph(entities, predicates, edges)


def _rows(lines: Iterable[str], source: str) -> Iterator[Tuple[int, List[str]]]:
    for number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith(COMMENT_PREFIX):
            continue
        yield number, line.split(TSV_SEPARATOR)


def parse_graph(
    triple_lines: Iterable[str],
    entity_lines: Iterable[str] = (),
    source: str = "<triples>",
    entity_source: str = "<entities>",
) -> KnowledgeGraph:
    """Parse TSV triple and entity rows into a graph.

    Raises:
        GraphParseError: A row has the wrong column count or an empty field.
        GraphLoadError: No triples were found.
    """
    builder = _GraphBuilder()
    for number, columns in _rows(entity_lines, entity_source):
        if len(columns) != 2 or not columns[0]:
            raise GraphParseError(
                f"expected 'name<TAB>types', got {len(columns)} column(s)", number, entity_source
            )
        builder.entity(columns[0], columns[1].split(TYPE_SEPARATOR))

    count = 0
    for number, columns in _rows(triple_lines, source):
        if len(columns) != 3:
            raise GraphParseError(
                f"expected 'head<TAB>predicate<TAB>tail', got {len(columns)} column(s)",
                number,
                source,
            )
        if not all(columns):
            raise GraphParseError("empty field in triple", number, source)
        builder.triple(*columns)
        count += 1

    if count == 0:
        raise GraphLoadError(f"No triples found in {source}")

    graph = builder.build()
    duplicates = count - graph.num_edges
    if duplicates:
        _LOGGER.debug(f"Collapsed {duplicates} duplicate triple(s) from {source}")
    return graph


def build_graph(
    triples: Iterable[Tuple[str, str, str]],
    entity_types: Optional[Mapping[str, Iterable[str]]] = None,
) -> KnowledgeGraph:
    """Build a graph from Python tuples; zero-edge graphs are allowed."""
    builder = _GraphBuilder()
    for name, types in (entity_types or {}).items():
        builder.entity(name, types)
    for head, predicate, tail in triples:
        builder.triple(head, predicate, tail)
    return builder.build()


def load_graph(triples_path: Path, entities_path: Optional[Path] = None) -> KnowledgeGraph:
    """Load a graph from TSV files."""
    triples_path = Path(triples_path)
    entity_lines: List[str] = []
    if entities_path is not None:
        entity_lines = Path(entities_path).read_text(encoding="utf-8").splitlines()
    triple_lines = triples_path.read_text(encoding="utf-8").splitlines()
    graph = parse_graph(
        triple_lines,
        entity_lines,
        source=str(triples_path),
        entity_source=str(entities_path),
    )
    _LOGGER.info(f"Loaded {graph} from {triples_path}")
    return graph


async def async_load_graph(
    triples_path: Path, entities_path: Optional[Path] = None
) -> KnowledgeGraph:
    """Load a graph from TSV files without blocking the event loop on reads."""
    entity_lines: List[str] = []
    if entities_path is not None:
        async with aiofiles.open(entities_path, "r", encoding="utf-8") as f:
            entity_lines = (await f.read()).splitlines()
    async with aiofiles.open(triples_path, "r", encoding="utf-8") as f:
        triple_lines = (await f.read()).splitlines()
    graph = parse_graph(
        triple_lines,
        entity_lines,
        source=str(triples_path),
        entity_source=str(entities_path),
    )
    _LOGGER.info(f"Loaded {graph} from {triples_path}")
    return graph


def neighbors(g: KnowledgeGraph, u: int) -> Tuple[Tuple[Edge, int], ...]:
    """Return incident edges of u in both directions, ordered by edge index."""
    return g.neighbors(u)


def average_degree(g: KnowledgeGraph) -> float:
    """Return the average degree 2|E|/|V|."""
    return g.average_degree()


def save_triples(g: KnowledgeGraph, path: Path) -> None:
    """Write the graph's triples as TSV."""
    lines = [TSV_SEPARATOR.join(triple) for triple in g.triples()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_entities(g: KnowledgeGraph, path: Path) -> None:
    """Write entity names and sorted types as TSV."""
    lines = [
        f"{entity.name}{TSV_SEPARATOR}{TYPE_SEPARATOR.join(sorted(entity.types))}"
        for entity in g.entities
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
