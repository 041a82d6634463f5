"""Transformation library realizing the one-to-many node-match relation."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Set, Tuple

from .const import TSV_SEPARATOR, TYPE_SEPARATOR
from .errors import LibraryParseError, QueryValidationError
from .graph import KnowledgeGraph

_LOGGER = logging.getLogger(__name__)


class MappingKind(Enum):
    """How a surface form relates to its canonical value."""

    IDENTICAL = "identical"
    SYNONYM = "synonym"
    ABBREVIATION = "abbreviation"


class MappingTarget(Enum):
    """Which universe a library row maps into."""

    TYPE = "type"
    NAME = "name"


class NodeKind(Enum):
    """Query node kinds."""

    SPECIFIC = "specific"  # type and name known
    TARGET = "target"  # only type known
    WILDCARD = "wildcard"  # nothing known


def normalize(term: str) -> str:
    """Trim, collapse whitespace and case-fold."""
    return " ".join(term.split()).casefold()


@dataclass(frozen=True)
class QueryNodeSpec:
    """What a query node says about the entities it may match."""

    kind: NodeKind
    type_terms: FrozenSet[str] = frozenset()
    name_term: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind is NodeKind.SPECIFIC:
            if not self.name_term or not self.type_terms:
                raise QueryValidationError("A specific node needs a name and at least one type")
        elif self.kind is NodeKind.TARGET:
            if not self.type_terms or self.name_term is not None:
                raise QueryValidationError("A target node needs types and no name")
        elif self.type_terms or self.name_term is not None:
            raise QueryValidationError("A wildcard node takes neither types nor a name")


class LibraryEntry(NamedTuple):
    """One surface form to canonical value mapping."""

    canonical: str
    kind: MappingKind
    surface: str


def _entry_order(entry: LibraryEntry) -> Tuple[str, str, str]:
    return (entry.canonical, entry.kind.value, entry.surface)


@dataclass
class TransformationLibrary:
    """Surface form to canonical type/name maps, tagged with their mapping kind.

    Maps are keyed by the normalized surface form. Identical mappings are
    implicit once the library is bound to a graph.
    """

    type_map: Dict[str, Set[LibraryEntry]] = field(default_factory=dict)
    name_map: Dict[str, Set[LibraryEntry]] = field(default_factory=dict)
    graph: Optional[KnowledgeGraph] = None
    _type_universe: Dict[str, Set[str]] = field(default_factory=dict, repr=False)
    _name_universe: Dict[str, Set[str]] = field(default_factory=dict, repr=False)

    def _map(self, target: MappingTarget) -> Dict[str, Set[LibraryEntry]]:
        return self.type_map if target is MappingTarget.TYPE else self.name_map

    def add(self, surface: str, kind: MappingKind, target: MappingTarget, canonical: str) -> None:
        entry = LibraryEntry(canonical, kind, surface.strip())
        self._map(target).setdefault(normalize(surface), set()).add(entry)

    def rows(self) -> Iterable[Tuple[MappingTarget, LibraryEntry]]:
        for target in MappingTarget:
            for key in sorted(self._map(target)):
                for entry in sorted(self._map(target)[key], key=_entry_order):
                    yield target, entry

    def missing_canonicals(self, g: KnowledgeGraph) -> List[Tuple[MappingTarget, str]]:
        """Return canonical values that do not exist in the graph."""
        missing: Set[Tuple[MappingTarget, str]] = set()
        for target, entry in self.rows():
            known = g.type_index if target is MappingTarget.TYPE else g.name_index
            if entry.canonical not in known:
                missing.add((target, entry.canonical))
        return sorted(missing, key=lambda item: (item[0].value, item[1]))

    def bind(self, g: KnowledgeGraph, strict: bool = False) -> "TransformationLibrary":
        """Return a copy bound to g, dropping canonicals absent from the graph.

        Raises:
            LibraryParseError: strict is set and some canonical is missing.
        """
        missing = set(self.missing_canonicals(g))
        if missing:
            listing = ", ".join(
                f"{t.value}:{c}" for t, c in sorted(missing, key=lambda m: (m[0].value, m[1]))
            )
            if strict:
                raise LibraryParseError(f"Canonical values missing from graph: {listing}")
            _LOGGER.warning(f"Dropping library canonicals missing from graph: {listing}")

        bound = TransformationLibrary(graph=g)
        for target, entry in self.rows():
            if (target, entry.canonical) not in missing:
                bound.add(entry.surface, entry.kind, target, entry.canonical)
        for type_name in g.type_index:
            bound._type_universe.setdefault(normalize(type_name), set()).add(type_name)
        for name in g.name_index:
            bound._name_universe.setdefault(normalize(name), set()).add(name)
        return bound

    def _lookup(self, term: str, target: MappingTarget) -> Set[str]:
        key = normalize(term)
        found = {entry.canonical for entry in self._map(target).get(key, ())}
        if self.graph is None:
            found.add(term)
        else:
            universe = self._type_universe if target is MappingTarget.TYPE else self._name_universe
            found |= universe.get(key, set())
        return found

    def lookup_types(self, term: str) -> Set[str]:
        """Return canonical types for a surface form, identical case included."""
        return self._lookup(term, MappingTarget.TYPE)

    def lookup_names(self, term: str) -> Set[str]:
        """Return canonical names for a surface form, identical case included."""
        return self._lookup(term, MappingTarget.NAME)

    def surface_forms(self, canonical: str, target: MappingTarget) -> List[str]:
        """Return synonym/abbreviation surface forms mapping to canonical, sorted."""
        return sorted(
            {
                entry.surface
                for entries in self._map(target).values()
                for entry in entries
                if entry.canonical == canonical and entry.kind is not MappingKind.IDENTICAL
            }
        )


def parse_library(lines: Iterable[str], source: str = "<library>") -> TransformationLibrary:
    """Parse `surface<TAB>kind<TAB>canonical1|canonical2[<TAB>type|name]` rows."""
    library = TransformationLibrary()
    for number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        columns = line.split(TSV_SEPARATOR)
        if len(columns) not in (3, 4):
            raise LibraryParseError(f"{source}:{number}: expected 3 or 4 columns")
        surface, kind_token, canonicals = columns[:3]
        try:
            kind = MappingKind(kind_token.strip().lower())
        except ValueError:
            raise LibraryParseError(f"{source}:{number}: unknown kind {kind_token!r}") from None
        target_token = columns[3].strip().lower() if len(columns) == 4 else "type"
        try:
            target = MappingTarget(target_token)
        except ValueError:
            raise LibraryParseError(
                f"{source}:{number}: unknown target {target_token!r}"
            ) from None
        values = [c for c in canonicals.split(TYPE_SEPARATOR) if c]
        if not surface.strip() or not values:
            raise LibraryParseError(f"{source}:{number}: empty surface or canonical list")
        for canonical in values:
            library.add(surface, kind, target, canonical)
    return library


def load_library(path: Path) -> TransformationLibrary:
    """Load a library TSV file."""
    library = parse_library(Path(path).read_text(encoding="utf-8").splitlines(), str(path))
    _LOGGER.info(
        f"Loaded library from {path}: {len(library.type_map)} type and "
        f"{len(library.name_map)} name surface forms"
    )
    return library


def node_matches(
    spec: QueryNodeSpec, lib: TransformationLibrary, g: KnowledgeGraph
) -> FrozenSet[int]:
    """Return the candidate entity set of a query node."""
    if spec.kind is NodeKind.WILDCARD:
        return frozenset(range(g.num_entities))

    types: Set[str] = set()
    for term in spec.type_terms:
        types |= lib.lookup_types(term)

    if spec.kind is NodeKind.TARGET:
        found: Set[int] = set()
        for type_name in types:
            found |= g.type_index.get(type_name, frozenset())
        return frozenset(found)

    found = set()
    for name in lib.lookup_names(spec.name_term or ""):
        entity = g.entity_by_name(name)
        if entity is not None and entity.types & types:
            found.add(entity.id)
    return frozenset(found)
