"""Query graphs, path sub-queries and cost-based decomposition."""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Collection, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import voluptuous as vol

from .errors import QueryValidationError, UnsupportedQueryShape
from .graph import KnowledgeGraph
from .library import NodeKind, QueryNodeSpec, TransformationLibrary, node_matches

_LOGGER = logging.getLogger(__name__)

NODE_SCHEMA = vol.Schema(
    {
        vol.Required("id"): vol.All(str, vol.Length(min=1)),
        vol.Required("kind"): vol.In([kind.value for kind in NodeKind]),
        vol.Optional("types", default=[]): [vol.All(str, vol.Length(min=1))],
        vol.Optional("name"): vol.All(str, vol.Length(min=1)),
    }
)

EDGE_SCHEMA = vol.Schema(
    {
        vol.Required("src"): str,
        vol.Required("dst"): str,
        vol.Required("predicate"): vol.All(str, vol.Length(min=1)),
    }
)

QUERY_DOCUMENT_SCHEMA = vol.Schema(
    {
        vol.Optional("description"): str,
        vol.Required("nodes"): vol.All([NODE_SCHEMA], vol.Length(min=2)),
        vol.Required("edges"): vol.All([EDGE_SCHEMA], vol.Length(min=1)),
    }
)


@dataclass(frozen=True)
class QueryNode:
    """A query node; index is its local id."""

    index: int
    label: str
    spec: QueryNodeSpec


@dataclass(frozen=True)
class QueryEdge:
    """A predicate-labeled query edge."""

    index: int
    src: int
    dst: int
    predicate: str

    def other(self, v: int) -> int:
        return self.dst if self.src == v else self.src


class QueryGraph:
    """Validated query graph with specific, target and wildcard nodes."""

    def __init__(
        self,
        nodes: Sequence[QueryNode],
        edges: Sequence[QueryEdge],
        description: str = "",
    ) -> None:
        self.nodes: Tuple[QueryNode, ...] = tuple(nodes)
        self.edges: Tuple[QueryEdge, ...] = tuple(edges)
        self.description = description
        self.node_by_label: Dict[str, int] = {node.label: node.index for node in self.nodes}
        self._validate()

    def _validate(self) -> None:
        if len(self.node_by_label) != len(self.nodes):
            raise QueryValidationError("Duplicate node id in query")
        if not any(n.spec.kind is NodeKind.SPECIFIC for n in self.nodes):
            raise QueryValidationError("Query has no specific node")
        if not any(n.spec.kind is NodeKind.TARGET for n in self.nodes):
            raise QueryValidationError("Query has no target node")
        for edge in self.edges:
            if edge.src == edge.dst:
                label = self.nodes[edge.src].label
                raise QueryValidationError(f"Edge {edge.index} is a self-loop on {label}")
        if not nx.is_connected(self.to_networkx()):
            raise QueryValidationError("Query graph is disconnected")

    def to_networkx(self) -> nx.MultiGraph:
        graph = nx.MultiGraph()
        graph.add_nodes_from(node.index for node in self.nodes)
        for edge in self.edges:
            graph.add_edge(edge.src, edge.dst, key=edge.index, predicate=edge.predicate)
        return graph

    @property
    def specific_nodes(self) -> List[int]:
        return [n.index for n in self.nodes if n.spec.kind is NodeKind.SPECIFIC]

    @property
    def pivot_candidates(self) -> List[int]:
        return [n.index for n in self.nodes if n.spec.kind is NodeKind.TARGET]

    def label(self, v: int) -> str:
        return self.nodes[v].label

    def with_node_spec(self, v: int, spec: QueryNodeSpec) -> "QueryGraph":
        nodes = list(self.nodes)
        nodes[v] = replace(nodes[v], spec=spec)
        return QueryGraph(nodes, self.edges, self.description)

    def with_edge_predicate(self, index: int, predicate: str) -> "QueryGraph":
        edges = list(self.edges)
        edges[index] = replace(edges[index], predicate=predicate)
        return QueryGraph(self.nodes, edges, self.description)

    def to_document(self) -> Dict[str, Any]:
        """Return the JSON document form accepted by parse_query."""
        nodes = []
        for node in self.nodes:
            entry: Dict[str, Any] = {"id": node.label, "kind": node.spec.kind.value}
            if node.spec.type_terms:
                entry["types"] = sorted(node.spec.type_terms)
            if node.spec.name_term is not None:
                entry["name"] = node.spec.name_term
            nodes.append(entry)
        document: Dict[str, Any] = {}
        if self.description:
            document["description"] = self.description
        document["nodes"] = nodes
        document["edges"] = [
            {"src": self.label(e.src), "dst": self.label(e.dst), "predicate": e.predicate}
            for e in self.edges
        ]
        return document

    def __repr__(self) -> str:
        return f"QueryGraph(nodes={len(self.nodes)}, edges={len(self.edges)})"


@dataclass(frozen=True)
class SubQueryGraph:
    """A simple query path from a specific node to the pivot."""

    nodes: Tuple[int, ...]
    edges: Tuple[QueryEdge, ...]
    query: QueryGraph = field(compare=False, repr=False)

    @property
    def start(self) -> int:
        return self.nodes[0]

    @property
    def pivot(self) -> int:
        return self.nodes[-1]

    @property
    def predicates(self) -> Tuple[str, ...]:
        """Query predicates in path order as seen from the specific node."""
        return tuple(edge.predicate for edge in self.edges)

    @property
    def edge_key(self) -> Tuple[int, ...]:
        return tuple(edge.index for edge in self.edges)

    def spec(self, position: int) -> QueryNodeSpec:
        """Return the QueryNodeSpec at a path position (0 = start)."""
        return self.query.nodes[self.nodes[position]].spec

    def describe(self) -> str:
        parts = [self.query.label(self.nodes[0])]
        for edge, node in zip(self.edges, self.nodes[1:]):
            parts.append(f"-{edge.predicate}- {self.query.label(node)}")
        return " ".join(parts)


@dataclass(frozen=True)
class Decomposition:
    """Pivot and covering sub-queries of a query graph."""

    pivot: int
    sub_queries: Tuple[SubQueryGraph, ...]
    estimated_cost: float


def parse_query(
    doc: Union[str, Mapping[str, Any]],
    vocabulary: Optional[Collection[str]] = None,
) -> QueryGraph:
    """Parse and validate a JSON query document.

    Args:
        doc: JSON text or an already decoded mapping
        vocabulary: Known predicate names; unchecked when None

    Raises:
        QueryValidationError: The document is malformed or violates a query invariant.
    """
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as err:
            raise QueryValidationError(f"Query document is not valid JSON: {err}") from err
    try:
        data = QUERY_DOCUMENT_SCHEMA(dict(doc))  # type: ignore[arg-type]
    except vol.Invalid as err:
        raise QueryValidationError(f"Invalid query document: {err}") from err

    nodes: List[QueryNode] = []
    labels: Dict[str, int] = {}
    for raw in data["nodes"]:
        if raw["id"] in labels:
            raise QueryValidationError(f"Duplicate node id {raw['id']!r}")
        try:
            spec = QueryNodeSpec(
                NodeKind(raw["kind"]), frozenset(raw["types"]), raw.get("name")
            )
        except QueryValidationError as err:
            raise QueryValidationError(f"Node {raw['id']!r}: {err}") from err
        labels[raw["id"]] = len(nodes)
        nodes.append(QueryNode(len(nodes), raw["id"], spec))

    edges: List[QueryEdge] = []
    for raw in data["edges"]:
        for end in ("src", "dst"):
            if raw[end] not in labels:
                raise QueryValidationError(
                    f"Edge {len(edges)} references missing node {raw[end]!r}"
                )
        if vocabulary is not None and raw["predicate"] not in vocabulary:
            raise QueryValidationError(
                f"Edge {len(edges)} uses unknown predicate {raw['predicate']!r}"
            )
        src, dst = labels[raw["src"]], labels[raw["dst"]]
        edges.append(QueryEdge(len(edges), src, dst, raw["predicate"]))

    return QueryGraph(nodes, edges, data.get("description", ""))


def estimate_cost(sub: SubQueryGraph, g: KnowledgeGraph, lib: TransformationLibrary) -> float:
    """Return |phi(v^s)| * avg_degree^|E_i|, or inf when phi(v^s) is empty."""
    seeds = len(node_matches(sub.spec(0), lib, g))
    if seeds == 0:
        return math.inf
    return seeds * g.average_degree() ** len(sub.edges)


def candidate_sub_queries(q: QueryGraph, pivot: int) -> List[SubQueryGraph]:
    """Return every simple specific-to-pivot path, ordered by edge sequence."""
    graph = q.to_networkx()
    found: List[SubQueryGraph] = []
    for start in q.specific_nodes:
        for edge_path in nx.all_simple_edge_paths(graph, start, pivot):
            nodes = [start]
            edges = []
            for a, b, key in edge_path:
                nodes.append(b if a == nodes[-1] else a)
                edges.append(q.edges[key])
            found.append(SubQueryGraph(tuple(nodes), tuple(edges), q))
    found.sort(key=lambda sub: (sub.edge_key, sub.nodes))
    return found


def _cover(
    paths: Sequence[SubQueryGraph], costs: Sequence[float], n_edges: int
) -> Optional[Tuple[float, Tuple[int, ...]]]:
    """Minimum-cost path cover of all query edges by a DP over covered-edge masks."""
    full = (1 << n_edges) - 1
    masks = [sum(1 << e.index for e in path.edges) for path in paths]
    keys = [path.edge_key for path in paths]
    best: Dict[int, Tuple[float, Tuple[Tuple[int, ...], ...], Tuple[int, ...]]] = {
        0: (0.0, (), ())
    }
    for mask in range(full + 1):
        if mask not in best:
            continue
        cost, chosen_keys, chosen = best[mask]
        for i, path_mask in enumerate(masks):
            extended = mask | path_mask
            if extended == mask:
                continue
            order = sorted(zip(chosen_keys + (keys[i],), chosen + (i,)))
            candidate = (
                cost + costs[i],
                tuple(k for k, _ in order),
                tuple(p for _, p in order),
            )
            if extended not in best or candidate[:2] < best[extended][:2]:
                best[extended] = candidate
    if full not in best:
        return None
    return best[full][0], best[full][2]


def decompose(q: QueryGraph, g: KnowledgeGraph, lib: TransformationLibrary) -> Decomposition:
    """Choose the pivot and path cover minimizing the summed estimated cost.

    Raises:
        UnsupportedQueryShape: No pivot admits a cover of every query edge.
    """
    best: Optional[Tuple[float, int, Tuple[Tuple[int, ...], ...], Tuple[SubQueryGraph, ...]]] = None
    seed_counts: Dict[int, int] = {}
    degree = g.average_degree()
    for pivot in q.pivot_candidates:
        paths = candidate_sub_queries(q, pivot)
        costs = []
        for path in paths:
            if path.start not in seed_counts:
                seed_counts[path.start] = len(node_matches(path.spec(0), lib, g))
            seeds = seed_counts[path.start]
            costs.append(math.inf if seeds == 0 else seeds * degree ** len(path.edges))
        cover = _cover(paths, costs, len(q.edges))
        if cover is None:
            _LOGGER.debug(f"Pivot {q.label(pivot)} cannot cover every query edge")
            continue
        total, chosen = cover
        subs = tuple(paths[i] for i in chosen)
        candidate = (total, pivot, tuple(sub.edge_key for sub in subs), subs)
        if best is None or candidate[:3] < best[:3]:
            best = candidate

    if best is None:
        raise UnsupportedQueryShape("No pivot node is reachable by paths covering every edge")
    total, pivot, _, subs = best
    _LOGGER.info(
        f"Decomposed query into {len(subs)} sub-quer{'y' if len(subs) == 1 else 'ies'} "
        f"around pivot {q.label(pivot)} (estimated cost {total:.3g})"
    )
    return Decomposition(pivot, subs, total)


def make_query_shape(shape: str, size: int, predicate: str = "p") -> QueryGraph:
    """Build a synthetic query of a named shape.

    Shapes: chain (size edges), star (size leaves), tree (binary, size edges),
    cycle (size nodes) and flower (size triangle petals around one center).
    Specific nodes are named s0, s1, ...; other nodes are typed "T".
    """
    if size < 1:
        raise QueryValidationError("Shape size must be positive")
    specs: List[Tuple[str, QueryNodeSpec]] = []
    pairs: List[Tuple[int, int]] = []

    def add(label: str, specific: bool) -> int:
        if specific:
            spec = QueryNodeSpec(NodeKind.SPECIFIC, frozenset({"S"}), label)
        else:
            spec = QueryNodeSpec(NodeKind.TARGET, frozenset({"T"}))
        specs.append((label, spec))
        return len(specs) - 1

    if shape == "chain":
        previous = add("s0", True)
        for i in range(size):
            current = add(f"t{i}", False)
            pairs.append((previous, current))
            previous = current
    elif shape == "star":
        center = add("t0", False)
        for i in range(size):
            pairs.append((add(f"s{i}", True), center))
    elif shape == "tree":
        root = add("t0", False)
        frontier = [root]
        made = 0
        while made < size:
            parent = frontier.pop(0)
            for _ in range(2):
                if made == size:
                    break
                made += 1
                child = add(f"n{made}", False)
                pairs.append((parent, child))
                frontier.append(child)
        # leaves become specific nodes
        leaves = {child for _, child in pairs} - {parent for parent, _ in pairs}
        for leaf in sorted(leaves):
            label = f"s{leaf}"
            specs[leaf] = (label, QueryNodeSpec(NodeKind.SPECIFIC, frozenset({"S"}), label))
    elif shape == "cycle":
        if size < 3:
            raise QueryValidationError("A cycle needs at least 3 nodes")
        first = add("s0", True)
        previous = first
        for i in range(1, size):
            current = add(f"t{i}", False)
            pairs.append((previous, current))
            previous = current
        pairs.append((previous, first))
    elif shape == "flower":
        center = add("t0", False)
        for i in range(size):
            petal = add(f"t{i + 1}", False)
            tip = add(f"s{i}", True)
            pairs.extend([(center, petal), (petal, tip), (tip, center)])
    else:
        raise QueryValidationError(f"Unknown query shape {shape!r}")

    nodes = [QueryNode(i, label, spec) for i, (label, spec) in enumerate(specs)]
    edges = [QueryEdge(i, a, b, predicate) for i, (a, b) in enumerate(pairs)]
    return QueryGraph(nodes, edges, f"{shape} query of size {size}")


def chain_query_from_path(
    g: KnowledgeGraph, path_nodes: Sequence[int], path_edges: Sequence[int]
) -> QueryGraph:
    """Turn a graph path into a chain query: named start, typed end, wildcards between."""
    if len(path_nodes) != len(path_edges) + 1 or not path_edges:
        raise QueryValidationError("A path needs n+1 nodes for n >= 1 edges")
    start = g.entity(path_nodes[0])
    end = g.entity(path_nodes[-1])
    nodes = [
        QueryNode(0, "v0", QueryNodeSpec(NodeKind.SPECIFIC, start.types, start.name))
    ]
    for i in range(1, len(path_nodes) - 1):
        nodes.append(QueryNode(i, f"v{i}", QueryNodeSpec(NodeKind.WILDCARD)))
    last = len(path_nodes) - 1
    nodes.append(QueryNode(last, f"v{last}", QueryNodeSpec(NodeKind.TARGET, end.types)))
    edges = [
        QueryEdge(i, i, i + 1, g.predicate_name(g.edges[e].predicate))
        for i, e in enumerate(path_edges)
    ]
    return QueryGraph(nodes, edges, f"chain extracted from {start.name}")
