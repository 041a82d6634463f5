"""Brute-force reference implementations used to check search and assembly."""

import itertools
import logging
import math
from typing import Any, Callable, Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

from .assembly import FinalMatch
from .const import DEFAULT_ORACLE_NODE_CAP
from .embedding import PredicateSpace
from .errors import OracleError, UnsupportedQueryShape
from .graph import KnowledgeGraph
from .library import NodeKind, TransformationLibrary, node_matches
from .query import Decomposition, QueryGraph, SubQueryGraph
from .search import Match, MatchSet, SearchConfig

_LOGGER = logging.getLogger(__name__)


def _partitions(length: int, segments: int) -> Iterator[Tuple[int, ...]]:
    """Yield segment start offsets (0, c_1, ..., c_{m-1}) of every split."""
    for cuts in itertools.combinations(range(1, length), segments - 1):
        yield (0,) + cuts


def _allowed(boundary: Optional[FrozenSet[int]], node: int) -> bool:
    return boundary is None or node in boundary


def _best_alignment(
    nodes: Sequence[int],
    weights: Sequence[Sequence[float]],
    boundaries: Sequence[Optional[FrozenSet[int]]],
    segments: int,
) -> Optional[Tuple[float, ...]]:
    """Return the aligned weights with the largest product, or None if infeasible.

    weights[i][j] is edge i weighted against query edge j.
    """
    best: Optional[Tuple[float, ...]] = None
    best_product = 0.0
    length = len(weights)
    for starts in _partitions(length, segments):
        ends = starts[1:] + (length,)
        if not all(_allowed(boundaries[j], nodes[starts[j]]) for j in range(1, segments)):
            continue
        aligned = []
        for j, (first, last) in enumerate(zip(starts, ends)):
            aligned.extend(weights[i][j] for i in range(first, last))
        if any(w <= 0.0 for w in aligned):
            continue
        product = 1.0
        for w in aligned:
            product *= w
        if best is None or product > best_product:
            best, best_product = tuple(aligned), product
    return best


def _feasible_prefix(
    nodes: Sequence[int],
    weights: Sequence[Sequence[float]],
    boundaries: Sequence[Optional[FrozenSet[int]]],
) -> bool:
    """True if the edges align with the first j query edges for some j."""
    return any(
        _best_alignment(nodes, weights, boundaries, j) is not None
        for j in range(1, min(len(weights), len(boundaries) - 1) + 1)
    )


def oracle_path_enum(
    sub: SubQueryGraph,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    cfg: SearchConfig,
    node_cap: int = DEFAULT_ORACLE_NODE_CAP,
) -> List[Match]:
    """Enumerate every simple path of at most n_hat hops and rank the matches.

    A path reaching a target with a feasible full alignment is a match and is
    not extended further; matches with pss below tau are discarded. Segment j
    must start at a node match of query node j unless that node is a wildcard.
    Revisits are checked per path as under VisitedScope.PATH, whatever
    cfg.visited_scope says.

    Raises:
        OracleError: The graph exceeds node_cap entities.
    """
    if g.num_entities > node_cap:
        raise OracleError(f"Graph has {g.num_entities} entities; oracle cap is {node_cap}")
    m = len(sub.edges)
    seeds = sorted(node_matches(sub.spec(0), lib, g))
    targets = node_matches(sub.spec(m), lib, g)
    # boundaries[j] constrains the first node of segment j (index 0 unused)
    boundaries: List[Optional[FrozenSet[int]]] = [None] * (m + 1)
    for j in range(1, m):
        spec = sub.spec(j)
        if spec.kind is not NodeKind.WILDCARD:
            boundaries[j] = node_matches(spec, lib, g)

    def edge_weights(edge_index: int) -> Tuple[float, ...]:
        predicate = g.predicate_name(g.edges[edge_index].predicate)
        return tuple(space.edge_weight(q, predicate) for q in sub.predicates)

    found: List[Match] = []

    def visit(nodes: List[int], edges: List[int], weights: List[Tuple[float, ...]]) -> None:
        if edges:
            aligned = None
            if nodes[-1] in targets:
                aligned = _best_alignment(nodes, weights, boundaries, m)
            if aligned is not None:
                product = 1.0
                for w in aligned:
                    product *= w
                pss = product ** (1.0 / len(aligned))
                if pss >= cfg.tau:
                    found.append(Match(tuple(nodes), tuple(edges), aligned, pss))
                return
            if not _feasible_prefix(nodes, weights, boundaries):
                return
        if len(edges) >= cfg.n_hat:
            return
        for edge in g.edges:
            if nodes[-1] not in (edge.src, edge.dst):
                continue
            other = edge.dst if edge.src == nodes[-1] else edge.src
            if other in nodes:
                continue
            nodes.append(other)
            edges.append(edge.index)
            weights.append(edge_weights(edge.index))
            visit(nodes, edges, weights)
            nodes.pop()
            edges.pop()
            weights.pop()

    for seed in seeds:
        visit([seed], [], [])
    found.sort(key=lambda match: (-match.pss, len(match.edges), match.nodes, match.edges))
    _LOGGER.debug(f"Oracle enumerated {len(found)} match(es) for {sub.describe()}")
    return found


def oracle_completions(
    matches: Sequence[Match], nodes: Sequence[int], edges: Sequence[int]
) -> List[Match]:
    """Return the matches extending the given path prefix."""
    prefix_nodes = tuple(nodes)
    prefix_edges = tuple(edges)
    return [
        match
        for match in matches
        if match.nodes[: len(prefix_nodes)] == prefix_nodes
        and match.edges[: len(prefix_edges)] == prefix_edges
    ]


def oracle_full_join(
    match_sets: Sequence[MatchSet],
    k: int,
    name_of: Optional[Callable[[int], Any]] = None,
) -> List[FinalMatch]:
    """Hash-join every match by pivot, score by summed pss and keep the top k."""
    best: List[Dict[int, Match]] = []
    for match_set in match_sets:
        per_pivot: Dict[int, Match] = {}
        for match in sorted(match_set, key=lambda m: (-m.pss, len(m.edges), m.nodes, m.edges)):
            per_pivot.setdefault(match.pivot, match)
        best.append(per_pivot)

    pivots = set()
    for per_pivot in best:
        pivots.update(per_pivot)

    joined = []
    for pivot in pivots:
        slots: List[Optional[Match]] = [per_pivot.get(pivot) for per_pivot in best]
        score = 0.0
        for slot in slots:
            if slot is not None:
                score += slot.pss
        name = None if name_of is None else str(name_of(pivot))
        joined.append(FinalMatch(pivot, slots, score, score, name))
    joined.sort(key=lambda f: (-f.score, name_of(f.pivot) if name_of is not None else f.pivot))
    return joined[:k]


def _simple_paths(q: QueryGraph, start: int, pivot: int) -> List[SubQueryGraph]:
    paths: List[SubQueryGraph] = []

    def walk(nodes: List[int], edges: list) -> None:
        if nodes[-1] == pivot and edges:
            paths.append(SubQueryGraph(tuple(nodes), tuple(edges), q))
            return
        for edge in q.edges:
            if nodes[-1] not in (edge.src, edge.dst):
                continue
            nxt = edge.other(nodes[-1])
            if nxt in nodes:
                continue
            walk(nodes + [nxt], edges + [edge])

    walk([start], [])
    return paths


def oracle_decompose(q: QueryGraph, g: KnowledgeGraph, lib: TransformationLibrary) -> Decomposition:
    """Try every subset of specific-to-pivot paths for every pivot.

    Raises:
        UnsupportedQueryShape: No subset covers all query edges.
    """
    everything = frozenset(edge.index for edge in q.edges)
    degree = 2.0 * g.num_edges / g.num_entities
    best = None
    for pivot in q.pivot_candidates:
        paths: List[SubQueryGraph] = []
        for start in q.specific_nodes:
            paths.extend(_simple_paths(q, start, pivot))
        costs = []
        for path in paths:
            seeds = len(node_matches(path.spec(0), lib, g))
            costs.append(math.inf if seeds == 0 else seeds * degree ** len(path.edges))
        for size in range(1, len(paths) + 1):
            for chosen in itertools.combinations(range(len(paths)), size):
                covered = frozenset(e.index for i in chosen for e in paths[i].edges)
                if covered != everything:
                    continue
                keys = tuple(sorted(tuple(e.index for e in paths[i].edges) for i in chosen))
                total = sum(sorted(costs[i] for i in chosen))
                candidate = (total, pivot, keys, chosen)
                if best is None or candidate[:3] < best[:3]:
                    best = (total, pivot, keys, tuple(paths[i] for i in chosen))
    if best is None:
        raise UnsupportedQueryShape("No pivot admits a covering set of paths")
    total, pivot, keys, subs = best
    ordered = tuple(sorted(subs, key=lambda s: (tuple(e.index for e in s.edges), s.nodes)))
    return Decomposition(pivot, ordered, total)


def oracle_run_query(
    q: QueryGraph,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    cfg: SearchConfig,
) -> List[FinalMatch]:
    """Monolithic end-to-end answer: oracle decomposition, enumeration and join."""
    decomposition = oracle_decompose(q, g, lib)
    match_sets = []
    for sub in decomposition.sub_queries:
        ranked = oracle_path_enum(sub, g, space, lib, cfg)
        match_sets.append(MatchSet(ranked[: cfg.k * cfg.overfetch]))
    return oracle_full_join(match_sets, cfg.k, name_of=lambda u: g.entity(u).name)
