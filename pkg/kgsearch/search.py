"""A* semantic search mapping a query path to similar graph paths.

A sub-query with query edges q_1..q_m matches a graph path whose edges split
into m ordered, contiguous, non-empty segments; an edge in segment j is
weighted against q_j. Each frontier entry carries, per cursor j, the best
weight product of any alignment whose last edge sits in segment j, so a path
is complete once cursor m is feasible at a target.
"""

import heapq
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Any,
    Dict,
    FrozenSet,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

import voluptuous as vol

from .const import (
    CONF_ALERT_RATIO,
    CONF_ASSEMBLY_TIME,
    CONF_EAGER_SEMANTIC_GRAPH,
    CONF_K,
    CONF_N_HAT,
    CONF_OVERFETCH,
    CONF_UNGUARDED_TA,
    CONF_PRUNE,
    CONF_REPORT_EVERY,
    CONF_TAU,
    CONF_TIME_BOUND,
    CONF_VISITED_SCOPE,
    DEFAULT_ALERT_RATIO,
    DEFAULT_K,
    DEFAULT_N_HAT,
    DEFAULT_OVERFETCH,
    DEFAULT_REPORT_EVERY,
    DEFAULT_TAU,
    DEFAULT_VISITED_SCOPE,
    VISITED_PATH,
    VISITED_SEARCH,
)
from .embedding import PredicateSpace
from .errors import ContractViolation, QueryValidationError
from .graph import Edge, KnowledgeGraph
from .library import NodeKind, TransformationLibrary, node_matches
from .query import SubQueryGraph

_LOGGER = logging.getLogger(__name__)

SortKey = Tuple[float, int, Tuple[int, ...], Tuple[int, ...]]


class VisitedScope(Enum):
    """Which nodes a new frontier entry may not revisit."""

    PATH = VISITED_PATH  # nodes already on the same path
    SEARCH = VISITED_SEARCH  # nodes generated anywhere in this sub-query search


def _optional_seconds(value: Any) -> Optional[float]:
    if value is None:
        return None
    return vol.All(vol.Coerce(float), vol.Range(min=0.0))(value)


SEARCH_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_TAU, default=DEFAULT_TAU): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, max=1.0)
        ),
        vol.Optional(CONF_N_HAT, default=DEFAULT_N_HAT): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_K, default=DEFAULT_K): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_OVERFETCH, default=DEFAULT_OVERFETCH): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_TIME_BOUND, default=None): _optional_seconds,
        vol.Optional(CONF_ALERT_RATIO, default=DEFAULT_ALERT_RATIO): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, max=100.0, min_included=False)
        ),
        vol.Optional(CONF_ASSEMBLY_TIME, default=None): _optional_seconds,
        vol.Optional(CONF_VISITED_SCOPE, default=DEFAULT_VISITED_SCOPE): vol.Coerce(VisitedScope),
        vol.Optional(CONF_PRUNE, default=True): bool,
        vol.Optional(CONF_EAGER_SEMANTIC_GRAPH, default=False): bool,
        vol.Optional(CONF_REPORT_EVERY, default=DEFAULT_REPORT_EVERY): vol.All(
            int, vol.Range(min=1)
        ),
        vol.Optional(CONF_UNGUARDED_TA, default=False): bool,
    }
)


@dataclass(frozen=True)
class SearchConfig:
    """Search parameters; time values are in seconds."""

    tau: float = DEFAULT_TAU
    n_hat: int = DEFAULT_N_HAT
    k: int = DEFAULT_K
    overfetch: int = DEFAULT_OVERFETCH
    time_bound: Optional[float] = None
    alert_ratio: float = DEFAULT_ALERT_RATIO
    assembly_time_per_match: Optional[float] = None
    visited_scope: VisitedScope = VisitedScope.SEARCH
    prune: bool = True
    eager_semantic_graph: bool = False
    report_every: int = DEFAULT_REPORT_EVERY
    unguarded_ta: bool = False

    def __post_init__(self) -> None:
        try:
            SEARCH_CONFIG_SCHEMA(self.as_dict())
        except vol.Invalid as err:
            raise QueryValidationError(f"Invalid search configuration: {err}") from err

    @property
    def limit(self) -> int:
        """Matches collected per sub-query (c * k)."""
        return self.k * self.overfetch

    def as_dict(self) -> Dict[str, Any]:
        return {
            CONF_TAU: self.tau,
            CONF_N_HAT: self.n_hat,
            CONF_K: self.k,
            CONF_OVERFETCH: self.overfetch,
            CONF_TIME_BOUND: self.time_bound,
            CONF_ALERT_RATIO: self.alert_ratio,
            CONF_ASSEMBLY_TIME: self.assembly_time_per_match,
            CONF_VISITED_SCOPE: self.visited_scope.value,
            CONF_PRUNE: self.prune,
            CONF_EAGER_SEMANTIC_GRAPH: self.eager_semantic_graph,
            CONF_REPORT_EVERY: self.report_every,
            CONF_UNGUARDED_TA: self.unguarded_ta,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SearchConfig":
        try:
            values = SEARCH_CONFIG_SCHEMA(dict(data))
        except vol.Invalid as err:
            raise QueryValidationError(f"Invalid search configuration: {err}") from err
        return cls(**values)


@dataclass(frozen=True)
class Match:
    """A complete path whose aligned weights consumed every query edge."""

    nodes: Tuple[int, ...]
    edges: Tuple[int, ...]
    weights: Tuple[float, ...]
    pss: float

    @property
    def pivot(self) -> int:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.edges)

    @property
    def sort_key(self) -> SortKey:
        return (-self.pss, len(self.edges), self.nodes, self.edges)


@dataclass(frozen=True)
class PartialPath:
    """A frontier entry.

    alignment[j] is the best product of an alignment ending in segment j
    (0.0 when infeasible); alignment[0] is 1.0 only for a bare start node.
    aligned[j] holds the weights of that alignment.
    """

    nodes: Tuple[int, ...]
    edges: Tuple[int, ...]
    alignment: Tuple[float, ...]
    aligned: Tuple[Optional[Tuple[float, ...]], ...]
    estimate: float
    complete: bool = False

    @property
    def hops(self) -> int:
        return len(self.edges)

    @property
    def last(self) -> int:
        return self.nodes[-1]

    @property
    def explored_product(self) -> float:
        """W_si: the best product over all cursors."""
        return max(self.alignment)

    @property
    def sort_key(self) -> SortKey:
        return (-self.estimate, len(self.edges), self.nodes, self.edges)

    def to_match(self) -> Match:
        weights = self.aligned[-1]
        if not self.complete or weights is None:
            raise ContractViolation("Only complete paths are matches")
        return Match(self.nodes, self.edges, weights, self.estimate)


class MatchSet:
    """Max-heap of matches by pss, then fewer hops, then node and edge ids."""

    def __init__(self, matches: Sequence[Match] = (), diagnostic: Optional[str] = None) -> None:
        self._heap: List[Tuple[SortKey, Match]] = []
        self._paths: Set[Tuple[Tuple[int, ...], Tuple[int, ...]]] = set()
        self.diagnostic = diagnostic
        self.stats: Optional["SearchStats"] = None
        for match in matches:
            self.push(match)

    def push(self, match: Match) -> bool:
        """Add a match; duplicate paths are ignored."""
        path = (match.nodes, match.edges)
        if path in self._paths:
            return False
        self._paths.add(path)
        heapq.heappush(self._heap, (match.sort_key, match))
        return True

    def pop(self) -> Match:
        _, match = heapq.heappop(self._heap)
        self._paths.discard((match.nodes, match.edges))
        return match

    def peek(self) -> Optional[Match]:
        return self._heap[0][1] if self._heap else None

    def ranked(self) -> List[Match]:
        """Matches in descending order without consuming the heap."""
        return [match for _, match in sorted(self._heap)]

    def top(self, n: int) -> "MatchSet":
        result = MatchSet(self.ranked()[:n], self.diagnostic)
        result.stats = self.stats
        return result

    def best_pss(self) -> Optional[float]:
        return self._heap[0][1].pss if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def __iter__(self) -> Iterator[Match]:
        return iter(self.ranked())

    def __repr__(self) -> str:
        return f"MatchSet(size={len(self._heap)}, best={self.best_pss()})"


@dataclass
class TraceEvent:
    """Frontier state after one pop."""

    popped: PartialPath
    frontier: Tuple[float, ...]


@dataclass
class SearchStats:
    """Counters for one sub-query search."""

    pops: int = 0
    expansions: int = 0
    enqueued: int = 0
    pruned: int = 0
    dropped_at_budget: int = 0
    max_frontier: int = 0
    touched_nodes: Set[int] = field(default_factory=set)
    touched_edges: Set[int] = field(default_factory=set)
    trace: List[TraceEvent] = field(default_factory=list)
    semantic_graph_seconds: float = 0.0
    search_seconds: float = 0.0
    materialized_edges: int = 0


def exact_pss(match: Union[Match, Sequence[float]]) -> float:
    """Return the geometric mean of a match's aligned weights.

    Raises:
        ContractViolation: No weights, or a weight outside (0, 1].
    """
    weights = match.weights if isinstance(match, Match) else tuple(match)
    if not weights:
        raise ContractViolation("A match needs at least one edge")
    product = 1.0
    for weight in weights:
        if not 0.0 < weight <= 1.0:
            raise ContractViolation(f"Weight {weight} outside (0, 1]")
        product *= weight
    return product ** (1.0 / len(weights))


def max_adjacent_weight(
    g: KnowledgeGraph, space: PredicateSpace, u: int, sub: SubQueryGraph
) -> float:
    """Return m(u): the best weight of any incident edge against any query edge."""
    best = 0.0
    for edge, _ in g.neighbors(u):
        graph_predicate = g.predicate_name(edge.predicate)
        for query_predicate in sub.predicates:
            weight = space.edge_weight(query_predicate, graph_predicate)
            if weight > best:
                best = weight
    return best


def estimate_pss(p: PartialPath, m_ui: float, n_hat: int) -> float:
    """Return the exact pss of a complete path, else (W_si * m(u_i))^(1/n_hat)."""
    if p.complete:
        return exact_pss(p.aligned[-1] or ())
    return (p.explored_product * m_ui) ** (1.0 / n_hat)


class SemanticGraph:
    """Edge weights of one sub-query's semantic graph, computed on first touch.

    Weights depend only on the graph predicate, so they are memoized per
    (query edge, graph predicate); touched edges are tracked separately.
    """

    def __init__(
        self,
        g: KnowledgeGraph,
        space: PredicateSpace,
        sub: SubQueryGraph,
        eager: bool = False,
    ) -> None:
        self.graph = g
        self.space = space
        self.query_predicates = sub.predicates
        self._weights: Dict[int, Tuple[float, ...]] = {}
        self._node_max: Dict[int, float] = {}
        self.materialized: Set[int] = set()
        self.seconds = 0.0
        if eager:
            started = time.perf_counter()
            for pid in range(len(g.predicates)):
                self._predicate_weights(pid)
            self.materialized = set(range(g.num_edges))
            self.seconds = time.perf_counter() - started

    def _predicate_weights(self, pid: int) -> Tuple[float, ...]:
        weights = self._weights.get(pid)
        if weights is None:
            graph_predicate = self.graph.predicate_name(pid)
            weights = tuple(
                self.space.edge_weight(q, graph_predicate) for q in self.query_predicates
            )
            self._weights[pid] = weights
        return weights

    def weights(self, edge: Edge) -> Tuple[float, ...]:
        """Return the edge's weight against each query edge, in path order."""
        weights = self._weights.get(edge.predicate)
        if weights is None:
            started = time.perf_counter()
            weights = self._predicate_weights(edge.predicate)
            self.seconds += time.perf_counter() - started
        self.materialized.add(edge.index)
        return weights

    def max_weight(self, u: int) -> float:
        """Return m(u), memoized per node; 0 for isolated nodes."""
        best = self._node_max.get(u)
        if best is None:
            best = 0.0
            for edge, _ in self.graph.neighbors(u):
                for weight in self.weights(edge):
                    if weight > best:
                        best = weight
            self._node_max[u] = best
        return best


class SearchWorker:
    """Frontier, visited set and match set of one sub-query search.

    step_exact() performs one pop of the exact best-first search; step_anytime()
    performs one expansion of the time-bounded variant, which records complete
    matches when they are generated and never enqueues them.
    """

    def __init__(
        self,
        sub: SubQueryGraph,
        g: KnowledgeGraph,
        space: PredicateSpace,
        lib: TransformationLibrary,
        cfg: SearchConfig,
        index: int = 0,
        trace: bool = False,
    ) -> None:
        self.sub = sub
        self.graph = g
        self.cfg = cfg
        self.index = index
        self.trace = trace
        self.semantic = SemanticGraph(g, space, sub, eager=cfg.eager_semantic_graph)
        self.stats = SearchStats()
        self.matches = MatchSet()

        m = len(sub.edges)
        self._m = m
        self._exponent = 1.0 / cfg.n_hat
        self.seeds = sorted(node_matches(sub.spec(0), lib, g))
        self.targets: FrozenSet[int] = node_matches(sub.spec(m), lib, g)
        # boundary[j]: nodes allowed where segment j hands over to segment j + 1
        self._boundary: List[Optional[FrozenSet[int]]] = [None] * (m + 1)
        for j in range(1, m):
            spec = sub.spec(j)
            if spec.kind is not NodeKind.WILDCARD:
                self._boundary[j] = node_matches(spec, lib, g)
        self._visited: Set[int] = set(self.seeds)
        self._frontier: List[Tuple[SortKey, PartialPath]] = []

        if not self.seeds:
            self.matches.diagnostic = "empty-start"
            _LOGGER.warning(f"Sub-query {sub.describe()} has no start candidates")
        for seed in self.seeds:
            alignment = (1.0,) + (0.0,) * m
            aligned: Tuple[Optional[Tuple[float, ...]], ...] = ((),) + (None,) * m
            bound = self.semantic.max_weight(seed) if cfg.prune else 1.0
            estimate = (1.0 * bound) ** self._exponent
            self.stats.touched_nodes.add(seed)
            self._offer(PartialPath((seed,), (), alignment, aligned, estimate))
        self.matches.stats = self.stats

    @property
    def frontier_size(self) -> int:
        return len(self._frontier)

    def frontier_estimates(self) -> Tuple[float, ...]:
        return tuple(sorted((path.estimate for _, path in self._frontier), reverse=True))

    def _offer(self, path: PartialPath) -> None:
        """Enqueue a path unless its estimate falls below tau."""
        if path.estimate <= 0.0 or (
            path.estimate < self.cfg.tau and (self.cfg.prune or path.complete)
        ):
            self.stats.pruned += 1
            return
        heapq.heappush(self._frontier, (path.sort_key, path))
        self.stats.enqueued += 1
        if len(self._frontier) > self.stats.max_frontier:
            self.stats.max_frontier = len(self._frontier)

    def _extend(self, path: PartialPath, edge: Edge, other: int) -> Optional[PartialPath]:
        weights = self.semantic.weights(edge)
        old = path.alignment
        old_aligned = path.aligned
        at = path.last
        alignment = [0.0] * (self._m + 1)
        aligned: List[Optional[Tuple[float, ...]]] = [None] * (self._m + 1)
        for j in range(1, self._m + 1):
            weight = weights[j - 1]
            if weight <= 0.0:
                continue
            stay = old[j]
            advance = old[j - 1]
            if j > 1 and advance > 0.0:
                boundary = self._boundary[j - 1]
                if boundary is not None and at not in boundary:
                    advance = 0.0
            if stay <= 0.0 and advance <= 0.0:
                continue
            if stay >= advance:
                alignment[j] = stay * weight
                aligned[j] = (old_aligned[j] or ()) + (weight,)
            else:
                alignment[j] = advance * weight
                aligned[j] = (old_aligned[j - 1] or ()) + (weight,)
        if not any(alignment):
            return None

        nodes = path.nodes + (other,)
        edges = path.edges + (edge.index,)
        complete = alignment[self._m] > 0.0 and other in self.targets
        if complete:
            estimate = exact_pss(aligned[self._m] or ())
        else:
            bound = self.semantic.max_weight(other) if self.cfg.prune else 1.0
            estimate = (max(alignment) * bound) ** self._exponent
        return PartialPath(nodes, edges, tuple(alignment), tuple(aligned), estimate, complete)

    def _children(self, path: PartialPath) -> Iterator[PartialPath]:
        search_scope = self.cfg.visited_scope is VisitedScope.SEARCH
        for edge, other in self.graph.neighbors(path.last):
            if search_scope:
                if other in self._visited:
                    continue
            elif other in path.nodes:
                continue
            child = self._extend(path, edge, other)
            if child is None:
                continue
            if search_scope:
                self._visited.add(other)
            self.stats.touched_nodes.add(other)
            self.stats.touched_edges.add(edge.index)
            if not child.complete and child.hops >= self.cfg.n_hat:
                self.stats.dropped_at_budget += 1
                continue
            yield child

    def _record(self, popped: PartialPath) -> None:
        if self.trace:
            self.stats.trace.append(TraceEvent(popped, self.frontier_estimates()))

    def step_exact(self) -> bool:
        """Pop once; return False when the search is finished."""
        if not self._frontier or len(self.matches) >= self.cfg.limit:
            return False
        started = time.perf_counter()
        _, path = heapq.heappop(self._frontier)
        self.stats.pops += 1
        if path.complete:
            self.matches.push(path.to_match())
            self._record(path)
        else:
            self.stats.expansions += 1
            for child in self._children(path):
                self._offer(child)
            self._record(path)
        self._account(started)
        return bool(self._frontier) and len(self.matches) < self.cfg.limit

    def step_anytime(self) -> bool:
        """Expand the best frontier entry; return False once the frontier is empty."""
        if not self._frontier:
            return False
        started = time.perf_counter()
        _, path = heapq.heappop(self._frontier)
        self.stats.pops += 1
        self.stats.expansions += 1
        for child in self._children(path):
            if child.complete:
                if child.estimate >= self.cfg.tau:
                    self.matches.push(child.to_match())
                else:
                    self.stats.pruned += 1
            else:
                self._offer(child)
        self._record(path)
        self._account(started)
        return bool(self._frontier)

    def _account(self, started: float) -> None:
        self.stats.search_seconds += time.perf_counter() - started
        self.stats.semantic_graph_seconds = self.semantic.seconds
        self.stats.materialized_edges = len(self.semantic.materialized)


def astar_search(
    sub: SubQueryGraph,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    cfg: SearchConfig,
    trace: bool = False,
) -> MatchSet:
    """Return the top c*k matches of a sub-query by pss.

    Frontier entries are ranked by estimated pss, which never underestimates
    any completion, so matches are popped in globally descending pss order.
    """
    worker = SearchWorker(sub, g, space, lib, cfg, trace=trace)
    while worker.step_exact():
        pass
    stats = worker.stats
    _LOGGER.debug(
        f"A* on {sub.describe()}: {len(worker.matches)} match(es), {stats.expansions} "
        f"expansion(s), {stats.pruned} pruned, max frontier {stats.max_frontier}"
    )
    return worker.matches
