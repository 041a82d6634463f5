"""Query orchestration: decomposition, per-sub-query search and assembly."""

import asyncio
import functools
import logging
import math
import random
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Collection, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .assembly import AssemblyState, FinalMatch, assembly_cost_report, ta_assemble
from .const import (
    DEFAULT_NOISE_NEIGHBORS,
    DEFAULT_VIRTUAL_TICK,
    NOISE_EDGE,
    NOISE_NODE,
    REPORT_C1,
    REPORT_C2,
    REPORT_C3,
    REPORT_C4,
    REPORT_TOTAL,
)
from .coordinator import SearchCoordinator, VirtualClock, calibrate_assembly_time
from .embedding import PredicateSpace
from .errors import EvaluationError, QueryValidationError
from .graph import KnowledgeGraph
from .library import MappingTarget, QueryNodeSpec, TransformationLibrary
from .query import Decomposition, QueryGraph, decompose
from .search import Match, MatchSet, SearchConfig, astar_search

_LOGGER = logging.getLogger(__name__)


class QueryMode(Enum):
    """Exact top-k or anytime search under a time bound."""

    EXACT = "exact"
    TIME_BOUNDED = "time_bounded"


@dataclass(frozen=True)
class QueryRequest:
    """A query with its search configuration and mode.

    deterministic runs the workers round-robin on one thread with a
    VirtualClock advancing virtual_tick seconds per expansion.
    """

    query: QueryGraph
    config: SearchConfig = field(default_factory=SearchConfig)
    mode: QueryMode = QueryMode.EXACT
    deterministic: bool = False
    virtual_tick: float = DEFAULT_VIRTUAL_TICK

    def __post_init__(self) -> None:
        if self.mode is QueryMode.TIME_BOUNDED and self.config.time_bound is None:
            raise QueryValidationError("A time-bounded query needs a time bound")


@dataclass
class RunReport:
    """Timings and counters of one query run."""

    timings: Dict[str, float] = field(
        default_factory=lambda: dict.fromkeys(
            (REPORT_C1, REPORT_C2, REPORT_C3, REPORT_C4, REPORT_TOTAL), 0.0
        )
    )
    pivot: Optional[str] = None
    sub_queries: List[str] = field(default_factory=list)
    expansions: int = 0
    pruned: int = 0
    enqueued: int = 0
    touched_nodes: int = 0
    touched_edges: int = 0
    matches_per_sub_query: List[int] = field(default_factory=list)
    assembly: Dict[str, int] = field(default_factory=dict)
    calibration: Optional[float] = None
    deadline_fired: bool = False
    deadline_met: bool = True
    search_elapsed: float = 0.0
    embedding_load_seconds: float = 0.0
    diagnostics: List[str] = field(default_factory=list)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "record": "run_report",
            "timings": dict(self.timings),
            "pivot": self.pivot,
            "sub_queries": list(self.sub_queries),
            "expansions": self.expansions,
            "pruned": self.pruned,
            "enqueued": self.enqueued,
            "touched_nodes": self.touched_nodes,
            "touched_edges": self.touched_edges,
            "matches_per_sub_query": list(self.matches_per_sub_query),
            "assembly": dict(self.assembly),
            "calibration": self.calibration,
            "deadline_fired": self.deadline_fired,
            "deadline_met": self.deadline_met,
            "search_elapsed": self.search_elapsed,
            "embedding_load_seconds": self.embedding_load_seconds,
            "diagnostics": list(self.diagnostics),
        }


@dataclass
class QueryResult:
    """Ranked final matches and the run report."""

    matches: List[FinalMatch]
    report: RunReport
    decomposition: Optional[Decomposition] = None
    match_sets: List[MatchSet] = field(default_factory=list, repr=False)

    def pivot_names(self) -> List[str]:
        return [m.name if m.name is not None else str(m.pivot) for m in self.matches]

    def identities(self) -> Set[Any]:
        return {m.identity() for m in self.matches}

    def __len__(self) -> int:
        return len(self.matches)


def _merge_stats(report: RunReport, match_sets: Sequence[MatchSet]) -> float:
    """Fold search counters into the report; return summed memoization seconds."""
    semantic = 0.0
    for match_set in match_sets:
        report.matches_per_sub_query.append(len(match_set))
        if match_set.diagnostic:
            report.diagnostics.append(match_set.diagnostic)
        stats = match_set.stats
        if stats is None:
            continue
        report.expansions += stats.expansions
        report.pruned += stats.pruned
        report.enqueued += stats.enqueued
        report.touched_nodes += len(stats.touched_nodes)
        report.touched_edges += len(stats.touched_edges)
        semantic += stats.semantic_graph_seconds
    return semantic


def _exact_sets(
    decomposition: Decomposition,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    cfg: SearchConfig,
) -> List[MatchSet]:
    return [astar_search(sub, g, space, lib, cfg) for sub in decomposition.sub_queries]


def _anytime_sets(
    req: QueryRequest,
    decomposition: Decomposition,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    cfg: SearchConfig,
    report: RunReport,
) -> List[MatchSet]:
    clock_factory = None
    if req.deterministic:
        tick = req.virtual_tick
        clock_factory = lambda: VirtualClock(tick)  # noqa: E731
    coordinator = SearchCoordinator(
        g,
        space,
        lib,
        cfg,
        anytime=True,
        deterministic=req.deterministic,
        clock_factory=clock_factory,
    )
    for sub in decomposition.sub_queries:
        coordinator.add_worker(sub)
    match_sets = coordinator.run()
    report.deadline_fired = coordinator.fired
    report.search_elapsed = coordinator.elapsed
    return [match_set.top(cfg.limit) for match_set in match_sets]


def run_query(
    req: QueryRequest,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    embedding_load_seconds: float = 0.0,
) -> QueryResult:
    """Answer a query in exact or time-bounded mode.

    Exact mode joins the full top c*k of every sub-query and is globally
    optimal. Time-bounded mode runs the anytime search on every sub-query until
    the deadline estimate fires, then assembles what was found.
    """
    started = time.perf_counter()
    cfg = req.config
    report = RunReport(embedding_load_seconds=embedding_load_seconds)
    timed = req.mode is QueryMode.TIME_BOUNDED
    bound = cfg.time_bound if cfg.time_bound is not None else math.inf

    if timed and bound == 0:
        report.diagnostics.append("deadline-zero")
        report.deadline_fired = True
        report.timings[REPORT_TOTAL] = time.perf_counter() - started
        _LOGGER.warning("Time bound is zero; returning an empty result")
        return QueryResult([], report)

    phase = time.perf_counter()
    decomposition = decompose(req.query, g, lib)
    report.timings[REPORT_C1] = time.perf_counter() - phase
    report.pivot = req.query.label(decomposition.pivot)
    report.sub_queries = [sub.describe() for sub in decomposition.sub_queries]

    if timed:
        per_match = cfg.assembly_time_per_match
        if per_match is None:
            unbounded = math.isinf(bound) or req.deterministic
            per_match = 0.0 if unbounded else calibrate_assembly_time()
            cfg = replace(cfg, assembly_time_per_match=per_match)
        report.calibration = per_match

    phase = time.perf_counter()
    if timed:
        match_sets = _anytime_sets(req, decomposition, g, space, lib, cfg, report)
    else:
        match_sets = _exact_sets(decomposition, g, space, lib, cfg)
    search_wall = time.perf_counter() - phase
    semantic = min(search_wall, _merge_stats(report, match_sets))
    report.timings[REPORT_C2] = semantic
    report.timings[REPORT_C3] = search_wall - semantic

    phase = time.perf_counter()
    state = AssemblyState()
    matches = ta_assemble(
        match_sets,
        cfg.k,
        unguarded=cfg.unguarded_ta,
        state=state,
        name_of=lambda u: g.entity(u).name,
    )
    report.timings[REPORT_C4] = time.perf_counter() - phase
    report.assembly = assembly_cost_report(state)
    if state.diagnostic:
        report.diagnostics.append(state.diagnostic)

    report.timings[REPORT_TOTAL] = time.perf_counter() - started
    if timed:
        if req.deterministic:
            report.deadline_met = report.search_elapsed <= bound
        else:
            report.deadline_met = report.timings[REPORT_TOTAL] <= bound

    _LOGGER.info(
        f"Query answered with {len(matches)} match(es) in "
        f"{report.timings[REPORT_TOTAL] * 1000:.1f} ms ({req.mode.value})"
    )
    return QueryResult(matches, report, decomposition, match_sets)


async def async_run_query(
    req: QueryRequest,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    embedding_load_seconds: float = 0.0,
) -> QueryResult:
    """Run a query in the default executor."""
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(
        None, functools.partial(run_query, req, g, space, lib, embedding_load_seconds)
    )


def jaccard(approx: QueryResult, exact: QueryResult) -> float:
    """Return |A & B| / |A | B| over final-match identities; 1.0 for two empty results."""
    first = approx.identities()
    second = exact.identities()
    union = first | second
    if not union:
        return 1.0
    return len(first & second) / len(union)


def load_truth(path: Path) -> List[str]:
    """Read one correct pivot name per line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip() and not line.startswith("#")]


def evaluate(result: QueryResult, truth: Collection[str]) -> Tuple[float, float, float]:
    """Return (precision, recall, F1) of the returned pivot names.

    Raises:
        EvaluationError: truth is empty.
    """
    correct = set(truth)
    if not correct:
        raise EvaluationError("Truth set is empty")
    returned = set(result.pivot_names())
    hits = len(returned & correct)
    precision = hits / len(returned) if returned else 0.0
    recall = hits / len(correct)
    if precision == 0.0 or recall == 0.0:
        return precision, recall, 0.0
    return precision, recall, 2.0 / (1.0 / precision + 1.0 / recall)


def _node_alternatives(
    q: QueryGraph, lib: TransformationLibrary
) -> List[Tuple[int, str, str, List[str]]]:
    """(node, field, current term, replacement terms) for every swappable term."""
    options = []
    for node in q.nodes:
        spec = node.spec
        if spec.name_term is not None:
            forms: Set[str] = set()
            for canonical in sorted(lib.lookup_names(spec.name_term)):
                forms.update(lib.surface_forms(canonical, MappingTarget.NAME))
            forms.discard(spec.name_term)
            if forms:
                options.append((node.index, "name", spec.name_term, sorted(forms)))
        for term in sorted(spec.type_terms):
            forms = set()
            for canonical in sorted(lib.lookup_types(term)):
                forms.update(lib.surface_forms(canonical, MappingTarget.TYPE))
            forms.discard(term)
            if forms:
                options.append((node.index, "type", term, sorted(forms)))
    return options


def add_noise(
    q: QueryGraph,
    kind: str,
    rng_seed: int,
    lib: TransformationLibrary,
    space: Optional[PredicateSpace] = None,
    neighbors: int = DEFAULT_NOISE_NEIGHBORS,
) -> QueryGraph:
    """Return a copy of q with one node term or one predicate swapped.

    Node noise replaces a name or type with a synonym/abbreviation from the
    library; edge noise replaces a predicate with one of its most similar
    predicates in space. Returns q unchanged (with a warning) when nothing
    can be swapped.
    """
    rng = random.Random(rng_seed)
    if kind == NOISE_NODE:
        options = _node_alternatives(q, lib)
        if not options:
            _LOGGER.warning("No node of the query has a synonym or abbreviation; noise skipped")
            return q
        v, field_name, term, forms = options[rng.randrange(len(options))]
        replacement = forms[rng.randrange(len(forms))]
        spec = q.nodes[v].spec
        if field_name == "name":
            new_spec = QueryNodeSpec(spec.kind, spec.type_terms, replacement)
        else:
            types = (spec.type_terms - {term}) | {replacement}
            new_spec = QueryNodeSpec(spec.kind, frozenset(types), spec.name_term)
        _LOGGER.debug(f"Node noise on {q.label(v)}: {field_name} {term!r} -> {replacement!r}")
        return q.with_node_spec(v, new_spec)

    if kind == NOISE_EDGE:
        if space is None:
            raise QueryValidationError("Edge noise needs a predicate space")
        candidates = [
            (edge.index, [name for name, _ in space.similar_predicates(edge.predicate, neighbors)])
            for edge in q.edges
            if space.has_predicate(edge.predicate)
        ]
        candidates = [(index, names) for index, names in candidates if names]
        if not candidates:
            _LOGGER.warning("No query predicate has similar predicates; noise skipped")
            return q
        index, names = candidates[rng.randrange(len(candidates))]
        replacement = names[rng.randrange(len(names))]
        _LOGGER.debug(f"Edge noise on edge {index}: {q.edges[index].predicate} -> {replacement}")
        return q.with_edge_predicate(index, replacement)

    raise QueryValidationError(f"Unknown noise kind {kind!r}")


def apply_noise_batch(
    queries: Sequence[QueryGraph],
    kind: str,
    percent: float,
    seed: int,
    lib: TransformationLibrary,
    space: Optional[PredicateSpace] = None,
) -> List[QueryGraph]:
    """Add noise to percent% of a query batch, chosen by seed."""
    if not 0.0 <= percent <= 100.0:
        raise QueryValidationError(f"Noise percentage {percent} outside [0, 100]")
    rng = random.Random(seed)
    count = round(len(queries) * percent / 100.0)
    chosen = set(rng.sample(range(len(queries)), count))
    return [
        add_noise(query, kind, seed + i, lib, space) if i in chosen else query
        for i, query in enumerate(queries)
    ]


def render_path(match: Match, g: KnowledgeGraph) -> str:
    """Render a match as `name -pred- name ...`."""
    parts = [g.entity(match.nodes[0]).name]
    for edge_index, node in zip(match.edges, match.nodes[1:]):
        predicate = g.predicate_name(g.edges[edge_index].predicate)
        parts.append(f"-{predicate}- {g.entity(node).name}")
    return " ".join(parts)


def render_result(result: QueryResult, g: KnowledgeGraph) -> Iterable[Dict[str, Any]]:
    """Yield one record per final match followed by the run report record."""
    for rank, final in enumerate(result.matches, start=1):
        yield {
            "record": "match",
            "rank": rank,
            "pivot": g.entity(final.pivot).name,
            "score": final.score,
            "paths": [None if slot is None else render_path(slot, g) for slot in final.slots],
        }
    yield result.report.as_dict()
