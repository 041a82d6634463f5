"""Threshold-algorithm assembly of sub-query matches at the pivot node."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from .search import Match, MatchSet

_LOGGER = logging.getLogger(__name__)

NameOf = Callable[[int], Any]


@dataclass
class FinalMatch:
    """Pivot-keyed joined answer with its match score bounds."""

    pivot: int
    slots: List[Optional[Match]]
    lower: float = 0.0
    upper: float = 0.0
    name: Optional[str] = None

    @property
    def score(self) -> float:
        """Sum of pss over filled slots."""
        return self.lower

    @property
    def complete(self) -> bool:
        return all(slot is not None for slot in self.slots)

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    def identity(self) -> Tuple[int, Tuple[Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]], ...]]:
        """Pivot plus per-slot (nodes, edges), used to compare result sets."""
        return (
            self.pivot,
            tuple(None if slot is None else (slot.nodes, slot.edges) for slot in self.slots),
        )


@dataclass
class RoundRecord:
    """Threshold values after one round of sorted access.

    upper is the round's U and may rise when a candidate leaves the top-k;
    threshold is the running minimum of upper over the rounds so far.
    """

    round: int
    lower_k: float
    upper: float
    cursor_sum: float
    threshold: float
    stop: bool
    top: Tuple[int, ...]
    bounds: Dict[int, Tuple[float, float]] = field(default_factory=dict)


@dataclass
class AssemblyState:
    """Cursor positions and candidate table of one assembly run."""

    cursors: List[float] = field(default_factory=list)
    positions: List[int] = field(default_factory=list)
    exhausted: List[bool] = field(default_factory=list)
    candidates: Dict[int, FinalMatch] = field(default_factory=dict)
    rounds: int = 0
    sorted_accesses: int = 0
    history: List[RoundRecord] = field(default_factory=list)
    track_bounds: bool = False
    diagnostic: Optional[str] = None
    stopped_early: bool = False

    @property
    def cursor_sum(self) -> float:
        total = 0.0
        for cursor in self.cursors:
            total += cursor
        return total


def bounds(c: FinalMatch, s: AssemblyState) -> Tuple[float, float]:
    """Return (lower, upper) match score bounds of a candidate.

    An unfilled slot contributes 0 to the lower bound and the current cursor
    of its match set to the upper bound (0 once that set is exhausted).
    """
    lower = 0.0
    upper = 0.0
    for i, slot in enumerate(c.slots):
        if slot is not None:
            lower += slot.pss
            upper += slot.pss
        else:
            upper += s.cursors[i]
    return lower, upper


def _access(ranked: Sequence[Match], i: int, s: AssemblyState) -> None:
    match = ranked[s.positions[i]]
    s.positions[i] += 1
    s.sorted_accesses += 1
    s.cursors[i] = match.pss
    if s.positions[i] >= len(ranked):
        s.exhausted[i] = True
        s.cursors[i] = 0.0
    candidate = s.candidates.get(match.pivot)
    if candidate is None:
        candidate = FinalMatch(match.pivot, [None] * len(s.cursors))
        s.candidates[match.pivot] = candidate
    if candidate.slots[i] is None:
        candidate.slots[i] = match


def _ranking(s: AssemblyState, name_of: Optional[NameOf]) -> List[FinalMatch]:
    for candidate in s.candidates.values():
        candidate.lower, candidate.upper = bounds(candidate, s)

    def key(candidate: FinalMatch) -> Tuple[float, Any]:
        label = name_of(candidate.pivot) if name_of is not None else candidate.pivot
        return (-candidate.lower, label)

    return sorted(s.candidates.values(), key=key)


def _can_stop(
    ranked: List[FinalMatch], k: int, s: AssemblyState, unguarded: bool
) -> Tuple[bool, float, float]:
    """Return (stop, L, U) for the current round."""
    top, rest = ranked[:k], ranked[k:]
    lower_k = top[-1].lower if len(top) >= k else -math.inf
    outside = max((c.upper for c in rest), default=0.0)
    if unguarded:
        return lower_k >= outside, lower_k, outside
    unseen = s.cursor_sum
    upper = max(outside, unseen)
    # ties at L are safe only against exact candidates, which already rank by name
    stop = (
        lower_k >= upper
        and all(c.exact for c in top)
        and unseen < lower_k
        and all(c.exact or c.upper < lower_k for c in rest)
    )
    return stop, lower_k, upper


def ta_assemble(
    match_sets: Sequence[MatchSet],
    k: int,
    unguarded: bool = False,
    state: Optional[AssemblyState] = None,
    name_of: Optional[NameOf] = None,
    exhaustive: bool = False,
) -> List[FinalMatch]:
    """Join match sets at their pivot and return the top-k final matches.

    Sets are read round-robin in descending pss order; each round updates the
    candidate bounds and stops once the k-th best lower bound reaches the
    threshold U. With unguarded, U ignores pivots not yet seen in any
    set and partially filled top-k candidates are accepted.

    Args:
        match_sets: one MatchSet per sub-query, in sub-query order.
        k: number of final matches.
        unguarded: use the threshold without the unseen-pivot term.
        state: optional state to inspect counters and round history.
        name_of: pivot id to name, used for tie-breaks and FinalMatch.name.
        exhaustive: read every set to the end (calibration).
    """
    s = state if state is not None else AssemblyState()
    ranked_sets = [match_set.ranked() for match_set in match_sets]
    s.cursors = [1.0 if ranked else 0.0 for ranked in ranked_sets]
    s.positions = [0] * len(ranked_sets)
    s.exhausted = [not ranked for ranked in ranked_sets]
    s.candidates = {}

    if all(s.exhausted):
        s.diagnostic = "no-matches"
        _LOGGER.warning("Assembly received only empty match sets")
        return []

    ranking: List[FinalMatch] = []
    threshold = math.inf
    while not all(s.exhausted):
        for i, ranked in enumerate(ranked_sets):
            if not s.exhausted[i]:
                _access(ranked, i, s)
        s.rounds += 1
        ranking = _ranking(s, name_of)
        stop, lower_k, upper = _can_stop(ranking, k, s, unguarded)
        threshold = min(threshold, upper)
        top = tuple(c.pivot for c in ranking[:k])
        record = RoundRecord(s.rounds, lower_k, upper, s.cursor_sum, threshold, stop, top)
        if s.track_bounds:
            record.bounds = {c.pivot: (c.lower, c.upper) for c in ranking}
        s.history.append(record)
        if stop and not exhaustive and not all(s.exhausted):
            s.stopped_early = True
            break

    result = ranking[:k]
    if name_of is not None:
        for candidate in result:
            candidate.name = str(name_of(candidate.pivot))
    _LOGGER.debug(
        f"Assembly finished after {s.rounds} round(s), {s.sorted_accesses} sorted access(es), "
        f"{len(s.candidates)} candidate(s); early stop: {s.stopped_early}"
    )
    return result


def assembly_cost_report(state: AssemblyState) -> Dict[str, int]:
    """Counters of an assembly run."""
    return {
        "sorted_accesses": state.sorted_accesses,
        "candidates_materialized": len(state.candidates),
        "rounds": state.rounds,
    }
