"""Per-sub-query search workers and the deadline coordinator."""

import logging
import math
import queue
import random
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence

from .const import DEFAULT_CALIBRATION_MATCHES, DEFAULT_POLL_INTERVAL, DEFAULT_VIRTUAL_TICK
from .embedding import PredicateSpace
from .graph import KnowledgeGraph
from .library import TransformationLibrary
from .query import SubQueryGraph
from .search import Match, MatchSet, SearchConfig, SearchWorker

_LOGGER = logging.getLogger(__name__)


class Clock(ABC):
    """Time source for search workers."""

    @abstractmethod
    def now(self) -> float:
        """Return the current time in seconds."""

    def tick(self) -> None:
        """Called once per expansion."""


class MonotonicClock(Clock):
    """Wall clock based on time.perf_counter."""

    def now(self) -> float:
        return time.perf_counter()


class VirtualClock(Clock):
    """Clock advancing a fixed amount per expansion."""

    def __init__(self, step: float = DEFAULT_VIRTUAL_TICK) -> None:
        self.step = step
        self._now = 0.0
        self._ticks = 0

    def now(self) -> float:
        return self._now

    def tick(self) -> None:
        self._ticks += 1
        self._now = self._ticks * self.step


@dataclass(frozen=True)
class ProgressReport:
    """Elapsed search time and matches found by one worker."""

    worker: int
    elapsed: float
    matches_found: int
    finished: bool = False


def time_estimate(reports: Sequence[ProgressReport], cfg: SearchConfig) -> bool:
    """Return True once max{T_A*} + sum|M_i| * t reaches T * r%."""
    if cfg.time_bound is None or math.isinf(cfg.time_bound) or not reports:
        return False
    per_match = cfg.assembly_time_per_match or 0.0
    estimate = max(r.elapsed for r in reports) + sum(r.matches_found for r in reports) * per_match
    return estimate >= cfg.time_bound * cfg.alert_ratio / 100.0


class SearchCoordinator:
    """Runs one worker per sub-query and broadcasts the stop signal.

    In deterministic mode workers run round-robin on the calling thread, each
    with its own clock from clock_factory (use VirtualClock for reproducible
    deadlines). Otherwise each worker runs on its own thread, reports progress
    over a queue and stops within one expansion of the stop event being set.
    """

    def __init__(
        self,
        g: KnowledgeGraph,
        space: PredicateSpace,
        lib: TransformationLibrary,
        cfg: SearchConfig,
        anytime: bool = True,
        deterministic: bool = False,
        clock_factory: Optional[Callable[[], Clock]] = None,
        trace: bool = False,
    ) -> None:
        self.graph = g
        self.space = space
        self.library = lib
        self.cfg = cfg
        self.anytime = anytime
        self.deterministic = deterministic
        self.trace = trace
        if clock_factory is None:
            shared = MonotonicClock()
            clock_factory = lambda: shared  # noqa: E731
        self.clock_factory = clock_factory
        self.workers: List[SearchWorker] = []
        self.latest: Dict[int, ProgressReport] = {}
        self.stop_event = threading.Event()
        self.fired = False
        self.elapsed = 0.0
        self._messages: "queue.Queue[ProgressReport]" = queue.Queue()

    def add_worker(self, sub: SubQueryGraph) -> SearchWorker:
        worker = SearchWorker(
            sub,
            self.graph,
            self.space,
            self.library,
            self.cfg,
            index=len(self.workers),
            trace=self.trace,
        )
        self.workers.append(worker)
        return worker

    def receive(self, report: ProgressReport) -> None:
        self.latest[report.worker] = report

    def should_stop(self, running_elapsed: Optional[float] = None) -> bool:
        """Evaluate the deadline estimate on the latest reports."""
        reports = list(self.latest.values())
        if running_elapsed is not None:
            reports = [
                r
                if r.finished or r.elapsed >= running_elapsed
                else replace(r, elapsed=running_elapsed)
                for r in reports
            ]
        return time_estimate(reports, self.cfg)

    def _step(self, worker: SearchWorker) -> bool:
        return worker.step_anytime() if self.anytime else worker.step_exact()

    def run(self) -> List[MatchSet]:
        """Run every worker until it finishes or the deadline estimate fires."""
        for worker in self.workers:
            self.receive(ProgressReport(worker.index, 0.0, len(worker.matches)))
        if self.should_stop():
            self._fire()
        elif self.deterministic:
            self._run_round_robin()
        else:
            self._run_threads()
        _LOGGER.debug(
            f"Coordinator finished {len(self.workers)} worker(s); deadline fired: {self.fired}"
        )
        return [worker.matches for worker in self.workers]

    def _fire(self) -> None:
        self.fired = True
        self.stop_event.set()

    def _run_round_robin(self) -> None:
        clocks = [self.clock_factory() for _ in self.workers]
        starts = [clock.now() for clock in clocks]
        active = list(range(len(self.workers)))
        while active:
            for i in list(active):
                running = self._step(self.workers[i])
                clocks[i].tick()
                elapsed = clocks[i].now() - starts[i]
                self.elapsed = max(self.elapsed, elapsed)
                if not running:
                    active.remove(i)
                self.receive(
                    ProgressReport(i, elapsed, len(self.workers[i].matches), finished=not running)
                )
                if self.should_stop():
                    self._fire()
                    return

    def _work(self, worker: SearchWorker, clock: Clock, start: float) -> None:
        alert = None
        if self.cfg.time_bound is not None and not math.isinf(self.cfg.time_bound):
            alert = self.cfg.time_bound * self.cfg.alert_ratio / 100.0
        steps = 0
        running = True
        while running and not self.stop_event.is_set():
            running = self._step(worker)
            clock.tick()
            steps += 1
            elapsed = clock.now() - start
            if not running or steps % self.cfg.report_every == 0:
                self._messages.put(
                    ProgressReport(worker.index, elapsed, len(worker.matches), not running)
                )
            if alert is not None and elapsed >= alert:
                break

    def _run_threads(self) -> None:
        clock = self.clock_factory()
        start = clock.now()
        with ThreadPoolExecutor(
            max_workers=max(1, len(self.workers)), thread_name_prefix="kgsearch-worker"
        ) as pool:
            futures = [pool.submit(self._work, worker, clock, start) for worker in self.workers]
            while True:
                try:
                    self.receive(self._messages.get(timeout=DEFAULT_POLL_INTERVAL))
                except queue.Empty:
                    pass
                self.elapsed = clock.now() - start
                if self.should_stop(running_elapsed=self.elapsed):
                    self._fire()
                    break
                if all(future.done() for future in futures):
                    break
            for future in futures:
                future.result()
        while not self._messages.empty():
            self.receive(self._messages.get_nowait())
        self.elapsed = clock.now() - start


def time_bounded_search(
    sub: SubQueryGraph,
    g: KnowledgeGraph,
    space: PredicateSpace,
    lib: TransformationLibrary,
    cfg: SearchConfig,
    coordinator: Optional[SearchCoordinator] = None,
) -> MatchSet:
    """Collect matches for one sub-query until the frontier empties or the deadline fires.

    Without a coordinator a deterministic single-worker coordinator on the wall
    clock is used.
    """
    if coordinator is None:
        coordinator = SearchCoordinator(g, space, lib, cfg, anytime=True, deterministic=True)
    worker = coordinator.add_worker(sub)
    coordinator.run()
    return worker.matches


def calibrate_assembly_time(
    n_matches: int = DEFAULT_CALIBRATION_MATCHES, n_sets: int = 2, seed: int = 0
) -> float:
    """Measure the per-match assembly time t from a warm-up join."""
    from .assembly import AssemblyState, ta_assemble

    rng = random.Random(seed)
    sets = []
    per_set = max(1, n_matches // n_sets)
    pivots = max(1, per_set // 4)
    for i in range(n_sets):
        matches = [
            Match((i, pivot), (j,), (weight,), weight)
            for j, (pivot, weight) in enumerate(
                (rng.randrange(pivots), rng.uniform(0.5, 1.0)) for _ in range(per_set)
            )
        ]
        sets.append(MatchSet(matches))
    state = AssemblyState()
    started = time.perf_counter()
    ta_assemble(sets, k=10, state=state, exhaustive=True)
    elapsed = time.perf_counter() - started
    per_match = elapsed / max(1, state.sorted_accesses)
    _LOGGER.info(f"Calibrated assembly time: {per_match * 1e6:.2f} us per match")
    return per_match
