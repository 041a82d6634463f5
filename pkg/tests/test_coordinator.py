"""Tests for the deadline coordinator."""

import time
import unittest

from kgsearch.const import DEFAULT_DEADLINE_TOLERANCE
from kgsearch.coordinator import (
    MonotonicClock,
    ProgressReport,
    SearchCoordinator,
    VirtualClock,
    calibrate_assembly_time,
    time_bounded_search,
    time_estimate,
)
from kgsearch.embedding import WeightTableSpace
from kgsearch.fixtures import FRONTIER_N_HAT, FRONTIER_TAU, frontier_example, random_instance
from kgsearch.graph import build_graph
from kgsearch.library import NodeKind, QueryNodeSpec, TransformationLibrary
from kgsearch.query import QueryEdge, QueryGraph, QueryNode, candidate_sub_queries
from kgsearch.search import SearchConfig, VisitedScope, astar_search

# pop counts below come from the per-path revisit trace
PATH = VisitedScope.PATH


def _pss(matches):
    return [round(m.pss, 9) for m in matches.ranked()]


def _dense_without_goal(size=60):
    """Complete graph whose query target matches nothing, so the frontier never empties."""
    names = [f"n{i}" for i in range(size)]
    triples = [(a, "p", b) for i, a in enumerate(names) for b in names[i + 1 :]]
    types = {name: ("Hop",) for name in names}
    types["n0"] = ("Start",)
    graph = build_graph(triples, types)
    nodes = [
        QueryNode(0, "start", QueryNodeSpec(NodeKind.SPECIFIC, frozenset({"Start"}), "n0")),
        QueryNode(1, "goal", QueryNodeSpec(NodeKind.TARGET, frozenset({"Goal"}))),
    ]
    sub = candidate_sub_queries(QueryGraph(nodes, [QueryEdge(0, 0, 1, "p")]), 1)[0]
    return graph, WeightTableSpace({}, ["p"]), TransformationLibrary().bind(graph), sub


class TestClocks(unittest.TestCase):
    """Test clock implementations."""

    def test_virtual_clock_ticks(self):
        clock = VirtualClock(0.25)
        self.assertEqual(clock.now(), 0.0)
        clock.tick()
        clock.tick()
        self.assertEqual(clock.now(), 0.5)

    def test_monotonic_clock_advances(self):
        clock = MonotonicClock()
        first = clock.now()
        self.assertGreaterEqual(clock.now(), first)


class TestTimeEstimate(unittest.TestCase):
    """Test the deadline estimate."""

    def setUp(self):
        self.cfg = SearchConfig(time_bound=8.0, alert_ratio=50.0, assembly_time_per_match=0.25)

    def test_fires_at_alert_ratio(self):
        reports = [ProgressReport(0, 2.0, 3), ProgressReport(1, 1.0, 5)]
        self.assertTrue(time_estimate(reports, self.cfg))

    def test_below_alert_ratio(self):
        reports = [ProgressReport(0, 2.0, 3), ProgressReport(1, 1.0, 4)]
        self.assertFalse(time_estimate(reports, self.cfg))

    def test_no_bound_never_fires(self):
        reports = [ProgressReport(0, 1e9, 10**6)]
        self.assertFalse(time_estimate(reports, SearchConfig()))
        self.assertFalse(time_estimate(reports, SearchConfig(time_bound=float("inf"))))
        self.assertFalse(time_estimate([], self.cfg))


class TestSearchCoordinator(unittest.TestCase):
    """Test deterministic and threaded coordination."""

    def setUp(self):
        self.graph, self.space, self.library, query = frontier_example()
        self.sub = candidate_sub_queries(query, 1)[0]

    def coordinator(self, cfg, **kwargs):
        return SearchCoordinator(self.graph, self.space, self.library, cfg, **kwargs)

    def test_runs_to_completion_without_deadline(self):
        cfg = SearchConfig(tau=FRONTIER_TAU, n_hat=FRONTIER_N_HAT, visited_scope=PATH)
        coordinator = self.coordinator(cfg, deterministic=True, clock_factory=VirtualClock)
        worker = coordinator.add_worker(self.sub)
        coordinator.run()
        self.assertFalse(coordinator.fired)
        self.assertEqual(_pss(worker.matches), [0.75, 0.74])
        self.assertEqual(worker.stats.pops, 6)
        self.assertAlmostEqual(coordinator.elapsed, 0.006)

    def test_deadline_keeps_early_matches(self):
        """Four virtual milliseconds only reach the 0.74 match."""
        cfg = SearchConfig(
            tau=FRONTIER_TAU,
            n_hat=FRONTIER_N_HAT,
            visited_scope=PATH,
            time_bound=0.0035,
            alert_ratio=100.0,
            assembly_time_per_match=0.0,
        )
        coordinator = self.coordinator(
            cfg, deterministic=True, clock_factory=lambda: VirtualClock(0.001)
        )
        worker = coordinator.add_worker(self.sub)
        coordinator.run()
        self.assertTrue(coordinator.fired)
        self.assertEqual(worker.stats.pops, 4)
        self.assertEqual(_pss(worker.matches), [0.74])

    def test_zero_deadline_fires_before_search(self):
        cfg = SearchConfig(tau=FRONTIER_TAU, time_bound=0.0)
        coordinator = self.coordinator(cfg)
        worker = coordinator.add_worker(self.sub)
        coordinator.run()
        self.assertTrue(coordinator.fired)
        self.assertEqual(worker.stats.pops, 0)
        self.assertEqual(len(worker.matches), 0)

    def test_threads_match_sequential_search(self):
        """Exact workers on threads return what a plain A* run returns."""
        cfg = SearchConfig(tau=0.3, k=5)
        for seed in range(5):
            instance = random_instance(seed)
            subs = [instance.sub_query(), instance.sub_query()]
            coordinator = SearchCoordinator(
                instance.graph, instance.space, instance.library, cfg, anytime=False
            )
            for sub in subs:
                coordinator.add_worker(sub)
            results = coordinator.run()
            for sub, matches in zip(subs, results):
                expected = astar_search(sub, instance.graph, instance.space, instance.library, cfg)
                self.assertEqual(
                    [(m.nodes, m.pss) for m in matches.ranked()],
                    [(m.nodes, m.pss) for m in expected.ranked()],
                )
            self.assertFalse(coordinator.fired)

    def test_running_elapsed_overrides_stale_reports(self):
        cfg = SearchConfig(time_bound=1.0, alert_ratio=100.0)
        coordinator = self.coordinator(cfg)
        coordinator.receive(ProgressReport(0, 0.1, 0))
        self.assertFalse(coordinator.should_stop())
        self.assertTrue(coordinator.should_stop(running_elapsed=1.0))
        coordinator.receive(ProgressReport(0, 0.1, 0, finished=True))
        self.assertFalse(coordinator.should_stop(running_elapsed=1.0))


class TestHelpers(unittest.TestCase):
    """Test the single sub-query entry point and calibration."""

    def test_time_bounded_search_without_coordinator(self):
        graph, space, library, query = frontier_example()
        sub = candidate_sub_queries(query, 1)[0]
        cfg = SearchConfig(tau=FRONTIER_TAU, n_hat=FRONTIER_N_HAT, visited_scope=PATH)
        matches = time_bounded_search(sub, graph, space, library, cfg)
        self.assertEqual(_pss(matches), [0.75, 0.74])

    def test_wall_clock_deadline_within_tolerance(self):
        graph, space, library, sub = _dense_without_goal()
        bound = 0.2
        cfg = SearchConfig(
            tau=0.0,
            n_hat=4,
            time_bound=bound,
            assembly_time_per_match=0.0,
            visited_scope=PATH,
        )
        for deterministic in (True, False):
            with self.subTest(deterministic=deterministic):
                coordinator = SearchCoordinator(
                    graph,
                    space,
                    library,
                    cfg,
                    deterministic=deterministic,
                    clock_factory=MonotonicClock,
                )
                started = time.perf_counter()
                time_bounded_search(sub, graph, space, library, cfg, coordinator)
                wall = time.perf_counter() - started
                self.assertTrue(coordinator.fired)
                self.assertGreaterEqual(coordinator.elapsed, bound * cfg.alert_ratio / 100.0)
                self.assertLessEqual(wall, bound * (1.0 + DEFAULT_DEADLINE_TOLERANCE))

    def test_calibration_is_positive(self):
        self.assertGreater(calibrate_assembly_time(n_matches=200), 0.0)


if __name__ == "__main__":
    unittest.main()
