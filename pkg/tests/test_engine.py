"""End-to-end tests for query orchestration."""

import asyncio
import unittest
from dataclasses import replace

from kgsearch.assembly import FinalMatch
from kgsearch.const import NOISE_EDGE, NOISE_NODE, REPORT_TOTAL
from kgsearch.engine import (
    QueryMode,
    QueryRequest,
    QueryResult,
    RunReport,
    add_noise,
    apply_noise_batch,
    async_run_query,
    evaluate,
    jaccard,
    load_truth,
    render_result,
    run_query,
)
from kgsearch.errors import EvaluationError, QueryValidationError
from kgsearch.fixtures import DATA_PATH, EXAMPLE_EXPECTED, example_fixture, random_instance
from kgsearch.oracles import oracle_run_query
from kgsearch.search import Match, SearchConfig, VisitedScope

# expected rankings were checked with per-path revisits
EXAMPLE_CONFIG = SearchConfig(tau=0.8, n_hat=4, k=5, visited_scope=VisitedScope.PATH)
LADDER = (0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 1000.0)


def _final(pivot, pss=0.5):
    return FinalMatch(pivot, [Match((0, pivot), (pivot,), (pss,), pss)], pss, pss)


def _result(*pivots):
    return QueryResult([_final(p) for p in pivots], RunReport())


class TestExampleQuery(unittest.TestCase):
    """The German cars query against the worked example."""

    def setUp(self):
        self.fixture = example_fixture()
        self.query = self.fixture.queries["example"]

    def run_example(self, query=None, **kwargs):
        req = QueryRequest(query or self.query, EXAMPLE_CONFIG, **kwargs)
        return run_query(req, self.fixture.graph, self.fixture.space, self.fixture.library)

    def test_ranking(self):
        result = self.run_example()
        self.assertEqual(result.pivot_names(), [name for name, _ in EXAMPLE_EXPECTED])
        for final, (_, score) in zip(result.matches, EXAMPLE_EXPECTED):
            self.assertAlmostEqual(final.score, score, places=3)
        self.assertAlmostEqual(result.matches[0].score, 1.891, places=9)

    def test_matches_oracle(self):
        result = self.run_example()
        expected = oracle_run_query(
            self.query,
            self.fixture.graph,
            self.fixture.space,
            self.fixture.library,
            EXAMPLE_CONFIG,
        )
        self.assertEqual([f.identity() for f in result.matches], [f.identity() for f in expected])

    def test_report(self):
        result = self.run_example()
        report = result.report
        self.assertEqual(report.pivot, "v1")
        self.assertEqual(
            report.sub_queries, ["v3 -product- v1", "v3 -nationality- v2 -designer- v1"]
        )
        self.assertEqual(len(report.matches_per_sub_query), 2)
        self.assertGreater(report.expansions, 0)
        self.assertTrue(all(value >= 0.0 for value in report.timings.values()))
        self.assertEqual(report.as_dict()["record"], "run_report")
        self.assertEqual(report.diagnostics, [])

    def test_time_bounded_with_ample_deadline(self):
        exact = self.run_example()
        cfg = replace(EXAMPLE_CONFIG, time_bound=60.0)
        req = QueryRequest(self.query, cfg, QueryMode.TIME_BOUNDED, deterministic=True)
        timed = run_query(req, self.fixture.graph, self.fixture.space, self.fixture.library)
        self.assertEqual(jaccard(timed, exact), 1.0)
        self.assertFalse(timed.report.deadline_fired)
        self.assertTrue(timed.report.deadline_met)
        self.assertEqual(timed.report.calibration, 0.0)

    def test_zero_deadline(self):
        cfg = SearchConfig(tau=0.8, time_bound=0.0)
        req = QueryRequest(self.query, cfg, QueryMode.TIME_BOUNDED)
        with self.assertLogs("kgsearch.engine", level="WARNING"):
            result = run_query(req, self.fixture.graph, self.fixture.space, self.fixture.library)
        self.assertEqual(len(result), 0)
        self.assertEqual(result.report.diagnostics, ["deadline-zero"])
        self.assertTrue(result.report.deadline_fired)

    def test_time_bounded_needs_bound(self):
        with self.assertRaises(QueryValidationError):
            QueryRequest(self.query, SearchConfig(), QueryMode.TIME_BOUNDED)

    def test_async_matches_sync(self):
        req = QueryRequest(self.query, EXAMPLE_CONFIG)
        result = asyncio.run(
            async_run_query(req, self.fixture.graph, self.fixture.space, self.fixture.library)
        )
        self.assertEqual(result.pivot_names(), self.run_example().pivot_names())

    def test_node_noise_resolved_by_library(self):
        """Synonyms and abbreviations swapped into the query give the same answer."""
        expected = self.run_example().identities()
        for seed in range(6):
            noisy = add_noise(self.query, NOISE_NODE, seed, self.fixture.library)
            self.assertNotEqual(noisy.to_document(), self.query.to_document())
            self.assertEqual(self.run_example(noisy).identities(), expected)

    def test_evaluate_against_truth(self):
        truth = load_truth(DATA_PATH / "example_truth.txt")
        self.assertEqual(truth, ["Audi_TT", "BMW_Z4"])
        precision, recall, f1 = evaluate(self.run_example(), truth)
        self.assertAlmostEqual(precision, 0.4)
        self.assertAlmostEqual(recall, 1.0)
        self.assertAlmostEqual(f1, 0.8 / 1.4)

    def test_render(self):
        records = list(render_result(self.run_example(), self.fixture.graph))
        self.assertEqual(len(records), 6)
        first = records[0]
        self.assertEqual((first["record"], first["rank"], first["pivot"]), ("match", 1, "Audi_TT"))
        self.assertEqual(
            first["paths"],
            [
                "Germany -country- Ingolstadt -assembly- Audi_TT",
                "Germany -nationality- Peter_Schreyer -designer- Audi_TT",
            ],
        )
        bmw = records[3]
        self.assertEqual(bmw["pivot"], "BMW_Z4")
        self.assertIsNone(bmw["paths"][1])
        self.assertEqual(records[-1]["record"], "run_report")
        self.assertIn(REPORT_TOTAL, records[-1]["timings"])


class TestNoise(unittest.TestCase):
    """Test query perturbation."""

    def setUp(self):
        self.fixture = example_fixture()
        self.query = self.fixture.queries["example"]

    def test_edge_noise_uses_similar_predicates(self):
        for seed in range(5):
            noisy = add_noise(
                self.query, NOISE_EDGE, seed, self.fixture.library, self.fixture.space, 3
            )
            changed = [
                (old.predicate, new.predicate)
                for old, new in zip(self.query.edges, noisy.edges)
                if old.predicate != new.predicate
            ]
            self.assertEqual(len(changed), 1)
            old, new = changed[0]
            similar = [name for name, _ in self.fixture.space.similar_predicates(old, 3)]
            self.assertIn(new, similar)

    def test_edge_noise_needs_space(self):
        with self.assertRaises(QueryValidationError):
            add_noise(self.query, NOISE_EDGE, 0, self.fixture.library)

    def test_unknown_kind(self):
        with self.assertRaises(QueryValidationError):
            add_noise(self.query, "typo", 0, self.fixture.library)

    def test_batch_percentage(self):
        queries = [self.query] * 4
        noisy = apply_noise_batch(queries, NOISE_NODE, 50.0, 1, self.fixture.library)
        changed = sum(n.to_document() != q.to_document() for n, q in zip(noisy, queries))
        self.assertEqual(changed, 2)
        untouched = apply_noise_batch(queries, NOISE_NODE, 0.0, 1, self.fixture.library)
        self.assertEqual([q.to_document() for q in untouched], [q.to_document() for q in queries])
        with self.assertRaises(QueryValidationError):
            apply_noise_batch(queries, NOISE_NODE, 150.0, 1, self.fixture.library)

    def test_same_seed_same_noise(self):
        first = add_noise(self.query, NOISE_NODE, 9, self.fixture.library)
        second = add_noise(self.query, NOISE_NODE, 9, self.fixture.library)
        self.assertEqual(first.to_document(), second.to_document())


class TestEvaluation(unittest.TestCase):
    """Test result comparison helpers."""

    def test_jaccard(self):
        self.assertAlmostEqual(jaccard(_result(1, 2), _result(2, 3)), 1.0 / 3.0)
        self.assertEqual(jaccard(_result(), _result()), 1.0)
        self.assertEqual(jaccard(_result(1), _result()), 0.0)

    def test_evaluate_without_hits(self):
        self.assertEqual(evaluate(_result(), ["x"]), (0.0, 0.0, 0.0))

    def test_empty_truth(self):
        with self.assertRaises(EvaluationError):
            evaluate(_result(1), [])


class TestJaccardLadder(unittest.TestCase):
    """Longer virtual deadlines never lose the exact top-1 answer."""

    def test_ladder_is_monotone(self):
        for seed in range(20):
            instance = random_instance(seed)
            g, space, lib = instance.graph, instance.space, instance.library
            base = dict(tau=0.3, n_hat=3, k=1, overfetch=10, visited_scope=VisitedScope.PATH)
            exact = run_query(QueryRequest(instance.query, SearchConfig(**base)), g, space, lib)
            ladder = []
            for bound in LADDER:
                req = QueryRequest(
                    instance.query,
                    SearchConfig(time_bound=bound, **base),
                    QueryMode.TIME_BOUNDED,
                    deterministic=True,
                )
                ladder.append(jaccard(run_query(req, g, space, lib), exact))
            with self.subTest(seed=seed):
                self.assertEqual(ladder, sorted(ladder))
                self.assertEqual(ladder[-1], 1.0)

    def test_deterministic_runs_repeat(self):
        instance = random_instance(3)
        req = QueryRequest(
            instance.query,
            SearchConfig(tau=0.3, n_hat=3, k=3, time_bound=0.004),
            QueryMode.TIME_BOUNDED,
            deterministic=True,
        )
        runs = [run_query(req, instance.graph, instance.space, instance.library) for _ in range(2)]
        self.assertEqual(runs[0].identities(), runs[1].identities())
        self.assertEqual(runs[0].report.search_elapsed, runs[1].report.search_elapsed)


class TestParameterSensitivity(unittest.TestCase):
    """Recall grows with the hop budget; work shrinks as tau rises."""

    def setUp(self):
        self.fixture = example_fixture()
        self.query = self.fixture.queries["example"]
        self.truth = load_truth(DATA_PATH / "example_truth.txt")

    def run_with(self, **kwargs):
        req = QueryRequest(self.query, SearchConfig(visited_scope=VisitedScope.PATH, **kwargs))
        return run_query(req, self.fixture.graph, self.fixture.space, self.fixture.library)

    def test_recall_non_decreasing_in_hops(self):
        recalls = [evaluate(self.run_with(tau=0.8, n_hat=n, k=5), self.truth)[1] for n in (2, 3, 4)]
        self.assertEqual(recalls, sorted(recalls))
        self.assertAlmostEqual(recalls[-1], 1.0)

    def test_expansions_non_increasing_in_tau(self):
        expansions = [
            self.run_with(tau=tau, n_hat=4, k=5).report.expansions for tau in (0.6, 0.7, 0.8, 0.9)
        ]
        self.assertEqual(expansions, sorted(expansions, reverse=True))



if __name__ == "__main__":
    unittest.main()
