"""Tests for fixture datasets and the expected-value manifest."""

import json
import tempfile
import unittest
from pathlib import Path

from kgsearch.embedding import load_weight_table
from kgsearch.fixtures import (
    DATA_PATH,
    FRONTIER_FIRST_TOLERANCE,
    computed_values,
    example_fixture,
    fixture_manifest,
    frontier_example,
    load_example_fixture,
    manifest_mismatches,
    random_instance,
    random_match_sets,
    solve_frontier_weights,
    write_example_files,
    write_frontier_files,
)
from kgsearch.graph import load_graph


class TestManifest(unittest.TestCase):
    """The checked-in manifest agrees with the builders."""

    def test_computed_values_match(self):
        values = computed_values()
        self.assertEqual(manifest_mismatches(values, fixture_manifest()), [])

    def test_every_entry_has_provenance(self):
        for entry in fixture_manifest():
            with self.subTest(id=entry["id"]):
                self.assertIn(entry["provenance"], {"worked-example", "derived", "trivial"})

    def test_mismatch_reported(self):
        entries = [{"id": "x", "value": 0.5, "places": 2}, {"id": "y", "value": "a"}]
        self.assertEqual(
            manifest_mismatches({"x": 0.52, "y": "a"}, entries), [("x", 0.5, 0.52)]
        )
        self.assertEqual(manifest_mismatches({"x": 0.504}, entries), [])


class TestFrontierWeights(unittest.TestCase):
    """Test the solved frontier weights."""

    def test_residual(self):
        with self.assertLogs("kgsearch.fixtures", level="WARNING"):
            solved = solve_frontier_weights()
        self.assertAlmostEqual(solved.residual, 0.0002326, places=6)
        self.assertLess(abs(solved.residual), FRONTIER_FIRST_TOLERANCE)
        self.assertEqual(len(solved.weights), 13)
        self.assertTrue(all(0.0 < w <= 1.0 for w in solved.weights.values()))

    def test_graph_statistics(self):
        graph, _, _, _ = frontier_example()
        self.assertEqual((graph.num_entities, graph.num_edges), (12, 13))
        self.assertAlmostEqual(graph.average_degree(), 26.0 / 12.0)


class TestCheckedInFiles(unittest.TestCase):
    """The data directory holds what the writers produce."""

    def test_example_fixture_loads(self):
        loaded = load_example_fixture()
        built = example_fixture()
        self.assertEqual(set(loaded.queries), set(built.queries))
        for name, query in built.queries.items():
            self.assertEqual(loaded.queries[name].to_document(), query.to_document())
        self.assertEqual(list(loaded.graph.triples()), list(built.graph.triples()))

    def test_written_files_match_checked_in(self):
        with tempfile.TemporaryDirectory() as tmp:
            written = write_example_files(Path(tmp)) + write_frontier_files(Path(tmp))
            for path in written:
                with self.subTest(path=path.name):
                    relative = path.relative_to(tmp)
                    checked_in = DATA_PATH / relative
                    if path.name.endswith("_weights.tsv"):
                        _assert_same_weights(self, path, checked_in)
                    elif path.suffix == ".json":
                        self.assertEqual(
                            json.loads(path.read_text(encoding="utf-8")),
                            json.loads(checked_in.read_text(encoding="utf-8")),
                        )
                    else:
                        self.assertEqual(_rows(path), _rows(checked_in))

    def test_writers_are_idempotent(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = {p: p.read_bytes() for p in write_example_files(Path(tmp))}
            second = {p: p.read_bytes() for p in write_example_files(Path(tmp))}
        self.assertEqual(first, second)

    def test_frontier_weights_file(self):
        _, space, _, _ = frontier_example()
        loaded = load_weight_table(DATA_PATH / "frontier_weights.tsv")
        for (q, p), weight in space.weights.items():
            self.assertAlmostEqual(loaded.edge_weight(q, p), weight, places=9)
        graph = load_graph(DATA_PATH / "frontier_triples.tsv", DATA_PATH / "frontier_entities.tsv")
        self.assertEqual(graph.entity_by_name("u12").types, frozenset({"Goal"}))


class TestRandomGenerators(unittest.TestCase):
    """Seeded generators are reproducible."""

    def test_random_instance_repeats(self):
        first, second = random_instance(11), random_instance(11)
        self.assertEqual(list(first.graph.triples()), list(second.graph.triples()))
        self.assertEqual(first.space.weights, second.space.weights)
        self.assertEqual(first.query.to_document(), second.query.to_document())
        self.assertLessEqual(first.graph.num_entities, 50)

    def test_random_instance_query_shape(self):
        for seed in range(20):
            instance = random_instance(seed)
            sub = instance.sub_query()
            self.assertEqual(len(sub.edges), len(instance.query.edges))
            self.assertEqual(sub.start, 0)

    def test_random_match_sets(self):
        sets = random_match_sets(4)
        self.assertTrue(2 <= len(sets) <= 5)
        self.assertTrue(all(50 <= len(s) <= 200 for s in sets))
        again = random_match_sets(4)
        self.assertEqual([m.pss for m in sets[0]], [m.pss for m in again[0]])


def _assert_same_weights(case, path, checked_in):
    written, expected = load_weight_table(path), load_weight_table(checked_in)
    case.assertEqual(set(written.weights), set(expected.weights))
    for key, weight in expected.weights.items():
        case.assertAlmostEqual(written.weights[key], weight, places=9)


def _rows(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    return [line for line in lines if line.strip() and not line.startswith("#")]


if __name__ == "__main__":
    unittest.main()
