"""Tests for the knowledge graph core."""

import asyncio
import tempfile
import unittest
from pathlib import Path

from kgsearch.const import PLACEHOLDER_TYPE
from kgsearch.errors import ContractViolation, GraphLoadError, GraphParseError
from kgsearch.fixtures import DATA_PATH, EXAMPLE_TRIPLES, example_graph
from kgsearch.graph import (
    Direction,
    async_load_graph,
    average_degree,
    build_graph,
    load_graph,
    neighbors,
    parse_graph,
    save_entities,
    save_triples,
)


class TestParseGraph(unittest.TestCase):
    """Test TSV parsing."""

    def test_single_triple(self):
        """One triple gives two entities and one edge."""
        g = parse_graph(["a\tp\tb"])
        self.assertEqual(g.num_entities, 2)
        self.assertEqual(g.num_edges, 1)
        self.assertEqual(g.predicates, ("p",))
        self.assertEqual(g.entity(0).name, "a")
        self.assertEqual(g.entity(1).types, frozenset({PLACEHOLDER_TYPE}))

    def test_comments_and_blank_lines_skipped(self):
        g = parse_graph(["# header", "", "a\tp\tb", "   ", "b\tq\tc"])
        self.assertEqual(g.num_edges, 2)

    def test_duplicate_triples_collapse(self):
        """Repeated triples are stored once."""
        g = parse_graph(["a\tp\tb", "a\tp\tb", "a\tq\tb"])
        self.assertEqual(g.num_edges, 2)

    def test_wrong_column_count_names_line(self):
        with self.assertRaises(GraphParseError) as ctx:
            parse_graph(["a\tp\tb", "a\tp"], source="g.tsv")
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn("g.tsv:2", str(ctx.exception))

    def test_empty_field_rejected(self):
        with self.assertRaises(GraphParseError):
            parse_graph(["a\t\tb"])

    def test_no_triples(self):
        with self.assertRaises(GraphLoadError):
            parse_graph(["# only a comment"])

    def test_entity_types(self):
        g = parse_graph(["a\tp\tb"], ["a\tCar|Vehicle"])
        self.assertEqual(g.entity_by_name("a").types, frozenset({"Car", "Vehicle"}))
        self.assertEqual(g.type_index["Car"], frozenset({0}))

    def test_bad_entity_row(self):
        with self.assertRaises(GraphParseError):
            parse_graph(["a\tp\tb"], ["a"])


class TestKnowledgeGraph(unittest.TestCase):
    """Test neighbor access and statistics."""

    def setUp(self):
        self.g = build_graph([("a", "p", "b"), ("c", "q", "a"), ("a", "r", "a")])

    def test_neighbors_ignore_direction(self):
        """Incoming and outgoing edges are both neighbors, ordered by edge index."""
        a = self.g.entity_by_name("a").id
        found = [(edge.index, self.g.entity(other).name) for edge, other in neighbors(self.g, a)]
        self.assertEqual(found, [(0, "b"), (1, "c"), (2, "a")])

    def test_self_loop_direction(self):
        a = self.g.entity_by_name("a").id
        self.assertIn((2, Direction.BOTH), self.g.incidence[a])

    def test_invalid_id(self):
        with self.assertRaises(ContractViolation):
            self.g.neighbors(99)
        with self.assertRaises(ContractViolation):
            self.g.entity(-1)

    def test_average_degree(self):
        self.assertAlmostEqual(average_degree(self.g), 2.0)

    def test_zero_edge_graph(self):
        g = build_graph([], {"lonely": ["Thing"]})
        self.assertEqual(g.num_edges, 0)
        self.assertEqual(g.neighbors(0), ())

    def test_empty_graph_rejected(self):
        with self.assertRaises(ContractViolation):
            build_graph([])


class TestGraphFiles(unittest.TestCase):
    """Test loading and saving TSV files."""

    def test_checked_in_example_matches_builder(self):
        loaded = load_graph(DATA_PATH / "example_triples.tsv", DATA_PATH / "example_entities.tsv")
        built = example_graph()
        self.assertEqual(list(loaded.triples()), list(built.triples()))
        self.assertEqual(loaded.entities, built.entities)
        self.assertEqual(loaded.num_edges, len(EXAMPLE_TRIPLES))

    def test_save_and_reload(self):
        g = example_graph()
        with tempfile.TemporaryDirectory() as tmp:
            triples = Path(tmp) / "t.tsv"
            entities = Path(tmp) / "e.tsv"
            save_entities(g, entities)
            save_triples(g, triples)
            reloaded = load_graph(triples, entities)
        self.assertEqual(set(reloaded.triples()), set(g.triples()))
        self.assertEqual(
            {e.name: e.types for e in reloaded.entities}, {e.name: e.types for e in g.entities}
        )

    def test_async_load_matches_sync(self):
        triples = DATA_PATH / "frontier_triples.tsv"
        entities = DATA_PATH / "frontier_entities.tsv"
        loaded = asyncio.run(async_load_graph(triples, entities))
        self.assertEqual(list(loaded.triples()), list(load_graph(triples, entities).triples()))

    def test_missing_file(self):
        with self.assertRaises(OSError):
            load_graph(Path("/nonexistent/triples.tsv"))


if __name__ == "__main__":
    unittest.main()
