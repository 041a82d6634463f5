"""Tests for the command line interface."""

import asyncio
import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

from kgsearch.cli import (
    MANIFEST_PATH,
    async_get_version,
    build_parser,
    main,
    query_request,
    search_config,
)
from kgsearch.const import EXIT_OK, EXIT_VALIDATION_ERROR
from kgsearch.engine import QueryMode
from kgsearch.fixtures import DATA_PATH, example_query
from kgsearch.search import VisitedScope

TRIPLES = str(DATA_PATH / "example_triples.tsv")
ENTITIES = str(DATA_PATH / "example_entities.tsv")
WEIGHTS = str(DATA_PATH / "example_weights.tsv")
LIBRARY = str(DATA_PATH / "example_library.tsv")
EXAMPLE = str(DATA_PATH / "queries" / "example.json")
MODEL = ["--triples", TRIPLES, "--entities", ENTITIES, "--weights", WEIGHTS, "--library", LIBRARY]
# hand-checked rankings assume per-path revisit checks
PATH_MODEL = [*MODEL, "--visited-scope", "path"]


def run_cli(argv):
    """Run main and return (exit code, parsed JSON lines)."""
    out = io.StringIO()
    code = main(argv, out)
    records = [json.loads(line) for line in out.getvalue().splitlines() if line]
    return code, records


class TestParser(unittest.TestCase):
    """Test argument handling."""

    def test_time_bound_in_seconds(self):
        args = build_parser().parse_args(
            ["query", EXAMPLE, *MODEL, "--time-bound-ms", "250", "--k", "3"]
        )
        cfg = search_config(args)
        self.assertEqual(cfg.time_bound, 0.25)
        self.assertEqual(cfg.k, 3)
        self.assertIs(query_request(args, example_query()).mode, QueryMode.TIME_BOUNDED)

    def test_exact_without_bound(self):
        args = build_parser().parse_args(["query", EXAMPLE, *MODEL])
        self.assertIs(query_request(args, example_query()).mode, QueryMode.EXACT)

    def test_search_scope_by_default(self):
        cfg = search_config(build_parser().parse_args(["query", EXAMPLE, *MODEL]))
        self.assertIs(cfg.visited_scope, VisitedScope.SEARCH)
        cfg = search_config(build_parser().parse_args(["query", EXAMPLE, *PATH_MODEL]))
        self.assertIs(cfg.visited_scope, VisitedScope.PATH)

    def test_unguarded_ta_flags(self):
        parser = build_parser()
        self.assertFalse(search_config(parser.parse_args(["query", EXAMPLE, *MODEL])).unguarded_ta)
        for flag in ("--paper-faithful-ta", "--unguarded-ta"):
            with self.subTest(flag=flag):
                args = parser.parse_args(["query", EXAMPLE, *MODEL, flag])
                self.assertTrue(search_config(args).unguarded_ta)

    def test_no_command_prints_help(self):
        with contextlib.redirect_stdout(io.StringIO()) as help_text:
            self.assertEqual(main([]), EXIT_VALIDATION_ERROR)
        self.assertIn("usage", help_text.getvalue())

    def test_version(self):
        self.assertEqual(asyncio.run(async_get_version()), "0.1.0")

    def test_manifest_owners(self):
        manifest = json.loads(MANIFEST_PATH.read_text(encoding="utf-8"))
        self.assertEqual(manifest["domain"], "kgsearch")
        self.assertEqual(manifest["codeowners"], ["@kgsearch/maintainers"])


class TestCommands(unittest.TestCase):
    """Run each command against the checked-in example."""

    def test_load(self):
        code, records = run_cli(["load", "--triples", TRIPLES, "--entities", ENTITIES])
        self.assertEqual(code, EXIT_OK)
        graph = records[0]
        self.assertEqual((graph["entities"], graph["edges"], graph["predicates"]), (13, 15, 6))
        self.assertAlmostEqual(graph["average_degree"], 30.0 / 13.0)

    def test_query(self):
        code, records = run_cli(["query", EXAMPLE, *PATH_MODEL, "--tau", "0.8", "--k", "5"])
        self.assertEqual(code, EXIT_OK)
        matches = [r for r in records if r["record"] == "match"]
        self.assertEqual(
            [m["pivot"] for m in matches],
            ["Audi_TT", "Hyundai_Tucsun", "KIA_K5", "BMW_Z4", "BYD_Song"],
        )
        self.assertEqual(records[-1]["record"], "run_report")
        self.assertEqual(records[-1]["pivot"], "v1")

    def test_query_with_unguarded_ta(self):
        argv = ["query", EXAMPLE, *PATH_MODEL, "--tau", "0.8", "--k", "1", "--paper-faithful-ta"]
        code, records = run_cli(argv)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len([r for r in records if r["record"] == "match"]), 1)
        self.assertEqual(records[-1]["record"], "run_report")

    def test_time_bounded_query(self):
        argv = ["query", EXAMPLE, *PATH_MODEL, "--tau", "0.8", "--k", "5"]
        argv += ["--time-bound-ms", "60000", "--deterministic"]
        code, records = run_cli(argv)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(records[0]["pivot"], "Audi_TT")
        self.assertTrue(records[-1]["deadline_met"])

    def test_eval(self):
        truth = str(DATA_PATH / "example_truth.txt")
        code, records = run_cli(["eval", EXAMPLE, "--truth", truth, *PATH_MODEL, "--tau", "0.8"])
        self.assertEqual(code, EXIT_OK)
        evaluation = records[0]
        self.assertEqual(evaluation["record"], "evaluation")
        self.assertAlmostEqual(evaluation["recall"], 1.0)
        self.assertAlmostEqual(evaluation["precision"], 0.4)

    def test_oracle(self):
        code, records = run_cli(["oracle", EXAMPLE, *PATH_MODEL, "--tau", "0.8", "--k", "1"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(records), 1)
        self.assertEqual(records[0]["pivot"], "Audi_TT")
        self.assertAlmostEqual(records[0]["score"], 1.891)

    def test_noise(self):
        argv = ["noise", EXAMPLE, EXAMPLE, "--kind", "node", "--library", LIBRARY]
        argv += ["--triples", TRIPLES, "--entities", ENTITIES, "--seed", "2"]
        code, records = run_cli(argv)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual([r["changed"] for r in records], [True, True])

    def test_validate(self):
        code, records = run_cli(
            ["validate", "--triples", TRIPLES, "--entities", ENTITIES, "--library", LIBRARY]
        )
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(records, [{"record": "validation", "missing": 0, "ok": True}])

    def test_validate_reports_missing(self):
        with tempfile.TemporaryDirectory() as tmp:
            library = Path(tmp) / "lib.tsv"
            library.write_text("Boat\tsynonym\tShip\ttype\n", encoding="utf-8")
            code, records = run_cli(
                ["validate", "--triples", TRIPLES, "--library", str(library)]
            )
        self.assertEqual(code, EXIT_VALIDATION_ERROR)
        self.assertEqual(records[0]["canonical"], "Ship")
        self.assertFalse(records[-1]["ok"])

    def test_embed_then_query(self):
        designers = str(DATA_PATH / "queries" / "example_cars_by_german_designers.json")
        with tempfile.TemporaryDirectory() as tmp:
            space = str(Path(tmp) / "space.bin")
            argv = ["embed", "--triples", TRIPLES, "--out", space, "--dim", "8", "--epochs", "3"]
            code, records = run_cli(argv)
            self.assertEqual(code, EXIT_OK)
            self.assertEqual(records[0]["dim"], 8)
            argv = ["query", designers, "--triples", TRIPLES, "--entities", ENTITIES]
            argv += ["--space", space, "--library", LIBRARY, "--tau", "0.0"]
            code, records = run_cli(argv)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(records[-1]["record"], "run_report")


class TestExitCodes(unittest.TestCase):
    """Errors map to exit codes instead of tracebacks."""

    def test_missing_file(self):
        with self.assertLogs("kgsearch.cli", level="ERROR"):
            code, _ = run_cli(["load", "--triples", "/nonexistent/triples.tsv"])
        self.assertEqual(code, EXIT_VALIDATION_ERROR)

    def test_unknown_query_predicate(self):
        with tempfile.TemporaryDirectory() as tmp:
            query = Path(tmp) / "q.json"
            document = example_query().to_document()
            document["edges"][0]["predicate"] = "manufacturer"
            query.write_text(json.dumps(document), encoding="utf-8")
            with self.assertLogs("kgsearch.cli", level="ERROR"):
                code, records = run_cli(["query", str(query), *MODEL])
        self.assertEqual(code, EXIT_VALIDATION_ERROR)
        self.assertEqual(records, [])

    def test_query_without_target(self):
        with tempfile.TemporaryDirectory() as tmp:
            query = Path(tmp) / "q.json"
            document = {
                "nodes": [
                    {"id": "car", "kind": "wildcard"},
                    {"id": "country", "kind": "specific", "types": ["Country"], "name": "GER"},
                ],
                "edges": [{"src": "car", "dst": "country", "predicate": "product"}],
            }
            query.write_text(json.dumps(document), encoding="utf-8")
            with self.assertLogs("kgsearch.cli", level="ERROR"):
                code, records = run_cli(["query", str(query), *MODEL])
        self.assertEqual(code, EXIT_VALIDATION_ERROR)
        self.assertEqual(records, [])

    def test_invalid_search_flag(self):
        with self.assertLogs("kgsearch.cli", level="ERROR"):
            code, _ = run_cli(["query", EXAMPLE, *MODEL, "--tau", "1.5"])
        self.assertEqual(code, EXIT_VALIDATION_ERROR)


if __name__ == "__main__":
    unittest.main()
