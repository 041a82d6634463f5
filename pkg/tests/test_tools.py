"""Tests for the maintenance scripts under tools/."""

import contextlib
import datetime
import importlib.util
import io
import json
import shutil
import tempfile
import unittest
from pathlib import Path

from kgsearch.fixtures import DATA_PATH

TOOLS_PATH = Path(__file__).parent.parent / "tools"

CHANGELOG = """# Changelog

## [Unreleased]

### Added
- Edge noise option

### Changed

### Fixed

## [0.1.0] - 2026-10-01

### Added
- First release
"""


def load_tool(name):
    spec = importlib.util.spec_from_file_location(name, TOOLS_PATH / f"{name}.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


version_manager = load_tool("version_manager")
build_fixtures = load_tool("build_fixtures")
deadline_benchmark = load_tool("deadline_benchmark")


class TestVersionManager(unittest.TestCase):
    """Test version parsing, bumping and changelog release."""

    def test_bump(self):
        self.assertEqual(version_manager.bump_version("1.2.3", "patch"), "1.2.4")
        self.assertEqual(version_manager.bump_version("1.2.3", "minor"), "1.3.0")
        self.assertEqual(version_manager.bump_version("1.2.3", "major"), "2.0.0")
        with self.assertRaises(version_manager.VersionError):
            version_manager.bump_version("1.2.3", "build")

    def test_parse_rejects_bad_versions(self):
        for bad in ("1.2", "1.2.x", "v1.2.3", ""):
            with self.subTest(version=bad):
                with self.assertRaises(version_manager.VersionError):
                    version_manager.parse_version(bad)

    def test_bump_writes_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = Path(tmp) / "manifest.json"
            manifest.write_text(json.dumps({"name": "x", "version": "0.1.0"}), encoding="utf-8")
            with contextlib.redirect_stdout(io.StringIO()):
                code = version_manager.main(["--manifest", str(manifest), "bump", "minor"])
            self.assertEqual(code, 0)
            self.assertEqual(version_manager.read_version(manifest), "0.2.0")
            self.assertEqual(json.loads(manifest.read_text(encoding="utf-8"))["name"], "x")

    def test_dry_run_leaves_manifest(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = Path(tmp) / "manifest.json"
            manifest.write_text(json.dumps({"version": "0.1.0"}), encoding="utf-8")
            with contextlib.redirect_stdout(io.StringIO()) as out:
                version_manager.main(["--manifest", str(manifest), "set", "3.0.0", "--dry-run"])
            self.assertIn("3.0.0", out.getvalue())
            self.assertEqual(version_manager.read_version(manifest), "0.1.0")

    def test_missing_manifest(self):
        with contextlib.redirect_stderr(io.StringIO()) as err:
            code = version_manager.main(["--manifest", "/nonexistent/manifest.json", "current"])
        self.assertEqual(code, 1)
        self.assertIn("not found", err.getvalue())

    def test_release_changelog(self):
        released = version_manager.release_changelog(
            CHANGELOG, "0.2.0", datetime.date(2026, 10, 18)
        )
        self.assertIn("## [0.2.0] - 2026-10-18\n\n### Added\n- Edge noise option", released)
        section = released.split("## [0.2.0]")[1].split("## [0.1.0]")[0]
        self.assertNotIn("### Changed", section)
        self.assertLess(released.index("## [Unreleased]"), released.index("## [0.2.0]"))
        self.assertIn("## [0.1.0] - 2026-10-01", released)
        with self.assertRaises(version_manager.VersionError):
            version_manager.release_changelog(CHANGELOG, "0.1.0", datetime.date(2026, 10, 18))

    def test_checked_in_manifest(self):
        manifest = Path(__file__).parent.parent / "kgsearch" / "manifest.json"
        version_manager.parse_version(version_manager.read_version(manifest))


class TestBuildFixtures(unittest.TestCase):
    """Test the fixture regeneration script."""

    def test_check_passes_on_checked_in_data(self):
        with self.assertLogs("kgsearch.fixtures", level="WARNING"):
            self.assertEqual(build_fixtures.build(DATA_PATH, check=True), 0)

    def test_refresh_updates_only_derived(self):
        document = {
            "expected": [
                {"id": "a", "value": 1.0, "provenance": "derived"},
                {"id": "b", "value": "x", "provenance": "worked-example"},
                {"id": "c", "value": 2, "provenance": "derived"},
            ]
        }
        updated, mismatches = build_fixtures.refresh_manifest(
            document, {"a": 1.5, "b": "y", "c": 2}
        )
        self.assertEqual(updated, ["a"])
        self.assertEqual(mismatches, [("b", "x", "y")])
        self.assertEqual(document["expected"][0]["value"], 1.5)
        self.assertEqual(document["expected"][1]["value"], "x")

    def test_build_into_copy(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "data"
            shutil.copytree(DATA_PATH, target)
            with self.assertLogs("build_fixtures", level="INFO"):
                self.assertEqual(build_fixtures.build(target), 0)
            self.assertTrue((target / "queries" / "frontier.json").exists())


class TestDeadlineBenchmark(unittest.TestCase):
    """The benchmark runs end to end on a small graph."""

    def test_small_run(self):
        summaries = deadline_benchmark.run_benchmark([0.05, 0.5], runs=2, nodes=200)
        self.assertEqual([s.runs for s in summaries], [2, 2])
        for summary in summaries:
            self.assertTrue(0.0 <= summary.share <= 1.0)
            self.assertEqual(summary.as_dict()["record"], "deadline_benchmark")
        self.assertEqual(summaries[1].as_dict()["bound_ms"], 500.0)


if __name__ == "__main__":
    unittest.main()
