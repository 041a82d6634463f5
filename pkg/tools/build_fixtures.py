#!/usr/bin/env python3
"""
Fixture builder for kgsearch

Regenerates the checked-in example and frontier datasets under kgsearch/data,
refreshes the derived entries of fixtures.json and reports worked-example
values the builders no longer reproduce.

Usage:
  python tools/build_fixtures.py [--data-dir kgsearch/data] [--check]
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

sys.path.insert(0, str(Path(__file__).parent.parent))

from kgsearch.fixtures import (
    DATA_PATH,
    computed_values,
    manifest_mismatches,
    write_example_files,
    write_frontier_files,
)

_LOGGER = logging.getLogger("build_fixtures")

MANIFEST_NAME = "fixtures.json"
REFRESHED_PROVENANCE = "derived"


def refresh_manifest(
    document: Dict[str, Any], values: Dict[str, Any]
) -> Tuple[List[str], List[Tuple[str, Any, Any]]]:
    """Update derived entries in place.

    Returns the ids that changed and the mismatches of entries that are not
    derived, which are never overwritten.
    """
    updated = []
    entries = document["expected"]
    for entry in entries:
        if entry.get("provenance") != REFRESHED_PROVENANCE or entry["id"] not in values:
            continue
        if manifest_mismatches(values, [entry]):
            entry["value"] = values[entry["id"]]
            updated.append(entry["id"])
    fixed = [e for e in entries if e.get("provenance") != REFRESHED_PROVENANCE]
    return updated, manifest_mismatches(values, fixed)


def build(data_dir: Path, check: bool = False) -> int:
    """Write the datasets and refresh the manifest; return an exit code."""
    manifest_path = data_dir / MANIFEST_NAME
    with open(manifest_path, encoding="utf-8") as f:
        document = json.load(f)

    values = computed_values()
    updated, mismatches = refresh_manifest(document, values)
    for entry_id, expected, computed in mismatches:
        _LOGGER.error(f"{entry_id}: manifest has {expected!r}, builders give {computed!r}")

    if check:
        for entry_id in updated:
            _LOGGER.error(f"{entry_id}: derived value is stale")
        return 1 if updated or mismatches else 0

    written = write_example_files(data_dir) + write_frontier_files(data_dir)
    _LOGGER.info(f"Wrote {len(written)} data file(s) to {data_dir}")
    if updated:
        manifest_path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
        _LOGGER.info(f"Refreshed derived manifest entries: {', '.join(updated)}")
    return 1 if mismatches else 0


def main(argv: Optional[list] = None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Regenerate the kgsearch fixture datasets")
    parser.add_argument("--data-dir", type=Path, default=DATA_PATH)
    parser.add_argument(
        "--check",
        action="store_true",
        help="Only compare the manifest against the builders; write nothing",
    )
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return build(args.data_dir, args.check)


if __name__ == "__main__":
    sys.exit(main())
