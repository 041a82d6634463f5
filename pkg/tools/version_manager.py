#!/usr/bin/env python3
"""
Version Manager for kgsearch

Bumps the package version in kgsearch/manifest.json and cuts the matching
CHANGELOG.md section.

Usage:
  python tools/version_manager.py current
  python tools/version_manager.py bump patch [--dry-run]
  python tools/version_manager.py set 1.2.3 [--dry-run]
  python tools/version_manager.py release [--date 2026-01-31]
  python tools/version_manager.py validate 1.2.3
"""

import argparse
import datetime
import json
import re
import sys
from pathlib import Path
from typing import Optional, Tuple

MANIFEST_PATH = Path("kgsearch/manifest.json")
CHANGELOG_PATH = Path("CHANGELOG.md")
UNRELEASED = "## [Unreleased]"
UNRELEASED_TEMPLATE = f"{UNRELEASED}\n\n### Added\n\n### Changed\n\n### Fixed\n\n### Security\n\n"
BUMP_TYPES = ("major", "minor", "patch")


class VersionError(ValueError):
    """Invalid version string or missing release files."""


def parse_version(version: str) -> Tuple[int, int, int]:
    """Split MAJOR.MINOR.PATCH into integers."""
    parts = version.split(".")
    if len(parts) != 3 or not all(part.isdigit() for part in parts):
        raise VersionError(f"Version {version!r} is not MAJOR.MINOR.PATCH")
    major, minor, patch = (int(part) for part in parts)
    return major, minor, patch


def bump_version(current: str, bump_type: str) -> str:
    major, minor, patch = parse_version(current)
    if bump_type == "major":
        return f"{major + 1}.0.0"
    if bump_type == "minor":
        return f"{major}.{minor + 1}.0"
    if bump_type == "patch":
        return f"{major}.{minor}.{patch + 1}"
    raise VersionError(f"Invalid bump type {bump_type!r}; use one of {', '.join(BUMP_TYPES)}")


def read_version(manifest_path: Path = MANIFEST_PATH) -> str:
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise VersionError(f"{manifest_path} not found; run from the repository root") from None
    except json.JSONDecodeError as e:
        raise VersionError(f"Invalid JSON in {manifest_path}: {e}") from e
    return str(manifest.get("version", "0.0.0"))


def write_version(version: str, manifest_path: Path = MANIFEST_PATH) -> None:
    parse_version(version)
    path = Path(manifest_path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    manifest["version"] = version
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def release_changelog(text: str, version: str, date: datetime.date) -> str:
    """Turn the Unreleased section into a dated release and open a fresh one.

    Empty subsections of the released section are dropped.
    """
    parse_version(version)
    if f"## [{version}]" in text:
        raise VersionError(f"CHANGELOG already has a section for {version}")
    start = text.find(UNRELEASED)
    if start < 0:
        raise VersionError("CHANGELOG has no [Unreleased] section")
    body_start = start + len(UNRELEASED)
    following = re.search(r"^## \[", text[body_start:], flags=re.MULTILINE)
    end = body_start + following.start() if following else len(text)
    body = text[body_start:end]

    sections = re.split(r"(?=^### )", body.strip("\n"), flags=re.MULTILINE)
    kept = [s.strip("\n") for s in sections if s.strip() and s.strip("\n").count("\n") > 0]
    released = f"## [{version}] - {date.isoformat()}\n\n" + "\n\n".join(kept)
    return text[:start] + UNRELEASED_TEMPLATE + released.rstrip() + "\n\n" + text[end:]


def main(argv: Optional[list] = None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Manage the kgsearch version")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    subparsers.add_parser("current", help="Show current version")

    bump_parser = subparsers.add_parser("bump", help="Bump version")
    bump_parser.add_argument("type", choices=BUMP_TYPES, help="Type of version bump")
    bump_parser.add_argument("--dry-run", action="store_true", help="Only print the new version")

    set_parser = subparsers.add_parser("set", help="Set specific version")
    set_parser.add_argument("version", help="Version to set (e.g., 1.2.3)")
    set_parser.add_argument("--dry-run", action="store_true", help="Only validate the version")

    release_parser = subparsers.add_parser(
        "release", help="Move [Unreleased] changelog entries under the current version"
    )
    release_parser.add_argument("--date", type=datetime.date.fromisoformat)

    validate_parser = subparsers.add_parser("validate", help="Validate version format")
    validate_parser.add_argument("version", help="Version to validate")

    parser.add_argument("--manifest", type=Path, default=MANIFEST_PATH)
    parser.add_argument("--changelog", type=Path, default=CHANGELOG_PATH)
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    try:
        if args.command == "current":
            print(f"Current version: {read_version(args.manifest)}")
        elif args.command in ("bump", "set"):
            current = read_version(args.manifest)
            if args.command == "bump":
                new_version = bump_version(current, args.type)
            else:
                parse_version(args.version)
                new_version = args.version
            if args.dry_run:
                print(f"Current version: {current}")
                print(f"New version would be: {new_version}")
            else:
                write_version(new_version, args.manifest)
                print(f"Changed version from {current} to {new_version}")
        elif args.command == "release":
            version = read_version(args.manifest)
            date = args.date or datetime.date.today()
            text = args.changelog.read_text(encoding="utf-8")
            args.changelog.write_text(release_changelog(text, version, date), encoding="utf-8")
            print(f"CHANGELOG section written for {version} ({date.isoformat()})")
        elif args.command == "validate":
            parse_version(args.version)
            print(f"Version format is valid: {args.version}")
    except (VersionError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
