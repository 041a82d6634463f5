#!/usr/bin/env python3
"""
Deadline benchmark for kgsearch

Runs time-bounded queries on a large random graph with the wall clock and
reports how often the total response time stays within the bound plus a
tolerance.

Usage:
  python tools/deadline_benchmark.py [--nodes 10000] [--runs 20] [--bounds-ms 50 100 200]
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

sys.path.insert(0, str(Path(__file__).parent.parent))

from kgsearch.const import DEFAULT_DEADLINE_TOLERANCE, REPORT_TOTAL
from kgsearch.engine import QueryMode, QueryRequest, run_query
from kgsearch.fixtures import random_instance
from kgsearch.search import SearchConfig

_LOGGER = logging.getLogger("deadline_benchmark")

DEFAULT_BOUNDS_MS = (50, 100, 200)
DEFAULT_REQUIRED_SHARE = 0.95


@dataclass
class BoundSummary:
    """Outcome of all runs for one time bound."""

    bound: float
    runs: int
    within: int
    fired: int
    worst: float

    @property
    def share(self) -> float:
        return self.within / self.runs if self.runs else 1.0

    def as_dict(self) -> Dict[str, object]:
        return {
            "record": "deadline_benchmark",
            "bound_ms": round(self.bound * 1000, 3),
            "runs": self.runs,
            "within": self.within,
            "share": self.share,
            "fired": self.fired,
            "worst_ms": round(self.worst * 1000, 3),
        }


def run_benchmark(
    bounds: Sequence[float],
    runs: int,
    nodes: int,
    tolerance: float = DEFAULT_DEADLINE_TOLERANCE,
    seed: int = 0,
) -> List[BoundSummary]:
    """Time `runs` queries per bound on one random instance per run."""
    instances = [
        random_instance(seed + i, max_nodes=nodes, min_nodes=nodes, max_query_edges=3)
        for i in range(runs)
    ]
    _LOGGER.info(f"Built {runs} instance(s) with {nodes} entities each")
    summaries = []
    for bound in bounds:
        cfg = SearchConfig(tau=0.0, n_hat=4, k=10, time_bound=bound)
        within = fired = 0
        worst = 0.0
        for instance in instances:
            req = QueryRequest(instance.query, cfg, QueryMode.TIME_BOUNDED)
            result = run_query(req, instance.graph, instance.space, instance.library)
            total = result.report.timings[REPORT_TOTAL]
            worst = max(worst, total)
            within += total <= bound * (1.0 + tolerance)
            fired += result.report.deadline_fired
            _LOGGER.debug(
                f"T={bound * 1000:.0f} ms seed={instance.seed} took {total * 1000:.2f} ms"
            )
        summaries.append(BoundSummary(bound, len(instances), within, fired, worst))
    return summaries


def main(argv: Optional[list] = None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Check time-bounded queries meet their deadline")
    parser.add_argument("--nodes", type=int, default=10_000)
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--bounds-ms", type=float, nargs="+", default=list(DEFAULT_BOUNDS_MS))
    parser.add_argument("--tolerance", type=float, default=DEFAULT_DEADLINE_TOLERANCE)
    parser.add_argument("--required-share", type=float, default=DEFAULT_REQUIRED_SHARE)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    bounds = [ms / 1000.0 for ms in args.bounds_ms]
    summaries = run_benchmark(bounds, args.runs, args.nodes, args.tolerance, args.seed)
    failed = False
    for summary in summaries:
        print(json.dumps(summary.as_dict()))
        if summary.share < args.required_share:
            failed = True
            _LOGGER.warning(
                f"Only {summary.share:.0%} of runs met {summary.bound * 1000:.0f} ms "
                f"+{args.tolerance:.0%}"
            )
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
