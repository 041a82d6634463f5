"""Command line interface.

Usage:
  python -m kgsearch load --triples g.tsv [--entities e.tsv]
  python -m kgsearch embed --triples g.tsv --out space.bin [--dim 50 --epochs 200]
  python -m kgsearch query QUERY.json --triples g.tsv --space space.bin [--k 10 ...]
  python -m kgsearch eval QUERY.json --truth truth.txt --triples g.tsv --weights w.tsv
  python -m kgsearch noise QUERY.json [...] --kind node --percent 50 --seed 1 --library lib.tsv
  python -m kgsearch oracle QUERY.json --triples g.tsv --weights w.tsv
  python -m kgsearch validate --triples g.tsv --library lib.tsv

Every command writes JSON lines to stdout; logging goes to stderr.
"""

import argparse
import asyncio
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import aiofiles

from .const import (
    CONF_ALERT_RATIO,
    CONF_K,
    CONF_N_HAT,
    CONF_OVERFETCH,
    CONF_UNGUARDED_TA,
    CONF_TAU,
    CONF_TIME_BOUND,
    CONF_VISITED_SCOPE,
    DEFAULT_ALERT_RATIO,
    DEFAULT_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_K,
    DEFAULT_LEARNING_RATE,
    DEFAULT_N_HAT,
    DEFAULT_OVERFETCH,
    DEFAULT_SEED,
    DEFAULT_TAU,
    DEFAULT_VIRTUAL_TICK,
    DEFAULT_VISITED_SCOPE,
    DOMAIN,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    EXIT_VALIDATION_ERROR,
    MANIFEST_FILE,
    NOISE_EDGE,
    NOISE_NODE,
    VISITED_PATH,
    VISITED_SEARCH,
)
from .embedding import PredicateSpace, TrainConfig, load_space, load_weight_table, save_space, train
from .engine import (
    QueryMode,
    QueryRequest,
    apply_noise_batch,
    evaluate,
    load_truth,
    render_path,
    render_result,
    run_query,
)
from .errors import ErrorType, KGSearchError, QueryValidationError, classify_error
from .graph import KnowledgeGraph, async_load_graph
from .library import TransformationLibrary, load_library
from .oracles import oracle_run_query
from .query import QueryGraph, parse_query
from .search import SearchConfig

_LOGGER = logging.getLogger(__name__)

MANIFEST_PATH = Path(__file__).parent / MANIFEST_FILE


async def async_get_version() -> str:
    """Read the package version from manifest.json."""
    try:
        async with aiofiles.open(MANIFEST_PATH, "r", encoding="utf-8") as f:
            manifest = json.loads(await f.read())
        return manifest.get("version", "unknown")
    except (OSError, json.JSONDecodeError) as e:
        _LOGGER.warning(f"Could not read {MANIFEST_PATH}: {e}")
        return "unknown"


def _add_graph_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--triples", required=True, type=Path, help="Triples TSV file")
    parser.add_argument("--entities", type=Path, help="Entity types TSV file")


def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    _add_graph_arguments(parser)
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--space", type=Path, help="Predicate embeddings saved by `embed`")
    source.add_argument("--weights", type=Path, help="Predicate-pair weight table TSV")
    parser.add_argument("--library", type=Path, help="Transformation library TSV")


def _add_search_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=DEFAULT_K, help="Number of final matches")
    parser.add_argument("--tau", type=float, default=DEFAULT_TAU, help="Match pss threshold")
    parser.add_argument("--nhat", type=int, default=DEFAULT_N_HAT, help="Maximum path hops")
    parser.add_argument(
        "--overfetch", type=int, default=DEFAULT_OVERFETCH, help="Matches per sub-query, times k"
    )
    parser.add_argument(
        "--time-bound-ms",
        type=float,
        help="Answer within this many milliseconds (anytime search)",
    )
    parser.add_argument(
        "--alert-ratio",
        type=float,
        default=DEFAULT_ALERT_RATIO,
        help="Stop searching at this percentage of the time bound",
    )
    parser.add_argument(
        "--visited-scope",
        choices=[VISITED_PATH, VISITED_SEARCH],
        default=DEFAULT_VISITED_SCOPE,
        help="Forbid revisits within a path or within the whole search",
    )
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="Run workers round-robin on a virtual clock",
    )
    parser.add_argument(
        "--virtual-tick-ms",
        type=float,
        default=DEFAULT_VIRTUAL_TICK * 1000.0,
        help="Virtual clock advance per expansion in deterministic mode",
    )
    parser.add_argument(
        "--paper-faithful-ta",
        "--unguarded-ta",
        dest="unguarded_ta",
        action="store_true",
        help="Stop assembly without bounding pivots not yet seen",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=DOMAIN, description="Top-k semantic search over knowledge graphs"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    load_parser = subparsers.add_parser("load", help="Load a graph and print its statistics")
    _add_graph_arguments(load_parser)

    embed_parser = subparsers.add_parser("embed", help="Train and save predicate embeddings")
    _add_graph_arguments(embed_parser)
    embed_parser.add_argument("--out", required=True, type=Path, help="Output file")
    embed_parser.add_argument("--text", action="store_true", help="Write TSV instead of binary")
    embed_parser.add_argument("--dim", type=int, default=DEFAULT_DIM)
    embed_parser.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    embed_parser.add_argument("--learning-rate", type=float, default=DEFAULT_LEARNING_RATE)
    embed_parser.add_argument("--seed", type=int, default=DEFAULT_SEED)

    query_parser = subparsers.add_parser("query", help="Answer a query")
    query_parser.add_argument("query", type=Path, help="Query JSON document")
    _add_model_arguments(query_parser)
    _add_search_arguments(query_parser)

    eval_parser = subparsers.add_parser("eval", help="Score a query answer against a truth set")
    eval_parser.add_argument("query", type=Path, help="Query JSON document")
    eval_parser.add_argument("--truth", required=True, type=Path, help="One pivot name per line")
    _add_model_arguments(eval_parser)
    _add_search_arguments(eval_parser)

    noise_parser = subparsers.add_parser("noise", help="Add node or edge noise to queries")
    noise_parser.add_argument("queries", nargs="+", type=Path, help="Query JSON documents")
    noise_parser.add_argument("--kind", choices=[NOISE_NODE, NOISE_EDGE], required=True)
    noise_parser.add_argument("--percent", type=float, default=100.0)
    noise_parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    noise_parser.add_argument("--library", required=True, type=Path)
    noise_parser.add_argument("--triples", type=Path, help="Graph the library is bound to")
    noise_parser.add_argument("--entities", type=Path)
    noise_source = noise_parser.add_mutually_exclusive_group()
    noise_source.add_argument("--space", type=Path)
    noise_source.add_argument("--weights", type=Path)

    oracle_parser = subparsers.add_parser("oracle", help="Answer a query by brute force")
    oracle_parser.add_argument("query", type=Path, help="Query JSON document")
    _add_model_arguments(oracle_parser)
    _add_search_arguments(oracle_parser)

    validate_parser = subparsers.add_parser(
        "validate", help="Report library canonicals missing from the graph"
    )
    _add_graph_arguments(validate_parser)
    validate_parser.add_argument("--library", required=True, type=Path)
    return parser


def search_config(args: argparse.Namespace) -> SearchConfig:
    """Build a SearchConfig from query flags; the time bound is converted to seconds."""
    time_bound = None
    if args.time_bound_ms is not None:
        time_bound = args.time_bound_ms / 1000.0
    return SearchConfig.from_dict(
        {
            CONF_TAU: args.tau,
            CONF_N_HAT: args.nhat,
            CONF_K: args.k,
            CONF_OVERFETCH: args.overfetch,
            CONF_TIME_BOUND: time_bound,
            CONF_ALERT_RATIO: args.alert_ratio,
            CONF_VISITED_SCOPE: args.visited_scope,
            CONF_UNGUARDED_TA: args.unguarded_ta,
        }
    )


def query_request(args: argparse.Namespace, q: QueryGraph) -> QueryRequest:
    cfg = search_config(args)
    mode = QueryMode.EXACT if cfg.time_bound is None else QueryMode.TIME_BOUNDED
    return QueryRequest(
        q,
        cfg,
        mode,
        deterministic=args.deterministic,
        virtual_tick=args.virtual_tick_ms / 1000.0,
    )


async def _read_text(path: Path) -> str:
    async with aiofiles.open(path, "r", encoding="utf-8") as f:
        return await f.read()


async def _load_query(path: Path, space: Optional[PredicateSpace] = None) -> QueryGraph:
    text = await _read_text(path)
    return parse_query(text, vocabulary=None if space is None else space.predicates)


def _load_space(
    args: argparse.Namespace, g: Optional[KnowledgeGraph]
) -> Tuple[Optional[PredicateSpace], float]:
    """Return the predicate space named by --space/--weights and its load time."""
    started = time.perf_counter()
    space: Optional[PredicateSpace] = None
    if getattr(args, "space", None) is not None:
        space = load_space(args.space, graph=g)
    elif getattr(args, "weights", None) is not None:
        space = load_weight_table(args.weights)
    return space, time.perf_counter() - started


def _load_library(args: argparse.Namespace, g: KnowledgeGraph) -> TransformationLibrary:
    if args.library is None:
        return TransformationLibrary().bind(g)
    return load_library(args.library).bind(g)


async def _load_model(
    args: argparse.Namespace,
) -> Tuple[KnowledgeGraph, PredicateSpace, TransformationLibrary, float]:
    g = await async_load_graph(args.triples, args.entities)
    loop = asyncio.get_running_loop()
    space, load_seconds = await loop.run_in_executor(None, _load_space, args, g)
    if space is None:
        raise QueryValidationError("Pass --space or --weights")
    lib = _load_library(args, g)
    return g, space, lib, load_seconds


def _emit(records: Iterable[Dict[str, Any]], out: TextIO) -> None:
    for record in records:
        out.write(json.dumps(record) + "\n")


async def _cmd_load(args: argparse.Namespace, out: TextIO) -> int:
    g = await async_load_graph(args.triples, args.entities)
    types = {t for entity in g.entities for t in entity.types}
    _emit(
        [
            {
                "record": "graph",
                "entities": g.num_entities,
                "edges": g.num_edges,
                "predicates": len(g.predicates),
                "types": len(types),
                "average_degree": g.average_degree(),
            }
        ],
        out,
    )
    return EXIT_OK


async def _cmd_embed(args: argparse.Namespace, out: TextIO) -> int:
    g = await async_load_graph(args.triples, args.entities)
    cfg = TrainConfig(
        dim=args.dim,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        rng_seed=args.seed,
    )
    loop = asyncio.get_running_loop()
    space = await loop.run_in_executor(None, train, g, cfg)
    await loop.run_in_executor(None, save_space, space, args.out, args.text)
    record: Dict[str, Any] = {
        "record": "embedding",
        "path": str(args.out),
        "dim": space.dim,
        "predicates": len(space.predicates),
    }
    if space.report is not None:
        record["epochs"] = space.report.epochs
        record["final_loss"] = space.report.losses[-1] if space.report.losses else None
        record["seconds"] = space.report.seconds
    _emit([record], out)
    return EXIT_OK


async def _cmd_query(args: argparse.Namespace, out: TextIO) -> int:
    g, space, lib, load_seconds = await _load_model(args)
    req = query_request(args, await _load_query(args.query, space))
    loop = asyncio.get_running_loop()
    result = await loop.run_in_executor(None, run_query, req, g, space, lib, load_seconds)
    _emit(render_result(result, g), out)
    return EXIT_OK


async def _cmd_eval(args: argparse.Namespace, out: TextIO) -> int:
    g, space, lib, load_seconds = await _load_model(args)
    req = query_request(args, await _load_query(args.query, space))
    truth = load_truth(args.truth)
    loop = asyncio.get_running_loop()
    result = await loop.run_in_executor(None, run_query, req, g, space, lib, load_seconds)
    precision, recall, f1 = evaluate(result, truth)
    _emit(
        [
            {
                "record": "evaluation",
                "returned": result.pivot_names(),
                "truth": sorted(set(truth)),
                "precision": precision,
                "recall": recall,
                "f1": f1,
            },
            result.report.as_dict(),
        ],
        out,
    )
    return EXIT_OK


async def _cmd_noise(args: argparse.Namespace, out: TextIO) -> int:
    lib = load_library(args.library)
    g = None
    if args.triples is not None:
        g = await async_load_graph(args.triples, args.entities)
        lib = lib.bind(g)
    space, _ = _load_space(args, g)
    queries = [await _load_query(path) for path in args.queries]
    noisy = apply_noise_batch(queries, args.kind, args.percent, args.seed, lib, space)
    records = []
    for path, before, after in zip(args.queries, queries, noisy):
        records.append(
            {
                "record": "query",
                "source": str(path),
                "changed": before.to_document() != after.to_document(),
                "document": after.to_document(),
            }
        )
    _emit(records, out)
    return EXIT_OK


async def _cmd_oracle(args: argparse.Namespace, out: TextIO) -> int:
    g, space, lib, _ = await _load_model(args)
    q = await _load_query(args.query, space)
    cfg = search_config(args)
    loop = asyncio.get_running_loop()
    ranking = await loop.run_in_executor(None, oracle_run_query, q, g, space, lib, cfg)
    records = []
    for rank, final in enumerate(ranking, start=1):
        records.append(
            {
                "record": "oracle_match",
                "rank": rank,
                "pivot": g.entity(final.pivot).name,
                "score": final.score,
                "paths": [None if s is None else render_path(s, g) for s in final.slots],
            }
        )
    _emit(records, out)
    return EXIT_OK


async def _cmd_validate(args: argparse.Namespace, out: TextIO) -> int:
    g = await async_load_graph(args.triples, args.entities)
    missing = load_library(args.library).missing_canonicals(g)
    records: List[Dict[str, Any]] = [
        {"record": "missing_canonical", "target": target.value, "canonical": canonical}
        for target, canonical in sorted(missing, key=lambda m: (m[0].value, m[1]))
    ]
    records.append({"record": "validation", "missing": len(missing), "ok": not missing})
    _emit(records, out)
    return EXIT_OK if not missing else EXIT_VALIDATION_ERROR


COMMANDS = {
    "load": _cmd_load,
    "embed": _cmd_embed,
    "query": _cmd_query,
    "eval": _cmd_eval,
    "noise": _cmd_noise,
    "oracle": _cmd_oracle,
    "validate": _cmd_validate,
}


async def async_main(args: argparse.Namespace, out: TextIO = sys.stdout) -> int:
    """Run one command and map errors to exit codes."""
    version = await async_get_version()
    _LOGGER.debug(f"{DOMAIN} {version}: {args.command}")
    try:
        return await COMMANDS[args.command](args, out)
    except (KGSearchError, OSError) as e:
        error_type = classify_error(e)
        _LOGGER.error(f"{args.command} failed ({error_type.value}): {e}")
        if error_type is ErrorType.RUNTIME:
            return EXIT_RUNTIME_ERROR
        return EXIT_VALIDATION_ERROR


def main(argv: Optional[Sequence[str]] = None, out: TextIO = sys.stdout) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_VALIDATION_ERROR

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return asyncio.run(async_main(args, out))
