"""Predicate embeddings and the edge weights derived from them."""

import logging
import math
import struct
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np
import voluptuous as vol

from .const import (
    CONF_BATCH_SIZE,
    CONF_DIM,
    CONF_EPOCHS,
    CONF_LEARNING_RATE,
    CONF_MARGIN,
    CONF_NEGATIVES,
    CONF_SEED,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MARGIN,
    DEFAULT_NEGATIVES,
    DEFAULT_NOISE_NEIGHBORS,
    DEFAULT_SEED,
    EMBEDDING_MAGIC,
    NEGATIVE_SAMPLE_ATTEMPTS,
    TSV_SEPARATOR,
)
from .errors import ContractViolation, EmbeddingError, TrainingError
from .graph import KnowledgeGraph

_LOGGER = logging.getLogger(__name__)

_HEADER = struct.Struct("<II")
_NAME_LENGTH = struct.Struct("<H")
_EPS = 1e-12


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Return a·b / (|a|·|b|).

    Raises:
        ContractViolation: Vectors differ in length or one of them is all-zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"Vector length mismatch: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ContractViolation("Cosine similarity is undefined for a zero vector")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return min(1.0, max(-1.0, value))


class PredicateSpace(ABC):
    """Source of semantic similarity weights between predicates."""

    @property
    @abstractmethod
    def predicates(self) -> Tuple[str, ...]:
        """Return the predicate vocabulary."""

    def has_predicate(self, name: str) -> bool:
        return name in self.predicates

    @abstractmethod
    def similarity(self, first: str, second: str) -> float:
        """Return the raw similarity of two known, distinct predicates."""

    def edge_weight(self, query_predicate: str, graph_predicate: str) -> float:
        """Return the similarity clamped to [0, 1]; identical names give exactly 1.0."""
        if query_predicate == graph_predicate:
            if not self.has_predicate(query_predicate):
                raise EmbeddingError(f"Unknown predicate: {query_predicate}")
            return 1.0
        for name in (query_predicate, graph_predicate):
            if not self.has_predicate(name):
                raise EmbeddingError(f"Unknown predicate: {name}")
        return min(1.0, max(0.0, self.similarity(query_predicate, graph_predicate)))

    def similar_predicates(
        self, predicate: str, n: int = DEFAULT_NOISE_NEIGHBORS
    ) -> List[Tuple[str, float]]:
        """Return the n most similar other predicates, best first, ties by name."""
        if not self.has_predicate(predicate):
            raise EmbeddingError(f"Unknown predicate: {predicate}")
        ranked = sorted(
            (
                (other, self.similarity(predicate, other))
                for other in self.predicates
                if other != predicate
            ),
            key=lambda item: (-item[1], item[0]),
        )
        return ranked[:n]

    def check_covers(self, graph: KnowledgeGraph) -> None:
        """Raise EmbeddingError unless every graph predicate is known."""
        missing = [p for p in graph.predicates if not self.has_predicate(p)]
        if missing:
            raise EmbeddingError(f"No vector for graph predicate(s): {', '.join(missing)}")


@dataclass
class TrainingReport:
    """Per-epoch mean margin-ranking loss of a training run."""

    epochs: int
    rng_seed: int
    losses: List[float] = field(default_factory=list)
    seconds: float = 0.0


class EmbeddingSpace(PredicateSpace):
    """Predicate vectors keyed by predicate name."""

    def __init__(
        self,
        predicate_vectors: Mapping[str, Iterable[float]],
        entity_vectors: Optional[np.ndarray] = None,
        report: Optional[TrainingReport] = None,
    ) -> None:
        if not predicate_vectors:
            raise EmbeddingError("An embedding space needs at least one predicate vector")
        vectors: Dict[str, np.ndarray] = {}
        dim: Optional[int] = None
        for name, values in predicate_vectors.items():
            vector = np.array(values, dtype=np.float64)
            if vector.ndim != 1 or vector.size == 0:
                raise EmbeddingError(f"Vector for {name} is not a non-empty 1-d array")
            if dim is None:
                dim = vector.size
            elif vector.size != dim:
                raise EmbeddingError(f"Vector for {name} has length {vector.size}, expected {dim}")
            if not np.any(vector):
                raise EmbeddingError(f"Vector for {name} is all-zero")
            vector.setflags(write=False)
            vectors[name] = vector
        self.dim: int = int(dim or 0)
        self.predicate_vectors: Dict[str, np.ndarray] = vectors
        self.entity_vectors = entity_vectors
        self.report = report
        self._names = tuple(vectors)

    @property
    def predicates(self) -> Tuple[str, ...]:
        return self._names

    def has_predicate(self, name: str) -> bool:
        return name in self.predicate_vectors

    def vector(self, name: str) -> np.ndarray:
        try:
            return self.predicate_vectors[name]
        except KeyError:
            raise EmbeddingError(f"Unknown predicate: {name}") from None

    def similarity(self, first: str, second: str) -> float:
        return cosine(self.vector(first), self.vector(second))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSpace):
            return NotImplemented
        return self._names == other._names and all(
            np.array_equal(self.predicate_vectors[n], other.predicate_vectors[n])
            for n in self._names
        )

    def __repr__(self) -> str:
        return f"EmbeddingSpace(dim={self.dim}, predicates={len(self._names)})"


class WeightTableSpace(PredicateSpace):
    """Fixture space mapping predicate pairs directly to weights."""

    def __init__(
        self,
        weights: Mapping[Tuple[str, str], float],
        predicates: Iterable[str] = (),
        default: float = 0.0,
    ) -> None:
        table: Dict[Tuple[str, str], float] = {}
        names: Dict[str, None] = dict.fromkeys(predicates)
        for (first, second), weight in weights.items():
            if not 0.0 <= weight <= 1.0:
                raise EmbeddingError(f"Weight {first}/{second}={weight} outside [0, 1]")
            table[self._key(first, second)] = float(weight)
            names.setdefault(first)
            names.setdefault(second)
        self.weights = table
        self.default = default
        self._names = tuple(names)
        self._known: Set[str] = set(names)

    @staticmethod
    def _key(first: str, second: str) -> Tuple[str, str]:
        return (first, second) if first <= second else (second, first)

    @property
    def predicates(self) -> Tuple[str, ...]:
        return self._names

    def has_predicate(self, name: str) -> bool:
        return name in self._known

    def similarity(self, first: str, second: str) -> float:
        if first == second:
            return 1.0
        return self.weights.get(self._key(first, second), self.default)

    def __repr__(self) -> str:
        return f"WeightTableSpace(predicates={len(self._names)}, pairs={len(self.weights)})"


def edge_weight(space: PredicateSpace, query_predicate: str, graph_predicate: str) -> float:
    """Return the semantic-graph weight of a graph predicate against a query predicate."""
    return space.edge_weight(query_predicate, graph_predicate)


def load_weight_table(path: Path, default: float = 0.0) -> WeightTableSpace:
    """Load `query_predicate<TAB>graph_predicate<TAB>weight` rows."""
    weights: Dict[Tuple[str, str], float] = {}
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        columns = raw.split(TSV_SEPARATOR)
        if len(columns) != 3:
            raise EmbeddingError(f"{path}:{number}: expected 3 columns, got {len(columns)}")
        try:
            weights[(columns[0], columns[1])] = float(columns[2])
        except ValueError:
            raise EmbeddingError(f"{path}:{number}: invalid weight {columns[2]!r}") from None
    return WeightTableSpace(weights, default=default)


TRAIN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_DIM, default=DEFAULT_DIM): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_MARGIN, default=DEFAULT_MARGIN): vol.All(
            vol.Coerce(float), vol.Range(min=0.0, min_included=False)
        ),
        vol.Optional(CONF_LEARNING_RATE, default=DEFAULT_LEARNING_RATE): vol.All(
            vol.Coerce(float), vol.Range(min=0.0)
        ),
        vol.Optional(CONF_EPOCHS, default=DEFAULT_EPOCHS): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_NEGATIVES, default=DEFAULT_NEGATIVES): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_BATCH_SIZE, default=DEFAULT_BATCH_SIZE): vol.All(int, vol.Range(min=1)),
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): int,
    }
)


@dataclass(frozen=True)
class TrainConfig:
    """TransE hyperparameters."""

    dim: int = DEFAULT_DIM
    margin: float = DEFAULT_MARGIN
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    negatives_per_positive: int = DEFAULT_NEGATIVES
    batch_size: int = DEFAULT_BATCH_SIZE
    rng_seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        try:
            TRAIN_CONFIG_SCHEMA(self.as_dict())
        except vol.Invalid as err:
            raise TrainingError(f"Invalid training configuration: {err}") from err

    def as_dict(self) -> Dict[str, Any]:
        return {
            CONF_DIM: self.dim,
            CONF_MARGIN: self.margin,
            CONF_LEARNING_RATE: self.learning_rate,
            CONF_EPOCHS: self.epochs,
            CONF_NEGATIVES: self.negatives_per_positive,
            CONF_BATCH_SIZE: self.batch_size,
            CONF_SEED: self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        try:
            values = TRAIN_CONFIG_SCHEMA(dict(data))
        except vol.Invalid as err:
            raise TrainingError(f"Invalid training configuration: {err}") from err
        return cls(**values)


def initial_vectors(
    rng: np.random.Generator, n_entities: int, n_predicates: int, dim: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw uniform(-6/sqrt(d), 6/sqrt(d)) vectors; predicate vectors are L2-normalized."""
    bound = 6.0 / math.sqrt(dim)
    entities = rng.uniform(-bound, bound, size=(n_entities, dim))
    relations = rng.uniform(-bound, bound, size=(n_predicates, dim))
    relations /= np.linalg.norm(relations, axis=1, keepdims=True)
    return entities, relations


def _corrupt(
    positives: np.ndarray,
    n_entities: int,
    known: Set[Tuple[int, int, int]],
    rng: np.random.Generator,
) -> np.ndarray:
    """Replace head or tail with equal probability, rejecting known triples."""
    negatives = positives.copy()
    for row in negatives:
        original = tuple(int(x) for x in row)
        for _ in range(NEGATIVE_SAMPLE_ATTEMPTS):
            column = 0 if rng.random() < 0.5 else 2
            candidate = list(original)
            candidate[column] = int(rng.integers(n_entities))
            if tuple(candidate) not in known:
                break
        row[:] = candidate
    return negatives


def train(g: KnowledgeGraph, cfg: TrainConfig) -> EmbeddingSpace:
    """Train TransE predicate vectors with a margin-ranking loss.

    Args:
        g: Graph whose triples are the positives
        cfg: Hyperparameters; identical seeds give bit-identical spaces

    Returns:
        The predicate space, with entity vectors and a TrainingReport attached

    Raises:
        TrainingError: The graph has no edges.
    """
    if g.num_edges == 0:
        raise TrainingError("Cannot train embeddings on a graph without edges")

    started = time.perf_counter()
    rng = np.random.default_rng(cfg.rng_seed)
    entities, relations = initial_vectors(rng, g.num_entities, len(g.predicates), cfg.dim)
    triples = np.array([(e.src, e.predicate, e.dst) for e in g.edges], dtype=np.int64)
    known = {(int(h), int(r), int(t)) for h, r, t in triples}
    report = TrainingReport(epochs=cfg.epochs, rng_seed=cfg.rng_seed)
    lr = cfg.learning_rate

    for epoch in range(cfg.epochs):
        entities /= np.maximum(np.linalg.norm(entities, axis=1, keepdims=True), _EPS)
        order = rng.permutation(len(triples))
        total = 0.0
        count = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = triples[order[start : start + cfg.batch_size]]
            positives = np.repeat(batch, cfg.negatives_per_positive, axis=0)
            negatives = _corrupt(positives, g.num_entities, known, rng)
            h, r, t = positives[:, 0], positives[:, 1], positives[:, 2]
            h2, t2 = negatives[:, 0], negatives[:, 2]

            diff_pos = entities[h] + relations[r] - entities[t]
            diff_neg = entities[h2] + relations[r] - entities[t2]
            d_pos = np.linalg.norm(diff_pos, axis=1)
            d_neg = np.linalg.norm(diff_neg, axis=1)
            losses = np.maximum(0.0, cfg.margin + d_pos - d_neg)
            total += float(losses.sum())
            count += len(losses)

            active = losses > 0.0
            if lr == 0.0 or not active.any():
                continue
            g_pos = diff_pos[active] / np.maximum(d_pos[active], _EPS)[:, None]
            g_neg = diff_neg[active] / np.maximum(d_neg[active], _EPS)[:, None]
            np.add.at(entities, h[active], -lr * g_pos)
            np.add.at(entities, t[active], lr * g_pos)
            np.add.at(entities, h2[active], lr * g_neg)
            np.add.at(entities, t2[active], -lr * g_neg)
            np.add.at(relations, r[active], -lr * (g_pos - g_neg))

        report.losses.append(total / count)
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            _LOGGER.debug(f"Epoch {epoch + 1}/{cfg.epochs}: mean loss {report.losses[-1]:.6f}")

    report.seconds = time.perf_counter() - started
    if not np.all(np.linalg.norm(relations, axis=1) > 0.0):
        raise TrainingError("Training produced an all-zero predicate vector")
    _LOGGER.info(
        f"Trained {len(g.predicates)} predicate vectors (dim {cfg.dim}) in "
        f"{report.seconds:.2f}s, final loss {report.losses[-1]:.6f}"
    )
    return EmbeddingSpace(
        {name: relations[pid] for pid, name in enumerate(g.predicates)},
        entity_vectors=entities,
        report=report,
    )


def save_space(space: EmbeddingSpace, path: Path, text: bool = False) -> None:
    """Persist predicate vectors in the binary format, or as TSV when text is set."""
    path = Path(path)
    if text:
        lines = [
            f"{name}{TSV_SEPARATOR}{','.join(repr(float(x)) for x in space.vector(name))}"
            for name in space.predicates
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return

    record = struct.Struct(f"<{space.dim}d")
    chunks = [EMBEDDING_MAGIC, _HEADER.pack(space.dim, len(space.predicates))]
    for name in space.predicates:
        encoded = name.encode("utf-8")
        chunks.append(_NAME_LENGTH.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(record.pack(*space.vector(name)))
    path.write_bytes(b"".join(chunks))
    _LOGGER.debug(f"Saved {len(space.predicates)} predicate vectors to {path}")


def _load_binary(data: bytes, path: Path) -> EmbeddingSpace:
    offset = len(EMBEDDING_MAGIC)
    if len(data) < offset + _HEADER.size:
        raise EmbeddingError(f"{path}: corrupt header")
    dim, count = _HEADER.unpack_from(data, offset)
    if dim == 0:
        raise EmbeddingError(f"{path}: corrupt header (dim 0)")
    offset += _HEADER.size
    record = struct.Struct(f"<{dim}d")
    vectors: Dict[str, Tuple[float, ...]] = {}
    for index in range(count):
        if len(data) < offset + _NAME_LENGTH.size:
            raise EmbeddingError(f"{path}: truncated at record {index}")
        (length,) = _NAME_LENGTH.unpack_from(data, offset)
        offset += _NAME_LENGTH.size
        if len(data) < offset + length + record.size:
            raise EmbeddingError(f"{path}: truncated at record {index}")
        name = data[offset : offset + length].decode("utf-8")
        offset += length
        vectors[name] = record.unpack_from(data, offset)
        offset += record.size
    if offset != len(data):
        raise EmbeddingError(f"{path}: {len(data) - offset} trailing byte(s)")
    return EmbeddingSpace(vectors)


def _load_text(data: bytes, path: Path) -> EmbeddingSpace:
    vectors: Dict[str, List[float]] = {}
    try:
        lines = data.decode("utf-8").splitlines()
    except UnicodeDecodeError:
        raise EmbeddingError(f"{path}: neither binary nor text embeddings") from None
    for number, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        columns = raw.split(TSV_SEPARATOR)
        if len(columns) != 2:
            raise EmbeddingError(f"{path}:{number}: expected 'predicate<TAB>v1,v2,...'")
        try:
            vectors[columns[0]] = [float(x) for x in columns[1].split(",")]
        except ValueError:
            raise EmbeddingError(f"{path}:{number}: invalid vector component") from None
    if not vectors:
        raise EmbeddingError(f"{path}: no vectors")
    return EmbeddingSpace(vectors)


def load_space(
    path: Path,
    graph: Optional[KnowledgeGraph] = None,
    expected_dim: Optional[int] = None,
) -> EmbeddingSpace:
    """Load a space saved by save_space, detecting the format by its magic bytes.

    Raises:
        EmbeddingError: Corrupt or truncated file, or a dim/predicate mismatch.
    """
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(EMBEDDING_MAGIC):
        space = _load_binary(data, path)
    else:
        space = _load_text(data, path)
    if expected_dim is not None and space.dim != expected_dim:
        raise EmbeddingError(f"{path}: dim {space.dim} does not match expected {expected_dim}")
    if graph is not None:
        space.check_covers(graph)
    _LOGGER.info(f"Loaded {space} from {path}")
    return space
