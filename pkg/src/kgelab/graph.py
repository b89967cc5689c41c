"""Knowledge-graph data model, ingestion, augmentation, and generation.

Graphs are integer-id triple stores with three splits.  The module also
owns the two statistics the rest of the package leans on: per-relation
tail-occurrence counts (the raw material of the popularity baseline) and
synthetic graphs whose tail distribution has controllable concentration,
so that popularity artifacts can be reproduced at desk scale.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import GraphFormatError, KgelabError

__all__ = [
    "Triple",
    "KnowledgeGraph",
    "OccurrenceTable",
    "SyntheticConfig",
    "GenerationError",
    "SPLIT_NAMES",
    "load_graph",
    "save_graph",
    "add_inverse_relations",
    "tail_occurrences",
    "occurrence_histogram",
    "save_histogram_csv",
    "generate_synthetic",
    "triples_to_array",
]

SPLIT_NAMES = ("train", "valid", "test")


class GenerationError(KgelabError):
    """Raised when synthetic generation cannot satisfy its configuration."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class KnowledgeGraph:
    """An integer-id knowledge graph with train/valid/test splits.

    ``augmented`` records whether inverse relations have been added, so
    that training and evaluation agree on relation semantics and the
    augmentation cannot be applied twice.  ``entity_types``, when present,
    maps every entity id to a type id.
    """

    entity_count: int
    relation_count: int
    train: tuple[Triple, ...]
    valid: tuple[Triple, ...] = ()
    test: tuple[Triple, ...] = ()
    entity_types: dict[int, int] | None = None
    augmented: bool = False

    def __post_init__(self):
        if self.entity_count <= 0 or self.relation_count <= 0:
            raise ValueError("entity_count and relation_count must be positive")
        for name in SPLIT_NAMES:
            for t in getattr(self, name):
                if not (0 <= t.head < self.entity_count):
                    raise ValueError(f"{name}: head {t.head} out of range")
                if not (0 <= t.tail < self.entity_count):
                    raise ValueError(f"{name}: tail {t.tail} out of range")
                if not (0 <= t.relation < self.relation_count):
                    raise ValueError(f"{name}: relation {t.relation} out of range")
        train, valid, test = set(self.train), set(self.valid), set(self.test)
        if train & valid or train & test or valid & test:
            raise ValueError("splits must be pairwise disjoint")
        if self.entity_types is not None:
            missing = [e for e in range(self.entity_count) if e not in self.entity_types]
            if missing:
                raise ValueError(
                    f"entity_types must cover every entity; missing {missing[:5]}..."
                    if len(missing) > 5
                    else f"entity_types must cover every entity; missing {missing}"
                )

    def split(self, name: str) -> tuple[Triple, ...]:
        """The triples of one split; ``name`` in {train, valid, test}."""
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    @property
    def num_triples(self) -> int:
        return len(self.train) + len(self.valid) + len(self.test)


def triples_to_array(triples: Iterable[Triple]) -> np.ndarray:
    """Pack triples into an int64 array of shape (n, 3)."""
    arr = np.asarray([(t.head, t.relation, t.tail) for t in triples], dtype=np.int64)
    return arr.reshape(-1, 3)


@dataclass(frozen=True)
class OccurrenceTable:
    """Tail-occurrence counts: per (relation, entity) and per entity.

    ``global_counts[t]`` always equals the sum of ``per_relation[(r, t)]``
    over relations; zero counts are represented by key absence.
    """

    per_relation: dict[tuple[int, int], int]
    global_counts: dict[int, int]

    def total(self) -> int:
        """Number of triples counted (size of the counted split)."""
        return sum(self.global_counts.values())


@dataclass(frozen=True)
class SyntheticConfig:
    """Configuration for synthetic graph generation.

    ``zipf_exponent`` controls tail concentration: 0 gives uniform tails,
    larger values concentrate mass on each relation's few preferred
    entities.  When ``typed``, entities get round-robin types and every
    relation draws tails from a single type.
    """

    entity_count: int
    relation_count: int
    triple_count: int
    zipf_exponent: float = 1.0
    typed: bool = False
    type_count: int = 1
    split_fractions: tuple[float, float, float] = (0.9, 0.05, 0.05)
    seed: int = 0

    def __post_init__(self):
        if min(self.entity_count, self.relation_count, self.triple_count) <= 0:
            raise ValueError("counts must be positive")
        if self.zipf_exponent < 0:
            raise ValueError("zipf_exponent must be non-negative")
        if self.type_count <= 0:
            raise ValueError("type_count must be positive")
        if self.typed and self.type_count > self.entity_count:
            raise ValueError("type_count cannot exceed entity_count")
        f = self.split_fractions
        if len(f) != 3 or any(x < 0 for x in f):
            raise ValueError("split_fractions must be three non-negative reals")
        if abs(sum(f) - 1.0) > 1e-9:
            raise ValueError("split_fractions must sum to 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


# ---------------------------------------------------------------------------
# Ingestion / serialization
# ---------------------------------------------------------------------------

_METADATA_FILE = "metadata.json"
_TYPES_FILE = "types.tsv"


def _parse_id_tsv(path: Path, columns: int) -> list[tuple[int, ...]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line == "":
                continue
            parts = line.split("\t")
            if len(parts) != columns:
                raise GraphFormatError(
                    f"{path.name}: line {lineno}: expected {columns} "
                    f"tab-separated fields, got {len(parts)}"
                )
            try:
                values = tuple(int(p) for p in parts)
            except ValueError:
                raise GraphFormatError(
                    f"{path.name}: line {lineno}: non-integer field in {line!r}"
                ) from None
            if any(v < 0 for v in values):
                raise GraphFormatError(
                    f"{path.name}: line {lineno}: negative id in {line!r}"
                )
            rows.append(values)
    return rows


def load_graph(path: str | Path, format: str = "tsv-id") -> KnowledgeGraph:
    """Load a graph from a directory of id-TSV split files.

    Expects ``train.tsv``/``valid.tsv``/``test.tsv`` with lines
    ``head<TAB>relation<TAB>tail`` (decimal ids), plus optional
    ``metadata.json`` (entity_count, relation_count, augmented) and
    ``types.tsv``.  Without metadata, counts default to 1 + max observed
    id.  Malformed lines raise :class:`GraphFormatError` with the line
    number; ids outside declared counts raise a bounds error.
    """
    if format != "tsv-id":
        raise ValueError(f"unsupported format {format!r}")
    root = Path(path)
    if not root.is_dir():
        raise GraphFormatError(f"graph directory not found: {root}")

    splits: dict[str, list[Triple]] = {}
    for name in SPLIT_NAMES:
        f = root / f"{name}.tsv"
        if not f.exists():
            raise GraphFormatError(f"missing split file {f.name}")
        splits[name] = [Triple(*row) for row in _parse_id_tsv(f, 3)]
    if not splits["train"]:
        raise GraphFormatError("empty training set")

    meta_path = root / _METADATA_FILE
    augmented = False
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        entity_count = int(meta["entity_count"])
        relation_count = int(meta["relation_count"])
        augmented = bool(meta.get("augmented", False))
    else:
        all_triples = [t for s in splits.values() for t in s]
        entity_count = 1 + max(max(t.head, t.tail) for t in all_triples)
        relation_count = 1 + max(t.relation for t in all_triples)

    entity_types = None
    types_path = root / _TYPES_FILE
    if types_path.exists():
        entity_types = {e: ty for e, ty in _parse_id_tsv(types_path, 2)}

    try:
        return KnowledgeGraph(
            entity_count=entity_count,
            relation_count=relation_count,
            train=tuple(splits["train"]),
            valid=tuple(splits["valid"]),
            test=tuple(splits["test"]),
            entity_types=entity_types,
            augmented=augmented,
        )
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None


def save_graph(g: KnowledgeGraph, path: str | Path) -> None:
    """Write a graph as id-TSV splits plus metadata (and types if present)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        with open(root / f"{name}.tsv", "w", encoding="utf-8", newline="\n") as fh:
            for t in g.split(name):
                fh.write(f"{t.head}\t{t.relation}\t{t.tail}\n")
    meta = {
        "entity_count": g.entity_count,
        "relation_count": g.relation_count,
        "augmented": g.augmented,
    }
    with open(root / _METADATA_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if g.entity_types is not None:
        with open(root / _TYPES_FILE, "w", encoding="utf-8", newline="\n") as fh:
            for e in sorted(g.entity_types):
                fh.write(f"{e}\t{g.entity_types[e]}\n")


# ---------------------------------------------------------------------------
# Augmentation and occurrence statistics
# ---------------------------------------------------------------------------


def add_inverse_relations(g: KnowledgeGraph) -> KnowledgeGraph:
    """Add the inverse triple (t, r + R, h) for every (h, r, t), per split.

    Doubles ``relation_count`` and marks the graph ``augmented``.  Head
    queries can then be asked as tail queries against the inverse
    relation.  Refuses a second application: augmenting twice would
    silently quadruple the relation vocabulary.
    """
    if g.augmented:
        raise ValueError("graph is already augmented with inverse relations")
    offset = g.relation_count

    def augment(split: tuple[Triple, ...]) -> tuple[Triple, ...]:
        inverses = tuple(Triple(t.tail, t.relation + offset, t.head) for t in split)
        return split + inverses

    return replace(
        g,
        relation_count=2 * g.relation_count,
        train=augment(g.train),
        valid=augment(g.valid),
        test=augment(g.test),
        augmented=True,
    )


def tail_occurrences(g: KnowledgeGraph, split: str = "train") -> OccurrenceTable:
    """Count tail-entity occurrences per relation in one split.

    ``per_relation[(r, t)]`` is the number of triples of the split with
    relation r and tail t; unseen pairs are absent rather than zero.
    """
    per_relation = Counter((t.relation, t.tail) for t in g.split(split))
    global_counts = Counter(t.tail for t in g.split(split))
    return OccurrenceTable(dict(per_relation), dict(global_counts))


def occurrence_histogram(table: OccurrenceTable) -> list[tuple[int, int]]:
    """Tabulate (occurrence-count, num-entities) pairs, ascending by count.

    Only entities that occur at least once contribute, so the num-entities
    column sums to the number of distinct observed tails.
    """
    freq = Counter(table.global_counts.values())
    return sorted(freq.items())


def save_histogram_csv(histogram: list[tuple[int, int]], path: str | Path) -> None:
    """Write a histogram as CSV with header ``occurrence,num_entities``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("occurrence,num_entities\n")
        for occurrence, num_entities in histogram:
            fh.write(f"{occurrence},{num_entities}\n")


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


def _split_sizes(total: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(total * fractions[0])
    n_valid = int(total * fractions[1])
    return n_train, n_valid, total - n_train - n_valid


def generate_synthetic(cfg: SyntheticConfig) -> KnowledgeGraph:
    """Generate a random graph with Zipf-concentrated, relation-specific tails.

    Each relation owns a permutation of its tail pool (derived from the
    seed and relation id), and tails are drawn by rank from a
    Zipf(``zipf_exponent``) distribution over that permutation, so
    different relations concentrate on different entities.  Heads and
    relations are uniform.  Duplicates are resampled with a retry budget
    of 100x ``triple_count``; exhausting it raises
    :class:`GenerationError`.  Identical configs generate bit-identical
    graphs.
    """
    E, R, N = cfg.entity_count, cfg.relation_count, cfg.triple_count
    T = cfg.type_count if cfg.typed else 1

    entity_types = None
    if cfg.typed:
        entity_types = {e: e % T for e in range(E)}

    # Per-relation tail pools, permuted by a stream keyed on (seed, relation).
    pools: list[np.ndarray] = []
    cdfs: list[np.ndarray] = []
    cdf_cache: dict[int, np.ndarray] = {}
    for r in range(R):
        if cfg.typed:
            members = np.arange(r % T, E, T, dtype=np.int64)
        else:
            members = np.arange(E, dtype=np.int64)
        perm_rng = np.random.default_rng([cfg.seed, 1, r])
        pools.append(perm_rng.permutation(members))
        size = len(members)
        if size not in cdf_cache:
            weights = (np.arange(1, size + 1, dtype=np.float64)) ** (-cfg.zipf_exponent)
            cdf_cache[size] = np.cumsum(weights) / np.sum(weights)
        cdfs.append(cdf_cache[size])

    rng = np.random.default_rng([cfg.seed, 0])
    seen: set[Triple] = set()
    triples: list[Triple] = []
    budget = 100 * N
    attempts = 0
    while len(triples) < N:
        if attempts >= budget:
            raise GenerationError(
                f"could not generate {N} distinct triples within "
                f"{budget} attempts ({len(triples)} found); "
                "triple_count is infeasible for this configuration"
            )
        attempts += 1
        h = int(rng.integers(0, E))
        r = int(rng.integers(0, R))
        u = rng.random()
        k = int(np.searchsorted(cdfs[r], u, side="right"))
        t = int(pools[r][min(k, len(pools[r]) - 1)])
        triple = Triple(h, r, t)
        if triple in seen:
            continue
        seen.add(triple)
        triples.append(triple)

    n_train, n_valid, _ = _split_sizes(N, cfg.split_fractions)
    return KnowledgeGraph(
        entity_count=E,
        relation_count=R,
        train=tuple(triples[:n_train]),
        valid=tuple(triples[n_train:n_train + n_valid]),
        test=tuple(triples[n_train + n_valid:]),
        entity_types=entity_types,
        augmented=False,
    )
