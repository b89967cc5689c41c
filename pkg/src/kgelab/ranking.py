"""Filtered ranking evaluation under three candidate protocols.

The same scorer can be ranked against uniformly sampled negatives, tail
type-constrained negatives, or the full entity set.  All protocols share
one query path: head prediction is expected to be materialized as
inverse-relation tail queries when the graph is augmented, so every query
here asks "which tail".  Ties are resolved by mean rank (the average of
the optimistic and pessimistic ranks), which puts constant scorers at
chance instead of letting them inherit optimistic ranks; this matters
because counting scorers produce many exact ties.
"""

from __future__ import annotations

import abc
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError
from .graph import KnowledgeGraph, Triple
from .scoring import SFSpec
from .training import EmbeddingStore

__all__ = [
    "EvalProtocol",
    "RankingMetrics",
    "Scorer",
    "EmbeddingScorer",
    "OracleScorer",
    "ConstantScorer",
    "RandomScorer",
    "build_filter",
    "rank_of_positive",
    "evaluate",
    "save_metrics_json",
]

_MODES = ("sampled_uniform", "typed_sampled", "full_ranking")
_MODE_LABELS = {
    "sampled_uniform": "SampledUniform",
    "typed_sampled": "TypedSampled",
    "full_ranking": "FullRanking",
}


@dataclass(frozen=True)
class EvalProtocol:
    """How candidate tails are drawn for each query.

    ``filter_splits`` chooses what "known true" means when filtering:
    "all" (default) filters against train+valid+test, "train" against the
    train split only.  Sampled modes derive each query's negative set
    from (seed, query index), so single queries re-run reproducibly;
    FullRanking ignores the seed entirely.
    """

    mode: str
    num_negatives: int | None = None
    filtered: bool = True
    seed: int = 0
    filter_splits: str = "all"

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown protocol mode {self.mode!r}")
        if self.mode == "full_ranking":
            if self.num_negatives is not None:
                raise ValueError("full_ranking takes no num_negatives")
        else:
            if self.num_negatives is None or self.num_negatives <= 0:
                raise ValueError(f"{self.mode} requires a positive num_negatives")
        if self.seed < 0:
            raise ValueError("protocol seed must be non-negative")
        if self.filter_splits not in ("all", "train"):
            raise ValueError("filter_splits must be 'all' or 'train'")

    @classmethod
    def sampled_uniform(cls, num_negatives: int, **kw) -> "EvalProtocol":
        return cls("sampled_uniform", num_negatives, **kw)

    @classmethod
    def typed_sampled(cls, num_negatives: int, **kw) -> "EvalProtocol":
        return cls("typed_sampled", num_negatives, **kw)

    @classmethod
    def full_ranking(cls, **kw) -> "EvalProtocol":
        return cls("full_ranking", None, **kw)

    def label(self) -> str:
        """Canonical name used in metrics files, e.g. ``SampledUniform(500)``."""
        base = _MODE_LABELS[self.mode]
        if self.num_negatives is not None:
            base += f"({self.num_negatives})"
        if not self.filtered:
            base += "/unfiltered"
        elif self.filter_splits == "train":
            base += "/train-filtered"
        return base


@dataclass(frozen=True)
class RankingMetrics:
    """MRR and Hits@k over one evaluated split.

    ``shortfall_queries`` counts queries whose eligible candidate pool was
    smaller than the requested sample size (they rank against all
    eligible candidates instead).
    """

    mrr: float
    hits_at: dict[int, float]
    num_queries: int
    shortfall_queries: int = 0

    def __post_init__(self):
        if not 0.0 < self.mrr <= 1.0:
            raise ValueError(f"mrr must lie in (0, 1], got {self.mrr}")
        h = self.hits_at
        if set(h) != {1, 3, 10} or not h[1] <= h[3] <= h[10]:
            raise ValueError("hits_at must be monotone over k in {1, 3, 10}")
        if self.num_queries <= 0:
            raise ValueError("num_queries must be positive")


class Scorer(abc.ABC):
    """Anything that scores candidate tails for a (head, relation) query.

    Implementations must be deterministic for fixed inputs and safe to
    share read-only across queries.
    """

    @abc.abstractmethod
    def score_candidates(
        self, head: int, relation: int, candidates: np.ndarray
    ) -> np.ndarray:
        """Scores (higher is better) aligned with ``candidates``."""


class EmbeddingScorer(Scorer):
    """Scores via a trained embedding store and a scoring-function spec."""

    def __init__(self, store: EmbeddingStore, spec: SFSpec):
        self.store = store
        self.spec = spec
        self._prog = _kernels.encode_program(spec)

    def score_candidates(self, head, relation, candidates) -> np.ndarray:
        cand = np.ascontiguousarray(np.asarray(candidates, dtype=np.int64))
        store = self.store
        if cand.size and (cand.min() < 0 or cand.max() >= store.entity_count):
            raise ValueError("candidate entity id out of bounds")
        if not (0 <= head < store.entity_count):
            raise ValueError("head id out of bounds")
        if not (0 <= relation < store.relation_count):
            raise ValueError("relation id out of bounds")
        dist = _kernels.run_dist(
            store.entity_embeddings, store.relation_embeddings,
            head, relation, cand, self._prog,
        )
        return -dist


class OracleScorer(Scorer):
    """Diagnostic perfect scorer: 1 for known-true triples, 0 otherwise."""

    def __init__(self, g: KnowledgeGraph):
        self._truth = build_filter(g)

    def score_candidates(self, head, relation, candidates) -> np.ndarray:
        return np.asarray(
            [1.0 if (head, relation, int(t)) in self._truth else 0.0
             for t in candidates]
        )


class ConstantScorer(Scorer):
    """Diagnostic scorer that ties everything; exercises mean-rank math."""

    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def score_candidates(self, head, relation, candidates) -> np.ndarray:
        return np.full(len(candidates), self.value)


class RandomScorer(Scorer):
    """Diagnostic chance-level scorer, deterministic per (head, relation).

    Each (head, relation) pair hashes to an independent score vector over
    all entities, so scores do not depend on which candidates are asked
    for together.
    """

    def __init__(self, entity_count: int, seed: int = 0):
        self.entity_count = entity_count
        self.seed = seed

    def score_candidates(self, head, relation, candidates) -> np.ndarray:
        rng = np.random.default_rng([self.seed, head, relation])
        table = rng.random(self.entity_count)
        return table[np.asarray(candidates, dtype=np.int64)]


def build_filter(g: KnowledgeGraph) -> set[Triple]:
    """The known-true triple set: union of train, valid, and test."""
    return set(g.train) | set(g.valid) | set(g.test)


def rank_of_positive(scores_neg, score_pos: float) -> float:
    """Mean rank of the positive among negatives.

    rank = 1 + #{negatives scoring strictly higher} + 0.5 * #{exact ties}.
    """
    s = np.asarray(scores_neg)
    return float(1.0 + np.count_nonzero(s > score_pos)
                 + 0.5 * np.count_nonzero(s == score_pos))


def _truth_index(g: KnowledgeGraph, filter_splits: str) -> dict[tuple[int, int], set[int]]:
    splits = ("train",) if filter_splits == "train" else ("train", "valid", "test")
    index: dict[tuple[int, int], set[int]] = {}
    for name in splits:
        for h, r, t in g.split(name):
            index.setdefault((h, r), set()).add(t)
    return index


def _sample_distinct(
    rng: np.random.Generator, pool: np.ndarray | None, pool_size: int,
    excluded: set[int], count: int,
) -> list[int]:
    """Draw ``count`` distinct eligible entities by rejection."""
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < count:
        draws = rng.integers(0, pool_size, size=(count - len(chosen)) + 8)
        for v in draws:
            if len(chosen) == count:
                break
            e = int(pool[v]) if pool is not None else int(v)
            if e in excluded or e in seen:
                continue
            seen.add(e)
            chosen.append(e)
    return chosen


def evaluate(
    scorer: Scorer,
    g: KnowledgeGraph,
    split: str,
    protocol: EvalProtocol,
    return_ranks: bool = False,
):
    """Rank every query triple of a split and aggregate MRR / Hits@k.

    Each triple (h, r, t) is scored against candidates drawn per the
    protocol; the positive is excluded from the negative set always, and
    other known-true tails for (h, r) are excluded when filtering.  If a
    query's eligible pool is smaller than the requested sample, all
    eligible candidates are used and the query counts toward
    ``shortfall_queries``.  Results are bit-deterministic given the
    protocol seed (FullRanking is seed-independent).

    With ``return_ranks=True`` returns ``(metrics, ranks)`` where ranks
    align with the split's triple order.
    """
    if split not in ("valid", "test"):
        raise ValueError(f"split must be 'valid' or 'test', got {split!r}")
    queries = g.split(split)
    if not queries:
        raise ValueError(f"cannot evaluate an empty {split} split")

    typed = protocol.mode == "typed_sampled"
    if typed and g.entity_types is None:
        raise ConfigError("typed_sampled protocol requires entity types")

    E = g.entity_count
    truth = _truth_index(g, protocol.filter_splits) if protocol.filtered else {}
    type_of: np.ndarray | None = None
    pools: dict[int, np.ndarray] = {}
    if typed:
        type_of = np.empty(E, dtype=np.int64)
        for e, ty in g.entity_types.items():
            type_of[e] = ty
        for ty in np.unique(type_of):
            pools[int(ty)] = np.flatnonzero(type_of == ty)
    all_entities = np.arange(E, dtype=np.int64)

    ranks = np.empty(len(queries))
    shortfall = 0
    for qi, (h, r, t) in enumerate(queries):
        excluded = set(truth.get((h, r), ())) if protocol.filtered else set()
        excluded.add(t)
        if protocol.mode == "full_ranking":
            scores = np.asarray(scorer.score_candidates(h, r, all_entities))
            keep = np.ones(E, dtype=bool)
            keep[list(excluded)] = False
            ranks[qi] = rank_of_positive(scores[keep], scores[t])
            continue

        if typed:
            pool = pools[int(type_of[t])]
            pool_size = len(pool)
            ineligible = sum(1 for e in excluded if type_of[e] == type_of[t])
        else:
            pool = None
            pool_size = E
            ineligible = len(excluded)
        eligible = pool_size - ineligible
        n = protocol.num_negatives
        if eligible < n:
            shortfall += 1
        if eligible <= n:
            members = pool if pool is not None else all_entities
            negatives = [int(e) for e in members if int(e) not in excluded]
        else:
            rng = np.random.default_rng([protocol.seed, qi])
            negatives = _sample_distinct(rng, pool, pool_size, excluded, n)
        cand = np.empty(1 + len(negatives), dtype=np.int64)
        cand[0] = t
        cand[1:] = negatives
        scores = np.asarray(scorer.score_candidates(h, r, cand))
        ranks[qi] = rank_of_positive(scores[1:], scores[0])

    metrics = RankingMetrics(
        mrr=float(np.mean(1.0 / ranks)),
        hits_at={k: float(np.mean(ranks <= k)) for k in (1, 3, 10)},
        num_queries=len(queries),
        shortfall_queries=shortfall,
    )
    return (metrics, ranks) if return_ranks else metrics


def save_metrics_json(
    metrics: RankingMetrics,
    protocol: EvalProtocol,
    split: str,
    path: str | Path,
) -> None:
    """Write one metrics record; reruns of the same run are byte-identical."""
    payload = {
        "protocol": protocol.label(),
        "split": split,
        "mrr": metrics.mrr,
        "hits1": metrics.hits_at[1],
        "hits3": metrics.hits_at[3],
        "hits10": metrics.hits_at[10],
        "num_queries": metrics.num_queries,
        "seed": protocol.seed,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
