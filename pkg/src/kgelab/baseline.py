"""The tail-occurrence counting scorer.

Scores a triple (h, r, t) by how often t appeared as the tail of relation
r in the training split, ignoring the head entirely.  On graphs whose
tail distribution is concentrated this zero-parameter counter is a
surprisingly strong ranker under sampled-negative evaluation, which is
exactly the artifact this package exists to study.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import KnowledgeGraph, OccurrenceTable, tail_occurrences
from .ranking import Scorer

__all__ = [
    "EntOccurModel",
    "fit_entoccur",
    "entoccur_score",
    "save_entoccur_csv",
    "load_entoccur_csv",
]

_TIEBREAK_EPS = 1e-6


class EntOccurModel(Scorer):
    """Per-relation tail-occurrence counts as a Scorer.

    ``global_tiebreak`` optionally adds ``1e-6 * global_count(t)`` to
    every score so that entities tied on a relation count are ordered by
    overall popularity; off by default, since raw counts are the defined
    behavior and the tie structure is itself of interest.
    """

    def __init__(
        self,
        table: OccurrenceTable,
        entity_count: int,
        relation_count: int,
        global_tiebreak: bool = False,
    ):
        self.table = table
        self.entity_count = entity_count
        self.relation_count = relation_count
        self.global_tiebreak = global_tiebreak
        self._rows: dict[int, np.ndarray] = {}
        self._global_row: np.ndarray | None = None

    def _relation_row(self, relation: int) -> np.ndarray:
        row = self._rows.get(relation)
        if row is None:
            row = np.zeros(self.entity_count)
            for (r, t), c in self.table.per_relation.items():
                if r == relation:
                    row[t] = c
            self._rows[relation] = row
        return row

    def _globals(self) -> np.ndarray:
        if self._global_row is None:
            row = np.zeros(self.entity_count)
            for t, c in self.table.global_counts.items():
                row[t] = c
            self._global_row = row
        return self._global_row

    def score_candidates(self, head, relation, candidates) -> np.ndarray:
        cand = np.asarray(candidates, dtype=np.int64)
        if not 0 <= relation < self.relation_count:
            raise ValueError("relation id out of bounds")
        if cand.size and (cand.min() < 0 or cand.max() >= self.entity_count):
            raise ValueError("candidate entity id out of bounds")
        scores = self._relation_row(int(relation))[cand]
        if self.global_tiebreak:
            scores = scores + _TIEBREAK_EPS * self._globals()[cand]
        return scores


def fit_entoccur(g: KnowledgeGraph, global_tiebreak: bool = False) -> EntOccurModel:
    """Count tail occurrences over the train split and wrap them as a model.

    Meant for augmented graphs, where the counts also cover inverse
    relations and therefore head-prediction queries.
    """
    return EntOccurModel(
        tail_occurrences(g, "train"),
        entity_count=g.entity_count,
        relation_count=g.relation_count,
        global_tiebreak=global_tiebreak,
    )


def entoccur_score(model: EntOccurModel, h: int, r: int, t: int) -> float:
    """Occurrence count of (r, t) in training; 0 if unseen; h is unused."""
    score = float(model.table.per_relation.get((r, t), 0))
    if model.global_tiebreak:
        score += _TIEBREAK_EPS * model.table.global_counts.get(t, 0)
    return score


def save_entoccur_csv(model: EntOccurModel, path: str | Path) -> None:
    """Serialize the nonzero counts as ``relation,entity,count`` rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("relation,entity,count\n")
        for (r, t) in sorted(model.table.per_relation):
            fh.write(f"{r},{t},{model.table.per_relation[(r, t)]}\n")


def load_entoccur_csv(
    path: str | Path,
    entity_count: int | None = None,
    relation_count: int | None = None,
    global_tiebreak: bool = False,
) -> EntOccurModel:
    """Read counts back; counts default the vocab sizes to 1 + max id."""
    per_relation: dict[tuple[int, int], int] = {}
    global_counts: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "relation,entity,count":
            raise ValueError(f"unexpected header {header!r} in {path}")
        for line in fh:
            r_s, t_s, c_s = line.rstrip("\n").split(",")
            r, t, c = int(r_s), int(t_s), int(c_s)
            per_relation[(r, t)] = c
            global_counts[t] = global_counts.get(t, 0) + c
    if entity_count is None:
        entity_count = 1 + max((t for _, t in per_relation), default=0)
    if relation_count is None:
        relation_count = 1 + max((r for r, _ in per_relation), default=0)
    return EntOccurModel(
        OccurrenceTable(per_relation, global_counts),
        entity_count=entity_count,
        relation_count=relation_count,
        global_tiebreak=global_tiebreak,
    )
