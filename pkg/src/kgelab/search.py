"""Random search over scoring functions: sample, train, select by valid MRR.

The outer loop of the bi-level problem.  Each trial is fully determined by
(search seed, trial index): the candidate spec comes from one derived
stream and the trial's training seed from another, so trials can be
re-run in isolation, in parallel, or resumed after a crash without
changing any result.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SFParseError
from .graph import KnowledgeGraph
from .ranking import EmbeddingScorer, EvalProtocol, evaluate
from .scoring import SFSpec, enumerate_terms, parse_sf, print_sf, uses_head
from .training import TrainConfig, train

__all__ = [
    "SearchConfig",
    "TrialRecord",
    "SearchResult",
    "sample_sf",
    "run_search",
]

# Derivation salts for the per-trial random streams.
_STREAM_SPEC = 10
_STREAM_TRIAL_SEED = 20


@dataclass(frozen=True)
class SearchConfig:
    """Random-search settings.

    ``budget`` trials of ``num_terms``-term candidates, each trained with
    ``train_config`` (its seed is replaced per trial) and ranked by valid
    MRR under ``protocol``.
    """

    budget: int = 10
    num_terms: int = 4
    train_config: TrainConfig = field(default_factory=TrainConfig)
    protocol: EvalProtocol = field(
        default_factory=lambda: EvalProtocol.sampled_uniform(500)
    )
    seed: int = 0

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if not 1 <= self.num_terms <= 35:
            raise ValueError("num_terms must lie in [1, 35]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class TrialRecord:
    """One completed trial of the search."""

    trial_index: int
    spec: SFSpec
    per_candidate_seed: int
    valid_mrr: float
    test_mrr: float
    train_seconds: float


@dataclass(frozen=True)
class SearchResult:
    """Leaderboard sorted by valid MRR descending (ties: trial order)."""

    leaderboard: tuple[TrialRecord, ...]

    @property
    def best(self) -> SFSpec:
        return self.leaderboard[0].spec


def sample_sf(num_terms: int, rng: np.random.Generator) -> SFSpec:
    """Draw a random spec: num_terms distinct terms, signs uniform.

    Terms are drawn uniformly over the 56 ordered slots; a draw that
    duplicates an already-chosen term under commutative equality is
    rejected and redrawn (consuming no sign draw), then the accepted
    term's coefficient is drawn.  An unordered product is therefore twice
    as likely per draw as a first-order term or a self-product.
    """
    if not 1 <= num_terms <= 35:
        # only 35 distinct terms exist once a*b and b*a are identified
        raise ValueError("num_terms must lie in [1, 35]")
    slots = enumerate_terms()
    chosen: list[tuple[int, object]] = []
    have: set = set()
    while len(chosen) < num_terms:
        term = slots[int(rng.integers(0, len(slots)))]
        if term in have:
            continue
        coef = 1 if int(rng.integers(0, 2)) else -1
        have.add(term)
        chosen.append((coef, term))
    return SFSpec(tuple(chosen))


def _trial_spec(cfg: SearchConfig, index: int) -> SFSpec:
    rng = np.random.default_rng([cfg.seed, _STREAM_SPEC, index])
    return sample_sf(cfg.num_terms, rng)


def _trial_seed(cfg: SearchConfig, index: int) -> int:
    ss = np.random.SeedSequence([cfg.seed, _STREAM_TRIAL_SEED, index])
    return int(ss.generate_state(1)[0])


def _trial_path(ledger_dir: Path, index: int) -> Path:
    return ledger_dir / f"trial_{index:04d}.json"


def _load_trial(path: Path) -> TrialRecord:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return TrialRecord(
        trial_index=doc["trial_index"],
        spec=parse_sf(doc["spec"]),
        per_candidate_seed=doc["per_candidate_seed"],
        valid_mrr=doc["valid_mrr"],
        test_mrr=doc["test_mrr"],
        train_seconds=doc["train_seconds"],
    )


def _save_trial(path: Path, rec: TrialRecord) -> None:
    doc = {
        "trial_index": rec.trial_index,
        "spec": print_sf(rec.spec),
        "per_candidate_seed": rec.per_candidate_seed,
        "valid_mrr": rec.valid_mrr,
        "test_mrr": rec.test_mrr,
        "train_seconds": rec.train_seconds,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_trial(g: KnowledgeGraph, cfg: SearchConfig, index: int) -> TrialRecord:
    """Train and score the trial at ``index`` from scratch."""
    spec = _trial_spec(cfg, index)
    seed = _trial_seed(cfg, index)
    tc = dataclasses.replace(cfg.train_config, seed=seed)
    t0 = time.perf_counter()
    store, _ = train(g, spec, tc)
    elapsed = time.perf_counter() - t0
    scorer = EmbeddingScorer(store, spec)
    valid_mrr = evaluate(scorer, g, "valid", cfg.protocol).mrr
    test_mrr = evaluate(scorer, g, "test", cfg.protocol).mrr
    return TrialRecord(
        trial_index=index,
        spec=spec,
        per_candidate_seed=seed,
        valid_mrr=valid_mrr,
        test_mrr=test_mrr,
        train_seconds=elapsed,
    )


def run_search(
    g: KnowledgeGraph,
    cfg: SearchConfig,
    ledger_dir: str | Path | None = None,
) -> SearchResult:
    """Run (or resume) the full search and assemble the leaderboard.

    With a ledger directory, each finished trial is persisted as
    ``trial_NNNN.json`` the moment it completes, and trials whose file
    already parses are skipped on re-run, which makes the search
    crash-resumable.  A ``summary.json`` holding the leaderboard (without
    timing fields, so re-runs are byte-identical) is written at the end.
    """
    ledger = Path(ledger_dir) if ledger_dir is not None else None
    if ledger is not None:
        ledger.mkdir(parents=True, exist_ok=True)

    records: list[TrialRecord] = []
    for index in range(cfg.budget):
        if ledger is not None:
            path = _trial_path(ledger, index)
            if path.exists():
                try:
                    records.append(_load_trial(path))
                    continue
                except (json.JSONDecodeError, KeyError, SFParseError):
                    pass  # partial write from an interrupted run: redo it
        rec = run_trial(g, cfg, index)
        if ledger is not None:
            _save_trial(_trial_path(ledger, index), rec)
        records.append(rec)

    leaderboard = tuple(
        sorted(records, key=lambda r: (-r.valid_mrr, r.trial_index))
    )
    result = SearchResult(leaderboard)
    if ledger is not None:
        summary = {
            "budget": cfg.budget,
            "num_terms": cfg.num_terms,
            "seed": cfg.seed,
            "protocol": cfg.protocol.label(),
            "best_spec": print_sf(result.best),
            "best_valid_mrr": leaderboard[0].valid_mrr,
            "leaderboard": [
                {
                    "trial_index": r.trial_index,
                    "spec": print_sf(r.spec),
                    "uses_head": uses_head(r.spec),
                    "valid_mrr": r.valid_mrr,
                    "test_mrr": r.test_mrr,
                }
                for r in leaderboard
            ],
        }
        (ledger / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return result
