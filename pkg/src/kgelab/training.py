"""Embedding storage, scoring, the margin loss, sparse Adam, and training.

The trainable state is one dense array per vocabulary: entities hold two
part vectors (e0, e1), relations three (r0, r1, r2), all float64
internally.  The loss follows the margin-sigmoid convention over L1
distances d = -score:

    L = -log sigma(margin - d_pos) - sum_i w_i log sigma(d_i - margin)

with uniform weights w_i = 1/n by default, or detached self-adversarial
softmax weights as an alternative.  Scoring the loss over distances
rather than raw scores keeps the positive term unsaturated; the raw-score
reading would be degenerate because scores are always <= 0.

Determinism: every random stream is derived from (config seed, stream id)
via numpy SeedSequence spawning, and all kernels are single-threaded,
so equal configs produce bit-identical runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit, softmax

from . import _kernels
from .graph import KnowledgeGraph, Triple, triples_to_array
from .scoring import SFSpec, parse_sf, print_sf

__all__ = [
    "EmbeddingStore",
    "TrainConfig",
    "TrainReport",
    "AdamState",
    "SparseGradients",
    "init_embeddings",
    "score",
    "score_batch_tails",
    "loss_and_grad",
    "adam_step",
    "sample_negatives",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "save_train_report_csv",
]

# Random stream ids, combined with the config seed as default_rng([seed, id]).
_STREAM_INIT = 0
_STREAM_BATCH = 1
_STREAM_NEG = 2
_STREAM_DROPOUT = 3


@dataclass
class EmbeddingStore:
    """Dense embedding tables: entities [E, 2, d], relations [R, 3, d].

    Part index 0 of an entity row is e0 and 1 is e1; relation parts are
    r0, r1, r2 in order.  Values are float64 and must stay finite.
    """

    entity_embeddings: np.ndarray
    relation_embeddings: np.ndarray

    def __post_init__(self):
        ent, rel = self.entity_embeddings, self.relation_embeddings
        if ent.ndim != 3 or ent.shape[1] != 2:
            raise ValueError(f"entity table must be [E, 2, d], got {ent.shape}")
        if rel.ndim != 3 or rel.shape[1] != 3:
            raise ValueError(f"relation table must be [R, 3, d], got {rel.shape}")
        if ent.shape[2] != rel.shape[2]:
            raise ValueError("entity and relation dims differ")
        if not (np.isfinite(ent).all() and np.isfinite(rel).all()):
            raise ValueError("embeddings must be finite")

    @property
    def dim(self) -> int:
        return self.entity_embeddings.shape[2]

    @property
    def entity_count(self) -> int:
        return self.entity_embeddings.shape[0]

    @property
    def relation_count(self) -> int:
        return self.relation_embeddings.shape[0]

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(
            self.entity_embeddings.copy(), self.relation_embeddings.copy()
        )


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters.

    Defaults are the study's settings at desk scale: dim 32 here (200 at
    paper scale), learning rate 5e-4, batch 512, 128 negatives per
    positive, margin 6, dropout 0.1.  ``valid_negatives`` sizes the
    sampled protocol used for the in-training validation curve.
    """

    dim: int = 32
    learning_rate: float = 5e-4
    batch_size: int = 512
    negatives_per_positive: int = 128
    margin: float = 6.0
    dropout_rate: float = 0.1
    max_steps: int = 2000
    valid_interval: int = 500
    negative_weighting: str = "uniform"
    adversarial_temperature: float = 1.0
    valid_negatives: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.dim <= 0 or self.batch_size <= 0 or self.negatives_per_positive <= 0:
            raise ValueError("dim, batch_size, negatives_per_positive must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.max_steps < 0 or self.valid_interval <= 0:
            raise ValueError("max_steps must be >= 0 and valid_interval positive")
        if self.negative_weighting not in ("uniform", "self_adversarial"):
            raise ValueError(
                "negative_weighting must be 'uniform' or 'self_adversarial'"
            )
        if self.adversarial_temperature <= 0:
            raise ValueError("adversarial_temperature must be positive")
        if self.valid_negatives <= 0:
            raise ValueError("valid_negatives must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class TrainReport:
    """Validation curve, best-snapshot bookkeeping, and wall time."""

    curve: tuple[tuple[int, float], ...]
    wall_seconds: float
    best_step: int | None
    best_valid_mrr: float | None
    store: "EmbeddingStore | None" = None

    def __post_init__(self):
        steps = [s for s, _ in self.curve]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("curve steps must be strictly increasing")


@dataclass
class SparseGradients:
    """Gradients for the rows a loss actually touched."""

    entity_ids: np.ndarray      # (ke,) int64, sorted unique
    entity_grads: np.ndarray    # (ke, 2, d)
    relation_ids: np.ndarray    # (kr,) int64, sorted unique
    relation_grads: np.ndarray  # (kr, 3, d)


@dataclass
class AdamState:
    """Per-row Adam moments and step counters for both tables."""

    m_ent: np.ndarray
    v_ent: np.ndarray
    m_rel: np.ndarray
    v_rel: np.ndarray
    step_ent: np.ndarray
    step_rel: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initialize(cls, store: EmbeddingStore) -> "AdamState":
        return cls(
            m_ent=np.zeros_like(store.entity_embeddings),
            v_ent=np.zeros_like(store.entity_embeddings),
            m_rel=np.zeros_like(store.relation_embeddings),
            v_rel=np.zeros_like(store.relation_embeddings),
            step_ent=np.zeros(store.entity_count, dtype=np.int64),
            step_rel=np.zeros(store.relation_count, dtype=np.int64),
        )


def init_embeddings(g: KnowledgeGraph, cfg: TrainConfig) -> EmbeddingStore:
    """Fresh store with values uniform in [-margin/dim, margin/dim].

    Entity values are drawn before relation values from a stream keyed on
    the config seed, so equal seeds give bit-identical stores.
    """
    rng = np.random.default_rng([cfg.seed, _STREAM_INIT])
    bound = cfg.margin / cfg.dim
    ent = rng.uniform(-bound, bound, size=(g.entity_count, 2, cfg.dim))
    rel = rng.uniform(-bound, bound, size=(g.relation_count, 3, cfg.dim))
    return EmbeddingStore(ent, rel)


def _check_entity_ids(store: EmbeddingStore, ids: np.ndarray) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= store.entity_count):
        raise ValueError("entity id out of bounds")


def _check_relation_ids(store: EmbeddingStore, ids: np.ndarray) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= store.relation_count):
        raise ValueError("relation id out of bounds")


def score(store: EmbeddingStore, spec: SFSpec, h: int, r: int, t: int) -> float:
    """Triple score -||g||_1 where g sums the spec's signed terms."""
    tails = np.asarray([t], dtype=np.int64)
    return float(score_batch_tails(store, spec, h, r, tails)[0])


def score_batch_tails(
    store: EmbeddingStore, spec: SFSpec, h: int, r: int, tails
) -> np.ndarray:
    """Scores for one (h, r) against many tails.

    Element i equals ``score(store, spec, h, r, tails[i])`` exactly: both
    paths run the same kernel with the same arithmetic order.
    """
    cand = np.ascontiguousarray(np.asarray(tails, dtype=np.int64))
    _check_entity_ids(store, cand)
    _check_entity_ids(store, np.asarray([h], dtype=np.int64))
    _check_relation_ids(store, np.asarray([r], dtype=np.int64))
    if cand.size == 0:
        return np.empty(0)
    prog = _kernels.encode_program(spec)
    dist = _kernels.run_dist(
        store.entity_embeddings, store.relation_embeddings, h, r, cand, prog
    )
    return -dist


def _negative_weights(d_neg: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """Per-negative loss weights along the last axis; detached constants."""
    if cfg.negative_weighting == "uniform":
        return np.full_like(d_neg, 1.0 / d_neg.shape[-1])
    return softmax(-cfg.adversarial_temperature * d_neg, axis=-1)


def _draw_masks(rng: np.random.Generator, p: float, b: int, c: int, d: int):
    keep_hr = rng.random((b, 5, d), dtype=np.float32) >= p
    keep_t = rng.random((b, c, 2, d), dtype=np.float32) >= p
    return keep_hr.view(np.uint8), keep_t.view(np.uint8), 1.0 / (1.0 - p)


def loss_and_grad(
    store: EmbeddingStore,
    spec: SFSpec,
    positive: Triple,
    negatives: list[Triple],
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[float, SparseGradients]:
    """Margin-sigmoid loss of one positive against its negatives.

    Returns the loss and analytic gradients over touched rows.  Gradients
    flow through sign(g_j) (with sign(0) = 0) and the product rule for
    second-order terms.  When ``rng`` is given and the config has a
    positive dropout rate, dropout masks are drawn from it (head/relation
    mask first, then tail masks); re-seeding an rng identically reproduces
    the same masks, which is how the finite-difference tests pin the
    stochastic loss.  With ``rng=None`` the deterministic inference-mode
    loss is evaluated.
    """
    if not negatives:
        raise ValueError("at least one negative is required")
    n = len(negatives)
    rows = [positive] + list(negatives)
    h_idx = np.asarray([t.head for t in rows], dtype=np.int64)
    r_idx = np.asarray([t.relation for t in rows], dtype=np.int64)
    cand = np.asarray([[t.tail] for t in rows], dtype=np.int64)
    _check_entity_ids(store, h_idx)
    _check_entity_ids(store, cand.ravel())
    _check_relation_ids(store, r_idx)

    prog = _kernels.encode_program(spec)
    ent, rel = store.entity_embeddings, store.relation_embeddings
    mask_hr = mask_t = None
    scale = 1.0
    if rng is not None and cfg.dropout_rate > 0.0:
        mask_hr, mask_t, scale = _draw_masks(
            rng, cfg.dropout_rate, n + 1, 1, store.dim
        )
    g_buf, dist = _kernels.run_fwd(
        ent, rel, h_idx, r_idx, cand, prog, mask_hr, mask_t, scale
    )
    d_pos = dist[0, 0]
    d_neg = dist[1:, 0]
    w = _negative_weights(d_neg, cfg)
    loss = float(-log_expit(cfg.margin - d_pos) - w @ log_expit(d_neg - cfg.margin))

    dldd = np.empty((n + 1, 1))
    dldd[0, 0] = expit(d_pos - cfg.margin)
    dldd[1:, 0] = -w * expit(cfg.margin - d_neg)
    ge = np.zeros_like(ent)
    gr = np.zeros_like(rel)
    _kernels.run_bwd(
        ent, rel, h_idx, r_idx, cand, dldd, g_buf, prog, ge, gr,
        mask_hr, mask_t, scale,
    )
    ent_ids = np.unique(np.concatenate([h_idx, cand.ravel()]))
    rel_ids = np.unique(r_idx)
    return loss, SparseGradients(
        entity_ids=ent_ids,
        entity_grads=ge[ent_ids],
        relation_ids=rel_ids,
        relation_grads=gr[rel_ids],
    )


def adam_step(
    store: EmbeddingStore,
    gradients: SparseGradients,
    state: AdamState,
    lr: float,
) -> tuple[EmbeddingStore, AdamState]:
    """Apply one sparse Adam update in place; only listed rows move.

    Bias correction is per row: each row's step counter advances only
    when that row receives a gradient.
    """
    _check_entity_ids(store, gradients.entity_ids)
    _check_relation_ids(store, gradients.relation_ids)
    if gradients.entity_ids.size:
        _kernels.adam_rows_kernel(
            store.entity_embeddings, state.m_ent, state.v_ent, state.step_ent,
            gradients.entity_ids, gradients.entity_grads,
            lr, state.beta1, state.beta2, state.eps,
        )
    if gradients.relation_ids.size:
        _kernels.adam_rows_kernel(
            store.relation_embeddings, state.m_rel, state.v_rel, state.step_rel,
            gradients.relation_ids, gradients.relation_grads,
            lr, state.beta1, state.beta2, state.eps,
        )
    return store, state


def sample_negatives(
    g: KnowledgeGraph, positive: Triple, n: int, rng: np.random.Generator
) -> list[Triple]:
    """n tail-corrupted negatives (h, r, t') with t' uniform, t' != t.

    Tails only: on an augmented graph, head corruption is covered by the
    inverse triple's tail corruption.  Negatives are not filtered against
    the graph, so a "negative" may be a true triple; evaluation filters,
    training does not.
    """
    if g.entity_count < 2:
        raise ValueError("cannot sample negatives with a single entity")
    draws = rng.integers(0, g.entity_count - 1, size=n)
    draws = draws + (draws >= positive.tail)
    return [Triple(positive.head, positive.relation, int(t)) for t in draws]


def train(
    g: KnowledgeGraph, spec: SFSpec, cfg: TrainConfig
) -> tuple[EmbeddingStore, TrainReport]:
    """Full training loop; returns the best-on-validation snapshot.

    Each step samples ``batch_size`` positives uniformly with replacement
    from the train split, corrupts each with ``negatives_per_positive``
    tails, and applies one Adam step on the batch-mean loss.  Dropout is
    active in these forward passes only.  Every ``valid_interval`` steps
    the current model is scored on the valid split under a filtered
    SampledUniform(valid_negatives) protocol seeded by the config seed;
    the snapshot with the best valid MRR is returned (the final
    parameters if validation never ran).
    """
    from .ranking import EmbeddingScorer, EvalProtocol, evaluate

    if not g.augmented:
        raise ValueError(
            "train requires an inverse-augmented graph (add_inverse_relations)"
        )
    t0 = time.perf_counter()
    store = init_embeddings(g, cfg)
    state = AdamState.initialize(store)
    prog = _kernels.encode_program(spec)
    ent, rel = store.entity_embeddings, store.relation_embeddings
    train_arr = triples_to_array(g.train)
    E, d = g.entity_count, cfg.dim
    B, n = cfg.batch_size, cfg.negatives_per_positive
    C = 1 + n
    p = cfg.dropout_rate

    rng_batch = np.random.default_rng([cfg.seed, _STREAM_BATCH])
    rng_neg = np.random.default_rng([cfg.seed, _STREAM_NEG])
    rng_drop = np.random.default_rng([cfg.seed, _STREAM_DROPOUT])
    protocol = EvalProtocol.sampled_uniform(cfg.valid_negatives, seed=cfg.seed)

    ge = np.zeros_like(ent)
    gr = np.zeros_like(rel)
    g_buf = np.empty((B, C, d))
    dist = np.empty((B, C))
    dldd = np.empty((B, C))
    cand = np.empty((B, C), dtype=np.int64)

    curve: list[tuple[int, float]] = []
    best_mrr: float | None = None
    best_step: int | None = None
    best_snapshot: EmbeddingStore | None = None

    for step in range(1, cfg.max_steps + 1):
        batch = train_arr[rng_batch.integers(0, train_arr.shape[0], size=B)]
        h_idx = np.ascontiguousarray(batch[:, 0])
        r_idx = np.ascontiguousarray(batch[:, 1])
        pos_t = batch[:, 2]
        neg = rng_neg.integers(0, E - 1, size=(B, n))
        neg += neg >= pos_t[:, None]
        cand[:, 0] = pos_t
        cand[:, 1:] = neg

        mask_hr = mask_t = None
        scale = 1.0
        if p > 0.0:
            mask_hr, mask_t, scale = _draw_masks(rng_drop, p, B, C, d)
        _kernels.run_fwd(
            ent, rel, h_idx, r_idx, cand, prog, mask_hr, mask_t, scale,
            g_out=g_buf, dist_out=dist,
        )
        d_neg = dist[:, 1:]
        w = _negative_weights(d_neg, cfg)
        # batch-mean loss: scale every distance gradient by 1/B
        dldd[:, 0] = expit(dist[:, 0] - cfg.margin) / B
        dldd[:, 1:] = -w * expit(cfg.margin - d_neg) / B
        _kernels.run_bwd(
            ent, rel, h_idx, r_idx, cand, dldd, g_buf, prog, ge, gr,
            mask_hr, mask_t, scale,
        )

        ent_ids = np.unique(np.concatenate([h_idx, cand.ravel()]))
        rel_ids = np.unique(r_idx)
        grads = SparseGradients(
            entity_ids=ent_ids,
            entity_grads=ge[ent_ids],
            relation_ids=rel_ids,
            relation_grads=gr[rel_ids],
        )
        adam_step(store, grads, state, cfg.learning_rate)
        ge[ent_ids] = 0.0
        gr[rel_ids] = 0.0

        if step % cfg.valid_interval == 0:
            metrics = evaluate(EmbeddingScorer(store, spec), g, "valid", protocol)
            curve.append((step, metrics.mrr))
            if best_mrr is None or metrics.mrr > best_mrr:
                best_mrr = metrics.mrr
                best_step = step
                best_snapshot = store.copy()

    final = best_snapshot if best_snapshot is not None else store
    report = TrainReport(
        curve=tuple(curve),
        wall_seconds=time.perf_counter() - t0,
        best_step=best_step,
        best_valid_mrr=best_mrr,
        store=final,
    )
    return final, report


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CHECKPOINT_FORMAT = "kgelab-checkpoint-v1"


def save_checkpoint(
    store: EmbeddingStore, spec: SFSpec, seed: int, path: str | Path
) -> None:
    """Write a checkpoint: one JSON header line, then raw float32 arrays.

    Array order: entity table [E, 2, d], then relation table [R, 3, d],
    both little-endian float32 in C order.
    """
    header = {
        "format": _CHECKPOINT_FORMAT,
        "dim": store.dim,
        "entity_count": store.entity_count,
        "relation_count": store.relation_count,
        "spec": print_sf(spec),
        "seed": int(seed),
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(store.entity_embeddings.astype("<f4").tobytes(order="C"))
        fh.write(store.relation_embeddings.astype("<f4").tobytes(order="C"))


def load_checkpoint(path: str | Path) -> tuple[EmbeddingStore, SFSpec, dict]:
    """Read a checkpoint back; embeddings are upcast to float64."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != _CHECKPOINT_FORMAT:
            raise ValueError(f"not a checkpoint file: {path}")
        E, R, d = header["entity_count"], header["relation_count"], header["dim"]
        ent = np.frombuffer(fh.read(E * 2 * d * 4), dtype="<f4")
        rel = np.frombuffer(fh.read(R * 3 * d * 4), dtype="<f4")
        if ent.size != E * 2 * d or rel.size != R * 3 * d or fh.read(1):
            raise ValueError(f"checkpoint payload size mismatch: {path}")
    store = EmbeddingStore(
        ent.astype(np.float64).reshape(E, 2, d),
        rel.astype(np.float64).reshape(R, 3, d),
    )
    return store, parse_sf(header["spec"]), header


def save_train_report_csv(report: TrainReport, path: str | Path) -> None:
    """Write the validation curve as ``step,valid_mrr`` rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,valid_mrr\n")
        for step, mrr in report.curve:
            fh.write(f"{step},{mrr!r}\n")
