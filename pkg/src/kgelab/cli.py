"""Command-line front end: reproducible experiments and report emission.

Subcommands: ``generate | train | eval | search | analyze |
compare-protocols``.  Every command resolves its parameters from three
layers (built-in defaults, then an optional ``--config`` JSON file, then
explicit flags), writes the resolved configuration as ``config.json``
next to its outputs, and exits 0 only after re-reading what it wrote.
All randomness flows from the single ``--seed`` through documented
derivations, so rerunning a command reproduces its metric files byte for
byte.  Report-style outputs (training curve, histograms, protocol
comparison, search leaderboard) are also rendered as PNG figures
alongside the delimited files unless ``--no-figures`` is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .baseline import fit_entoccur
from .errors import ConfigError, KgelabError
from .graph import (
    KnowledgeGraph,
    SyntheticConfig,
    add_inverse_relations,
    generate_synthetic,
    load_graph,
    occurrence_histogram,
    save_graph,
    save_histogram_csv,
    tail_occurrences,
)
from .ranking import (
    ConstantScorer,
    EvalProtocol,
    EmbeddingScorer,
    OracleScorer,
    RandomScorer,
    Scorer,
    evaluate,
    save_metrics_json,
)
from .scoring import (
    CATALOG_NAMES,
    catalog,
    distinct_search_space_size,
    parse_sf,
    print_sf,
    search_space_size,
    uses_head,
)
from .search import SearchConfig, run_search
from .training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    save_train_report_csv,
    train,
)

_CHECKPOINT_FORMAT_VERSION = "kgelab-checkpoint-v1"

_PRESETS = {
    "wikikg2-like": {
        "entity_count": 10_000,
        "relation_count": 20,
        "triple_count": 111_112,
        "zipf_exponent": 2.0,
        "typed": False,
        "type_count": 1,
        "split_fractions": (0.9, 0.05, 0.05),
    },
    "biokg-like": {
        "entity_count": 5_000,
        "relation_count": 10,
        "triple_count": 31_250,
        "zipf_exponent": 0.5,
        "typed": True,
        "type_count": 5,
        "split_fractions": (0.8, 0.1, 0.1),
    },
}

_GENERATE_DEFAULTS = {
    "preset": None,
    "entity_count": 1_000,
    "relation_count": 10,
    "triple_count": 10_000,
    "zipf_exponent": 1.0,
    "typed": False,
    "type_count": 1,
    "split_fractions": (0.9, 0.05, 0.05),
    "seed": 0,
}

# Desk-scale training defaults; --paper-scale swaps in the paper regime.
_TRAIN_DEFAULTS = {
    "sf": "transe",
    "dim": 32,
    "learning_rate": 5e-4,
    "batch_size": 512,
    "negatives": 128,
    "margin": 6.0,
    "dropout": 0.1,
    "steps": 5_000,
    "valid_interval": 1_000,
    "valid_negatives": 50,
    "weighting": "uniform",
    "adversarial_temperature": 1.0,
    "seed": 0,
}

_PAPER_SCALE = {
    "dim": 200,
    "steps": 500_000,
    "valid_interval": 20_000,
}

_EVAL_DEFAULTS = {
    "scorer": "entoccur",
    "checkpoint": None,
    "protocol": "sampled:500",
    "split": "test",
    "unfiltered": False,
    "filter_splits": "all",
    "seed": 0,
}

_SEARCH_DEFAULTS = {
    "budget": 10,
    "num_terms": 4,
    "protocol": "sampled:500",
    "dim": 32,
    "steps": 1_000,
    "valid_interval": 500,
    "valid_negatives": 50,
    "seed": 0,
}

_ANALYZE_DEFAULTS = {
    "augmented": False,
}

_COMPARE_DEFAULTS = {
    "scorers": ("entoccur",),
    "num_negatives": 500,
    "split": "test",
    "seed": 0,
}


def _load_config_file(path: str | None, allowed: dict) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def _resolve(defaults: dict, config_doc: dict, args: argparse.Namespace,
             extra_layers: tuple[dict, ...] = ()) -> dict:
    """Layer parameters: defaults < extra layers < config file < flags."""
    resolved = dict(defaults)
    for layer in extra_layers:
        resolved.update(layer)
    resolved.update(config_doc)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _write_resolved_config(out: Path, command: str, resolved: dict) -> None:
    doc = {"command": command}
    for k, v in resolved.items():
        doc[k] = list(v) if isinstance(v, tuple) else v
    (out / "config.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_augmented(data_dir: str) -> KnowledgeGraph:
    g = load_graph(data_dir)
    return g if g.augmented else add_inverse_relations(g)


def _parse_protocol(text: str, seed: int, unfiltered: bool = False,
                    filter_splits: str = "all") -> EvalProtocol:
    kw = {"filtered": not unfiltered, "seed": seed, "filter_splits": filter_splits}
    t = text.strip().lower()
    try:
        if t == "full":
            return EvalProtocol.full_ranking(**kw)
        if ":" in t:
            kind, _, n_text = t.partition(":")
            n = int(n_text)
            if kind == "sampled":
                return EvalProtocol.sampled_uniform(n, **kw)
            if kind == "typed":
                return EvalProtocol.typed_sampled(n, **kw)
    except ValueError as exc:
        raise ConfigError(f"bad protocol {text!r}: {exc}") from None
    raise ConfigError(
        f"unknown protocol {text!r}; expected 'sampled:N', 'typed:N', or 'full'"
    )


def _parse_sf_argument(text: str):
    """A spec string, or a Table-style catalog name as an alias."""
    name = text.strip().lower()
    if name in CATALOG_NAMES:
        return catalog(name)
    return parse_sf(text)


def _figures_enabled(args) -> bool:
    return not getattr(args, "no_figures", False)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    config_doc = _load_config_file(args.config, _GENERATE_DEFAULTS)
    preset_name = args.preset or config_doc.get("preset")
    layers = ()
    if preset_name is not None:
        if preset_name not in _PRESETS:
            raise ConfigError(
                f"unknown preset {preset_name!r}; known: {', '.join(_PRESETS)}"
            )
        layers = (_PRESETS[preset_name],)
    resolved = _resolve(_GENERATE_DEFAULTS, config_doc, args, layers)
    resolved["preset"] = preset_name
    if isinstance(resolved["split_fractions"], list):
        resolved["split_fractions"] = tuple(resolved["split_fractions"])

    cfg = SyntheticConfig(
        entity_count=resolved["entity_count"],
        relation_count=resolved["relation_count"],
        triple_count=resolved["triple_count"],
        zipf_exponent=resolved["zipf_exponent"],
        typed=resolved["typed"],
        type_count=resolved["type_count"],
        split_fractions=resolved["split_fractions"],
        seed=resolved["seed"],
    )
    out = _out_dir(args)
    g = generate_synthetic(cfg)
    save_graph(g, out)
    _write_resolved_config(out, "generate", resolved)
    reloaded = load_graph(out)
    if reloaded.num_triples != g.num_triples:
        raise KgelabError("generated dataset failed re-validation")
    print(f"wrote {g.num_triples} triples "
          f"({len(g.train)}/{len(g.valid)}/{len(g.test)}) to {out}")
    return 0


def cmd_train(args) -> int:
    config_doc = _load_config_file(args.config, _TRAIN_DEFAULTS)
    layers = (_PAPER_SCALE,) if args.paper_scale else ()
    resolved = _resolve(_TRAIN_DEFAULTS, config_doc, args, layers)
    resolved["paper_scale"] = bool(args.paper_scale)
    spec = _parse_sf_argument(resolved["sf"])
    resolved["sf"] = print_sf(spec)

    cfg = TrainConfig(
        dim=resolved["dim"],
        learning_rate=resolved["learning_rate"],
        batch_size=resolved["batch_size"],
        negatives_per_positive=resolved["negatives"],
        margin=resolved["margin"],
        dropout_rate=resolved["dropout"],
        max_steps=resolved["steps"],
        valid_interval=resolved["valid_interval"],
        negative_weighting=resolved["weighting"].replace("-", "_"),
        adversarial_temperature=resolved["adversarial_temperature"],
        valid_negatives=resolved["valid_negatives"],
        seed=resolved["seed"],
    )
    g = _load_augmented(args.data)
    out = _out_dir(args)
    store, report = train(g, spec, cfg)
    ckpt = out / "model.ckpt"
    save_checkpoint(store, spec, cfg.seed, ckpt)
    save_train_report_csv(report, out / "train_report.csv")
    _write_resolved_config(out, "train", resolved)
    if _figures_enabled(args):
        from .figures import render_train_curve
        render_train_curve(
            list(report.curve), out / "train_curve.png",
            f"{resolved['sf']}  (dim={cfg.dim}, seed={cfg.seed})",
        )
    load_checkpoint(ckpt)  # validate what we wrote
    best = ("none" if report.best_valid_mrr is None
            else f"{report.best_valid_mrr:.4f}@{report.best_step}")
    print(f"trained {resolved['sf']} for {cfg.max_steps} steps "
          f"in {report.wall_seconds:.1f}s; best valid MRR {best}")
    return 0


def _build_scorer(name: str, checkpoint: str | None, g: KnowledgeGraph,
                  seed: int) -> tuple[str, Scorer]:
    if checkpoint is not None:
        store, spec, _ = load_checkpoint(checkpoint)
        if (store.entity_count != g.entity_count
                or store.relation_count != g.relation_count):
            raise ConfigError(
                f"checkpoint shape ({store.entity_count} entities, "
                f"{store.relation_count} relations) does not match the "
                f"dataset ({g.entity_count}, {g.relation_count})"
            )
        return Path(checkpoint).stem, EmbeddingScorer(store, spec)
    if name == "entoccur":
        return "entoccur", fit_entoccur(g)
    if name == "oracle":
        return "oracle", OracleScorer(g)
    if name == "random":
        return "random", RandomScorer(g.entity_count, seed=seed)
    if name == "constant":
        return "constant", ConstantScorer()
    raise ConfigError(
        f"unknown scorer {name!r}; known: entoccur, oracle, random, constant, "
        "or use --checkpoint"
    )


def cmd_eval(args) -> int:
    config_doc = _load_config_file(args.config, _EVAL_DEFAULTS)
    resolved = _resolve(_EVAL_DEFAULTS, config_doc, args)
    g = _load_augmented(args.data)
    protocol = _parse_protocol(
        resolved["protocol"], resolved["seed"],
        resolved["unfiltered"], resolved["filter_splits"],
    )
    label, scorer = _build_scorer(
        resolved["scorer"], resolved["checkpoint"], g, resolved["seed"]
    )
    resolved["scorer"] = label
    out = _out_dir(args)
    metrics = evaluate(scorer, g, resolved["split"], protocol)
    save_metrics_json(metrics, protocol, resolved["split"], out / "metrics.json")
    _write_resolved_config(out, "eval", resolved)
    json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    note = (f" ({metrics.shortfall_queries} shortfall queries)"
            if metrics.shortfall_queries else "")
    print(f"{label} {protocol.label()} {resolved['split']}: "
          f"MRR={metrics.mrr:.4f} hits@1={metrics.hits_at[1]:.4f} "
          f"hits@10={metrics.hits_at[10]:.4f}{note}")
    return 0


def cmd_search(args) -> int:
    config_doc = _load_config_file(args.config, _SEARCH_DEFAULTS)
    resolved = _resolve(_SEARCH_DEFAULTS, config_doc, args)
    g = _load_augmented(args.data)
    protocol = _parse_protocol(resolved["protocol"], resolved["seed"])
    tc = TrainConfig(
        dim=resolved["dim"],
        max_steps=resolved["steps"],
        valid_interval=resolved["valid_interval"],
        valid_negatives=resolved["valid_negatives"],
        seed=resolved["seed"],
    )
    cfg = SearchConfig(
        budget=resolved["budget"],
        num_terms=resolved["num_terms"],
        train_config=tc,
        protocol=protocol,
        seed=resolved["seed"],
    )
    out = _out_dir(args)
    ledger = out / "ledger"
    result = run_search(g, cfg, ledger)
    _write_resolved_config(out, "search", resolved)
    if _figures_enabled(args):
        from .figures import render_leaderboard
        render_leaderboard(
            [(r.trial_index, r.valid_mrr, uses_head(r.spec))
             for r in result.leaderboard],
            out / "leaderboard.png",
            f"random search, budget {cfg.budget}",
        )
    json.loads((ledger / "summary.json").read_text(encoding="utf-8"))
    print(f"{'trial':>5s}  {'valid MRR':>9s}  {'test MRR':>8s}  "
          f"{'uses_head':>9s}  spec")
    for r in result.leaderboard:
        print(f"{r.trial_index:>5d}  {r.valid_mrr:>9.4f}  {r.test_mrr:>8.4f}  "
              f"{str(uses_head(r.spec)):>9s}  {print_sf(r.spec)}")
    return 0


def cmd_analyze(args) -> int:
    config_doc = _load_config_file(args.config, _ANALYZE_DEFAULTS)
    resolved = _resolve(_ANALYZE_DEFAULTS, config_doc, args)
    g = load_graph(args.data)
    if resolved["augmented"] and not g.augmented:
        g = add_inverse_relations(g)
    out = _out_dir(args)

    summary: dict = {
        "augmented": g.augmented,
        "entity_count": g.entity_count,
        "relation_count": g.relation_count,
        "split_sizes": {
            "train": len(g.train), "valid": len(g.valid), "test": len(g.test),
        },
        "search_space_ordered_3_56": search_space_size(),
        "search_space_distinct_3_35": distinct_search_space_size(),
        "top_share": {},
    }
    for split in ("train", "test"):
        table = tail_occurrences(g, split)
        hist = occurrence_histogram(table)
        save_histogram_csv(hist, out / f"occurrence_hist_{split}.csv")
        if _figures_enabled(args):
            from .figures import render_histogram
            render_histogram(
                hist, out / f"occurrence_hist_{split}.png",
                f"tail occurrences, {split} split"
                f" ({'augmented' if g.augmented else 'unaugmented'})",
            )
        total = table.total()
        shares = {}
        if total:
            counts = sorted(table.global_counts.values(), reverse=True)
            for pct in (1, 10):
                k = max(1, g.entity_count * pct // 100)
                shares[f"top_{pct}_percent"] = sum(counts[:k]) / total
        summary["top_share"][split] = shares
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_resolved_config(out, "analyze", resolved)
    json.loads((out / "summary.json").read_text(encoding="utf-8"))
    train_share = summary["top_share"]["train"].get("top_1_percent")
    share_note = "n/a" if train_share is None else f"{train_share:.3f}"
    print(f"analyzed {args.data} ({'augmented' if g.augmented else 'unaugmented'}); "
          f"train top-1% tail-mass share {share_note}")
    return 0


def cmd_compare_protocols(args) -> int:
    config_doc = _load_config_file(args.config, _COMPARE_DEFAULTS)
    resolved = _resolve(_COMPARE_DEFAULTS, config_doc, args)
    if args.scorer:
        resolved["scorers"] = tuple(args.scorer)
    elif isinstance(resolved["scorers"], list):
        resolved["scorers"] = tuple(resolved["scorers"])
    g = _load_augmented(args.data)
    out = _out_dir(args)
    n = resolved["num_negatives"]
    seed = resolved["seed"]
    split = resolved["split"]

    protocols = [EvalProtocol.sampled_uniform(n, seed=seed)]
    if g.entity_types is not None:
        protocols.append(EvalProtocol.typed_sampled(n, seed=seed))
    protocols.append(EvalProtocol.full_ranking(seed=seed))

    records = []
    rows = []
    for scorer_arg in resolved["scorers"]:
        if scorer_arg.startswith("ckpt:"):
            label, scorer = _build_scorer(None, scorer_arg[5:], g, seed)
        else:
            label, scorer = _build_scorer(scorer_arg, None, g, seed)
        for protocol in protocols:
            metrics = evaluate(scorer, g, split, protocol)
            records.append({
                "scorer": label,
                "protocol": protocol.label(),
                "split": split,
                "mrr": metrics.mrr,
                "hits1": metrics.hits_at[1],
                "hits3": metrics.hits_at[3],
                "hits10": metrics.hits_at[10],
                "num_queries": metrics.num_queries,
                "seed": protocol.seed,
            })
            rows.append((label, protocol.label(), metrics.mrr))

    (out / "comparison.json").write_text(
        json.dumps(records, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    header = f"{'scorer':<16s} {'protocol':<24s} {'MRR':>7s} {'H@1':>7s} {'H@10':>7s}"
    lines = [header, "-" * len(header)]
    for rec in records:
        lines.append(
            f"{rec['scorer']:<16s} {rec['protocol']:<24s} "
            f"{rec['mrr']:>7.4f} {rec['hits1']:>7.4f} {rec['hits10']:>7.4f}"
        )
    table_text = "\n".join(lines) + "\n"
    (out / "comparison.txt").write_text(table_text, encoding="utf-8")
    _write_resolved_config(out, "compare-protocols", resolved)
    if _figures_enabled(args):
        from .figures import render_comparison
        render_comparison(
            rows, out / "comparison.png", f"MRR by protocol ({split} split)"
        )
    json.loads((out / "comparison.json").read_text(encoding="utf-8"))
    print(table_text, end="")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering next to report files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgelab",
        description="Scoring-function search and ranking-protocol lab "
                    "for knowledge-graph embeddings.",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"kgelab {__version__} (checkpoint {_CHECKPOINT_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    _add_common(p, data=False)
    p.add_argument("--preset", help="|".join(sorted(_PRESETS)))
    p.add_argument("--entity-count", type=int, dest="entity_count")
    p.add_argument("--relation-count", type=int, dest="relation_count")
    p.add_argument("--triple-count", type=int, dest="triple_count")
    p.add_argument("--zipf-exponent", type=float, dest="zipf_exponent")
    p.add_argument("--typed", action="store_const", const=True, default=None)
    p.add_argument("--type-count", type=int, dest="type_count")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one scoring function")
    _add_common(p)
    p.add_argument("--sf", help="spec string or catalog name")
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--negatives", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--valid-interval", type=int, dest="valid_interval")
    p.add_argument("--valid-negatives", type=int, dest="valid_negatives")
    p.add_argument("--weighting", choices=["uniform", "self-adversarial"])
    p.add_argument("--adv-temperature", type=float,
                   dest="adversarial_temperature")
    p.add_argument("--paper-scale", action="store_true",
                   help="paper regime (dim 200, 500k steps) instead of desk scale")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a scorer under one protocol")
    _add_common(p)
    p.add_argument("--scorer", help="entoccur | oracle | random | constant")
    p.add_argument("--checkpoint", help="embedding checkpoint to score with")
    p.add_argument("--protocol", help="sampled:N | typed:N | full")
    p.add_argument("--split", choices=["valid", "test"])
    p.add_argument("--unfiltered", action="store_const", const=True,
                   default=None)
    p.add_argument("--filter-splits", choices=["all", "train"],
                   dest="filter_splits")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="random search over scoring functions")
    _add_common(p)
    p.add_argument("--budget", type=int)
    p.add_argument("--num-terms", type=int, dest="num_terms")
    p.add_argument("--protocol", help="selection protocol (default sampled:500)")
    p.add_argument("--dim", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--valid-interval", type=int, dest="valid_interval")
    p.add_argument("--valid-negatives", type=int, dest="valid_negatives")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("analyze", help="occurrence histograms and concentration")
    _add_common(p)
    p.add_argument("--augmented", action="store_const", const=True,
                   default=None, help="add inverse relations before counting")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare-protocols",
                       help="one scorer table across all protocols")
    _add_common(p)
    p.add_argument("--scorer", action="append",
                   help="entoccur | oracle | random | constant | ckpt:PATH "
                        "(repeatable)")
    p.add_argument("--num-negatives", type=int, dest="num_negatives")
    p.add_argument("--split", choices=["valid", "test"])
    p.set_defaults(func=cmd_compare_protocols)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KgelabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
