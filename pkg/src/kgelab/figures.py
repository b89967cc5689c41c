"""Figure rendering for CLI reports.

Every report-emitting command writes its delimited output (CSV/JSON)
first and then, unless figures are disabled, renders a PNG view of the
same data next to it.  The delimited files stay the machine-readable
interface; the figures are for eyeballs only.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = [
    "render_histogram",
    "render_train_curve",
    "render_comparison",
    "render_leaderboard",
]


def render_histogram(
    histogram: list[tuple[int, int]], path: str | Path, title: str
) -> Path:
    """Log-log view of an occurrence histogram."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if histogram:
        occ = [c for c, _ in histogram]
        num = [n for _, n in histogram]
        ax.loglog(occ, num, marker="o", linestyle="none", markersize=3)
    ax.set_xlabel("tail occurrence count")
    ax.set_ylabel("number of entities")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_train_curve(
    curve: list[tuple[int, float]], path: str | Path, title: str
) -> Path:
    """Validation MRR against training step."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if curve:
        steps = [s for s, _ in curve]
        mrrs = [m for _, m in curve]
        ax.plot(steps, mrrs, marker="o")
    ax.set_xlabel("step")
    ax.set_ylabel("valid MRR")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_comparison(
    rows: list[tuple[str, str, float]], path: str | Path, title: str
) -> Path:
    """Grouped bars of MRR per (scorer, protocol).

    ``rows`` holds (scorer label, protocol label, mrr); scorers group the
    bars, protocols color them.
    """
    path = Path(path)
    scorers = list(dict.fromkeys(s for s, _, _ in rows))
    protocols = list(dict.fromkeys(p for _, p, _ in rows))
    values = {(s, p): m for s, p, m in rows}
    width = 0.8 / max(1, len(protocols))
    fig, ax = plt.subplots(figsize=(1.5 + 2.2 * len(scorers), 4))
    for j, proto in enumerate(protocols):
        xs = [i + j * width for i in range(len(scorers))]
        ys = [values.get((s, proto), 0.0) for s in scorers]
        ax.bar(xs, ys, width=width, label=proto)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(scorers))])
    ax.set_xticklabels(scorers)
    ax.set_ylabel("MRR")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_leaderboard(
    entries: list[tuple[int, float, bool]], path: str | Path, title: str
) -> Path:
    """Search leaderboard bars: valid MRR per trial, head-free flagged.

    ``entries`` holds (trial index, valid mrr, uses_head), already in
    leaderboard order.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = range(len(entries))
    colors = ["tab:blue" if uses_head else "tab:red" for _, _, uses_head in entries]
    ax.bar(xs, [m for _, m, _ in entries], color=colors)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([str(i) for i, _, _ in entries], fontsize=8)
    ax.set_xlabel("trial")
    ax.set_ylabel("valid MRR")
    ax.set_title(f"{title}\n(red = head-independent candidate)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
