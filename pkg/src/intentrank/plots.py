"""Figure rendering for the report paths (AP-per-turn chart, score-trace heatmap)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import EvalReport, ScoreTrace

# Fixed PNG metadata keeps repeated runs byte-identical.
_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": "intentrank"}}


def render_ap_figure(report: EvalReport, path: str | Path) -> None:
    turns = sorted(report.ap_by_turn)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(turns, [100 * report.ap_by_turn[t] for t in turns], marker="o", label="all")
    for split, by_turn in sorted(report.split_ap.items()):
        ax.plot(
            sorted(by_turn),
            [100 * by_turn[t] for t in sorted(by_turn)],
            marker="s",
            linestyle="--",
            label=split,
        )
    ax.set_xlabel("turn")
    ax.set_ylabel("AP x100")
    ax.set_xticks(turns)
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_trace_figure(trace: ScoreTrace, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(trace.matrix, aspect="auto", cmap="viridis", interpolation="nearest")
    ax.set_xlabel("interaction step")
    ax.set_ylabel("region (by id)")
    ax.set_xticks(range(trace.matrix.shape[1]))
    label = "normalized score" if trace.normalized else "score"
    fig.colorbar(im, ax=ax, label=label)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
