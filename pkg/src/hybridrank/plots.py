"""Figures written next to the CSV artifacts.

``auc_vs_sparsity.png`` plots per-user AUC against activity density with weak
users highlighted; ``weak_counts.png`` compares weak-user counts before and
after the LLM stage.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def auc_vs_sparsity(rows: Sequence[dict], path: Path, t_p: float | None = None, t_s: float | None = None, title: str = "") -> Path:
    """Scatter of auc_rs (x) against sparsity_index (y); undefined AUCs are skipped."""
    pts = [(float(r["auc_rs"]), float(r["sparsity_index"]), _truthy(r["weak"])) for r in rows if r["auc_rs"] not in (None, "")]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        strong = [(a, s) for a, s, w in pts if not w]
        weak = [(a, s) for a, s, w in pts if w]
        if strong:
            ax.scatter(*zip(*strong), s=6, c="tab:blue", alpha=0.5, label="strong", linewidths=0)
        if weak:
            ax.scatter(*zip(*weak), s=8, c="tab:red", alpha=0.8, label="weak", linewidths=0)
        if t_p is not None:
            ax.axvline(t_p, color="0.4", lw=0.8, ls="--")
        if t_s is not None:
            ax.axhline(t_s, color="0.4", lw=0.8, ls=":")
        ax.set_xlabel("AUC (RS)")
        ax.set_ylabel("sparsity index |R|/N")
        ax.set_xlim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def weak_count_bars(rows: Sequence[dict], path: Path, title: str = "") -> Path:
    """Grouped bars of weak_before / weak_after per (model, llm_kind) row."""
    labels = [f"{r['model']}\n{r['llm_kind']}" for r in rows]
    before = [int(r["weak_before"]) for r in rows]
    after = [int(r["weak_after"]) for r in rows]
    x = range(len(rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar([i - 0.2 for i in x], before, width=0.4, label="RS only", color="tab:gray")
        ax.bar([i + 0.2 for i in x], after, width=0.4, label="with LLM", color="tab:green")
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels)
        ax.set_ylabel("weak users")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def _truthy(value) -> bool:
    return value in (True, 1, "1", "True", "true")


def render_assessment_figure(out_dir: Path, assessment_rows: Sequence[dict], t_p: float, t_s: float, title: str = "") -> Path:
    return auc_vs_sparsity(assessment_rows, out_dir / "auc_vs_sparsity.png", t_p, t_s, title)


def render_report_figures(out_dir: Path, report) -> list[Path]:
    from .pipeline import weak_count_row

    th = report.config["thresholds"]
    title = f"{report.config['model']} / {report.config['dataset_format']}"
    return [
        auc_vs_sparsity(report.rows, out_dir / "auc_vs_sparsity.png", th["t_p"], th["t_s"], title),
        weak_count_bars([weak_count_row(report)], out_dir / "weak_counts.png", title),
    ]
