"""Rendering of result bundles: aligned text tables, tab-separated plot data,
and matplotlib figures written to files."""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

import numpy as np

from .analysis import FairnessReport
from .fl import TrainingTrace


@dataclass
class GridEntry:
    """One solved relaxation point with both evaluation views."""

    eps: float
    delta: float
    objective: float
    estimated_loss: float
    empirical_loss: Optional[float]
    analytic: FairnessReport
    empirical: Optional[FairnessReport]

    def to_json_dict(self) -> Dict[str, object]:
        return {
            "eps": self.eps,
            "delta": self.delta,
            "objective": self.objective,
            "estimated_loss": self.estimated_loss,
            "empirical_loss": self.empirical_loss,
            "analytic": self.analytic.to_json_dict(),
            "empirical": self.empirical.to_json_dict() if self.empirical else None,
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, object]) -> "GridEntry":
        return cls(
            eps=float(d["eps"]),
            delta=float(d["delta"]),
            objective=float(d["objective"]),
            estimated_loss=float(d["estimated_loss"]),
            empirical_loss=None if d.get("empirical_loss") is None else float(d["empirical_loss"]),
            analytic=FairnessReport.from_json_dict(d["analytic"]),
            empirical=(
                FairnessReport.from_json_dict(d["empirical"]) if d.get("empirical") else None
            ),
        )


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Right-pad every column to its widest cell."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines)


def _num(x: Optional[float], digits: int = 4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{x:.{digits}f}"


def summary_table(baseline: FairnessReport, entries: Sequence[GridEntry]) -> str:
    """Baseline and per-relaxation metrics, empirical where available with the
    analytic view alongside."""
    headers = ["predictor", "eps", "delta", "EOD", "AD", "Avg-Acc", "MaxErrDev", "Est-Loss", "Emp-Loss"]
    rows = [[
        "baseline", "-", "-",
        _num(baseline.eod), _num(baseline.accuracy_disparity), _num(baseline.avg_acc),
        _num(baseline.max_error_deviation), "-", "-",
    ]]
    for e in entries:
        shown = e.empirical if e.empirical is not None else e.analytic
        rows.append([
            "post", _num(e.eps, 3), _num(e.delta, 3),
            _num(shown.eod), _num(shown.accuracy_disparity), _num(shown.avg_acc),
            _num(shown.max_error_deviation), _num(e.estimated_loss), _num(e.empirical_loss),
        ])
    return format_table(headers, rows)


def analytic_table(entries: Sequence[GridEntry]) -> str:
    """Exact expected metrics of each solved policy (no sampling noise)."""
    headers = ["eps", "delta", "EOD", "AD", "Avg-Acc", "MaxErrDev", "Objective"]
    rows = [
        [
            _num(e.eps, 3), _num(e.delta, 3), _num(e.analytic.eod),
            _num(e.analytic.accuracy_disparity), _num(e.analytic.avg_acc),
            _num(e.analytic.max_error_deviation), _num(e.objective, 6),
        ]
        for e in entries
    ]
    return format_table(headers, rows)


def trace_table(trace: TrainingTrace) -> str:
    headers = ["round"] + [f"client{c}_loss" for c in trace.communities] + ["val_loss", "val_acc"]
    rows = []
    for rnd in range(trace.client_losses.shape[0]):
        row = [str(rnd + 1)]
        row += [_num(v) for v in trace.client_losses[rnd]]
        row += [_num(trace.val_loss[rnd]), _num(trace.val_acc[rnd])]
        rows.append(row)
    return format_table(headers, rows)


# ---------------------------------------------------------------------------
# delimited plot data
# ---------------------------------------------------------------------------

def trace_tsv_lines(trace: TrainingTrace, comment: Optional[str] = None) -> List[str]:
    lines = [f"# {comment}"] if comment else []
    lines.append("\t".join(
        ["round"] + [f"client{c}_loss" for c in trace.communities] + ["val_loss", "val_acc"]
    ))
    for rnd in range(trace.client_losses.shape[0]):
        cells = [str(rnd + 1)]
        for v in trace.client_losses[rnd]:
            cells.append("" if math.isnan(v) else f"{v:.10g}")
        for v in (trace.val_loss[rnd], trace.val_acc[rnd]):
            cells.append("" if math.isnan(v) else f"{v:.10g}")
        lines.append("\t".join(cells))
    return lines


def grid_tsv_lines(entries: Sequence[GridEntry], comment: Optional[str] = None) -> List[str]:
    lines = [f"# {comment}"] if comment else []
    lines.append("\t".join([
        "eps", "delta", "objective", "estimated_loss", "empirical_loss",
        "eod", "ad", "avg_acc", "max_error_deviation",
    ]))
    for e in entries:
        shown = e.empirical if e.empirical is not None else e.analytic
        cells = [
            f"{e.eps:.10g}", f"{e.delta:.10g}", f"{e.objective:.10g}", f"{e.estimated_loss:.10g}",
            "" if e.empirical_loss is None else f"{e.empirical_loss:.10g}",
            f"{shown.eod:.10g}", f"{shown.accuracy_disparity:.10g}",
            f"{shown.avg_acc:.10g}", f"{shown.max_error_deviation:.10g}",
        ]
        lines.append("\t".join(cells))
    return lines


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def save_training_figure(trace: TrainingTrace, path) -> None:
    """Per-client training losses and global validation loss by round."""
    rounds = np.arange(1, trace.client_losses.shape[0] + 1)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    for i, c in enumerate(trace.communities):
        ax.plot(rounds, trace.client_losses[:, i], alpha=0.7, label=f"client {c} train")
    if not np.all(np.isnan(trace.val_loss)):
        ax.plot(rounds, trace.val_loss, color="black", linewidth=2, label="validation")
        ax.axvline(trace.best_round, color="gray", linestyle="--", linewidth=1,
                   label=f"selected round {trace.best_round}")
    ax.set_xlabel("round")
    ax.set_ylabel("cross-entropy loss")
    ax.set_title("Federated training")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_relaxation_figure(entries: Sequence[GridEntry], path) -> None:
    """Accuracy against the error-deviation slack, one line per rate-gap slack."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    by_eps: Dict[float, List[GridEntry]] = {}
    for e in entries:
        by_eps.setdefault(e.eps, []).append(e)
    for eps, group in sorted(by_eps.items()):
        group = sorted(group, key=lambda e: e.delta)
        deltas = [e.delta for e in group]
        accs = [(e.empirical or e.analytic).avg_acc for e in group]
        ax.plot(deltas, accs, marker="o", label=f"eps={eps:g}")
    ax.set_xlabel("delta (error-deviation slack)")
    ax.set_ylabel("average accuracy")
    ax.set_title("Accuracy across relaxations")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_comparison_figure(baseline: FairnessReport, entries: Sequence[GridEntry], path) -> None:
    """Grouped bars: baseline vs post-processed EOD / AD / average accuracy."""
    strict = min(entries, key=lambda e: (e.eps, e.delta))
    shown = strict.empirical if strict.empirical is not None else strict.analytic
    metrics = ["EOD", "AD", "Avg-Acc"]
    base_vals = [abs(baseline.eod), baseline.accuracy_disparity, baseline.avg_acc]
    post_vals = [abs(shown.eod), shown.accuracy_disparity, shown.avg_acc]
    x = np.arange(len(metrics))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.bar(x - 0.18, base_vals, width=0.36, label="baseline")
    ax.bar(x + 0.18, post_vals, width=0.36,
           label=f"post (eps={strict.eps:g}, delta={strict.delta:g})")
    ax.set_xticks(x, metrics)
    ax.set_title("Fairness before and after post-processing")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
