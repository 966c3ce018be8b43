"""Turn a results table into per-epoch curve data and rendered figures.

The CSV output (epoch, split, train_acc, test_acc) is plotting-tool
agnostic; alongside it the report renders accuracy and loss curves to
PNG with matplotlib, one line per split (solid = training, dashed =
testing on the held-out experiment).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import ResultsTable

CURVES_CSV_HEADER = ("epoch", "split", "train_acc", "test_acc")


def write_curves(table: ResultsTable, path: str | Path) -> None:
    """Write per-epoch accuracy curves, ordered by split then epoch."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVES_CSV_HEADER)
        for split_id, m in table.rows():
            writer.writerow([m.epoch, split_id, repr(m.train_acc), repr(m.test_acc)])


def render_accuracy_figure(table: ResultsTable, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, split_id in enumerate(sorted(table.per_split)):
        rows = table.per_split[split_id]
        epochs = [m.epoch + 1 for m in rows]
        color = colors[i % len(colors)]
        ax.plot(epochs, [m.train_acc for m in rows], color=color, linestyle="-",
                label=f"train (test exp {split_id})")
        ax.plot(epochs, [m.test_acc for m in rows], color=color, linestyle="--",
                label=f"test exp {split_id}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, ncol=2, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_loss_figure(table: ResultsTable, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for split_id in sorted(table.per_split):
        rows = table.per_split[split_id]
        ax.plot([m.epoch + 1 for m in rows], [m.mean_loss for m in rows],
                label=f"test exp {split_id}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(
    table: ResultsTable,
    curves_path: str | Path,
    fig_dir: str | Path | None = None,
    figures: bool = True,
) -> list[Path]:
    """Write curves CSV and, unless disabled, the PNG figures next to it.

    Returns the list of files written.
    """
    curves_path = Path(curves_path)
    written = [curves_path]
    write_curves(table, curves_path)
    if figures:
        out = Path(fig_dir) if fig_dir is not None else curves_path.parent
        out.mkdir(parents=True, exist_ok=True)
        acc = out / "accuracy_curves.png"
        loss = out / "loss_curves.png"
        render_accuracy_figure(table, acc)
        render_loss_figure(table, loss)
        written += [acc, loss]
    return written
