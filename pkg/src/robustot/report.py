"""Figure rendering for report artifacts.

Every report path that writes delimited output can also render a matching
matplotlib figure next to it; the CSV/JSON files remain the machine
contract, the figures are for eyeballing.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def elbow_figure(report, path):
    """Trimming curve with the detected radius and slope threshold."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax0.plot(report.grid, report.curve, marker="o", ms=3)
    ax0.axvline(report.eps_hat, color="tab:red", ls="--",
                label=f"eps_hat = {report.eps_hat:.3f}")
    ax0.set_xlabel("delta")
    ax0.set_ylabel("(1 - delta) W^delta^p")
    ax0.legend()
    mids = 0.5 * (report.grid[:-1] + report.grid[1:])
    ax1.plot(mids, report.slopes, marker="o", ms=3)
    ax1.axhline(report.threshold, color="tab:red", ls="--", label="threshold")
    ax1.set_xlabel("delta")
    ax1.set_ylabel("forward slope")
    ax1.set_yscale("symlog")
    ax1.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def experiment_figure(name, records, columns, path):
    """One summary figure per experiment family."""
    fig, ax = plt.subplots(figsize=(6, 4))
    value_cols = [c for c in columns if c not in ("seed", "n", "eps")]
    ns = sorted({rec["n"] for rec in records})
    if len(ns) > 1:
        for col in value_cols:
            means = [np.mean([rec[col] for rec in records if rec["n"] == n])
                     for n in ns]
            ax.plot(ns, means, marker="o", ms=3, label=col)
        ax.set_xscale("log")
        positive = all(
            rec[col] > 0 for rec in records for col in value_cols
        )
        if positive:
            ax.set_yscale("log")
        ax.set_xlabel("n")
    else:
        seeds = [rec["seed"] for rec in records]
        order = np.argsort(seeds)
        for col in value_cols:
            vals = np.asarray([rec[col] for rec in records])[order]
            ax.plot(range(len(vals)), vals, marker="o", ms=3, label=col)
        ax.set_xlabel("trial")
        if all(rec[col] > 0 for rec in records for col in value_cols):
            ax.set_yscale("log")
    ax.set_ylabel("value")
    ax.set_title(name)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
