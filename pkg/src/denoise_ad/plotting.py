"""Figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def plot_sweep(rows, summary, path):
    """F1 and epochs against dropout p, one column per dataset.

    Medians are drawn as lines, individual seeds as faint dots.
    """
    datasets = sorted({s["dataset"] for s in summary})
    if not datasets:
        return None
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, len(datasets), figsize=(3.6 * len(datasets), 5.2), squeeze=False)
        for j, ds in enumerate(datasets):
            ax_f1, ax_ep = axes[0, j], axes[1, j]
            archs = sorted({s["arch"] for s in summary if s["dataset"] == ds},
                           key=lambda a: [int(u) for u in a.split(",")])
            for arch in archs:
                grp = [s for s in summary if s["dataset"] == ds and s["arch"] == arch]
                ps = [s["dropout_p"] for s in grp]
                (line,) = ax_f1.plot(ps, [s["f1"] for s in grp], marker="o", label=f"({arch})")
                ax_ep.plot(ps, [s["epochs"] for s in grp], marker="o", color=line.get_color())
                cells = [r for r in rows if r["dataset"] == ds and r["arch"] == arch and not r["error"]]
                ax_f1.scatter([r["dropout_p"] for r in cells], [r["f1"] for r in cells],
                              s=8, alpha=0.35, color=line.get_color())
                ax_ep.scatter([r["dropout_p"] for r in cells], [r["epochs"] for r in cells],
                              s=8, alpha=0.35, color=line.get_color())
                best = next((s for s in grp if s["best"]), None)
                if best is not None:
                    ax_f1.scatter([best["dropout_p"]], [best["f1"]], s=80, facecolors="none",
                                  edgecolors=line.get_color(), linewidths=1.5)
            ax_f1.set_title(ds)
            ax_f1.set_ylabel("F1")
            ax_ep.set_ylabel("epochs")
            ax_ep.set_xlabel("dropout p")
            ax_f1.legend(title="arch")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_correlation(report, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.4))
        for r in report.rows:
            x = 100.0 * r["anomaly_ratio"]
            ax.scatter([x] * len(r["optimal_p"]), r["optimal_p"], s=30)
            ax.annotate(r["dataset"], (x, r["optimal_p_mean"]), textcoords="offset points",
                        xytext=(4, 4), fontsize=8)
        ax.set_xlabel("anomaly samples (%)")
        ax.set_ylabel("optimal dropout p")
        rho = "n/a" if report.spearman is None else f"{report.spearman:+.2f}"
        ax.set_title(f"Spearman rho = {rho}")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_scores(values, scores, labels, threshold, path, name="series"):
    """Series on top, scores with the threshold below; labeled points in red."""
    values = np.asarray(values).reshape(len(values), -1)
    t = np.arange(values.shape[0])
    with plt.rc_context(STYLE):
        fig, (ax_v, ax_s) = plt.subplots(2, 1, figsize=(9, 4.2), sharex=True)
        ax_v.plot(t, values, lw=0.6)
        ax_s.plot(scores.index, scores.scores, lw=0.6, color="0.3")
        if threshold is not None:
            ax_s.axhline(threshold, color="tab:orange", lw=1, ls="--", label="threshold")
            ax_s.legend(loc="upper right")
        if labels is not None:
            hit = np.flatnonzero(np.asarray(labels) == 1)
            ax_v.scatter(hit, values[hit, 0], s=10, color="tab:red", zorder=3)
        ax_v.set_title(name)
        ax_v.set_ylabel("value")
        ax_s.set_ylabel("score")
        ax_s.set_xlabel("index")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
