"""Optional SVG rendering of QQ, scatter, and ratio panels."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport, QQData, ScatterData


def qq_panel(qq: QQData, path, label_a="a", label_b="b") -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(qq.quantiles_a, qq.quantiles_b, "o", ms=3)
    lims = [min(qq.quantiles_a.min(), qq.quantiles_b.min()),
            max(qq.quantiles_a.max(), qq.quantiles_b.max())]
    ax.plot(lims, lims, "k--", lw=0.8)
    ax.set_xlabel(f"quantiles of {label_a}")
    ax.set_ylabel(f"quantiles of {label_b}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def scatter_panel(sc: ScatterData, path, label_a="a", label_b="b") -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(sc.a, sc.b, ".", ms=2, alpha=0.5)
    ax.set_xlabel(label_a)
    ax.set_ylabel(label_b)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def ratio_panels(report: EvalReport, path) -> None:
    means = report.frame.groupby(["v1", "v2", "q_d"])[
        ["ratio_cpr", "ratio_tpr", "ratio_fnr"]].mean().reset_index()
    metrics = ["ratio_cpr", "ratio_tpr", "ratio_fnr"]
    fig, axes = plt.subplots(3, 1, figsize=(6, 9), sharex=True)
    for ax, metric in zip(axes, metrics):
        for (v1, v2), sub in means.groupby(["v1", "v2"]):
            ax.plot(sub["q_d"], sub[metric], marker="o",
                    label=f"v1={v1}, v2={v2}")
        ax.axhline(1.0, color="k", lw=0.8, ls="--")
        ax.set_ylabel(metric)
    axes[-1].set_xlabel("repair percentile q_D")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
