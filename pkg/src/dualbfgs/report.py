"""Figure rendering for run and trial artifacts.

Figures are rendered headlessly to files next to the CSV/JSON outputs;
nothing here affects the numerical pipeline.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def convergence_figure(traces: dict, path, xlabel: str = "iteration t",
                       title: str | None = None) -> None:
    """Semilog-y normalized-error curves, one per labelled trace.

    `traces` maps a label to a list of records with .t and .err fields.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, trace in traces.items():
        ts = [rec.t for rec in trace]
        errs = [max(rec.err, 1e-300) for rec in trace]
        ax.semilogy(ts, errs, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("normalized error e(t)")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def histogram_figure(histograms: dict, path, xlabel: str = "exchanges to threshold",
                     title: str | None = None) -> None:
    """Bar-chart histograms of exchange counts, one panel per method.

    `histograms` maps a method name to a make_histogram() dict.
    """
    methods = list(histograms)
    fig, axes = plt.subplots(len(methods), 1, figsize=(6.0, 2.6 * len(methods)),
                             squeeze=False, sharex=True)
    for ax, method in zip(axes[:, 0], methods):
        hist = histograms[method]
        width = hist["bin_width"] or 1
        los = [b["lo"] for b in hist["bins"]]
        counts = [b["count"] for b in hist["bins"]]
        ax.bar(los, counts, width=width, align="edge", edgecolor="black",
               alpha=0.75)
        ax.set_ylabel("trials")
        ax.set_title(method, fontsize=10)
        ax.grid(True, axis="y", alpha=0.3)
    axes[-1, 0].set_xlabel(xlabel)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
