"""Minimal static SVG figures. CSV files are the canonical outputs; these
charts are a convenience for eyeballing runs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def line_chart(path, series: dict, xlabel: str, ylabel: str, title: str = "") -> None:
    """One line per (label -> (x, y)) entry."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(str(path), format="svg")
    plt.close(fig)


def histogram_pair(path, first, second, labels: tuple[str, str], xlabel: str, bins: int = 40, title: str = "") -> None:
    """Two overlaid normalized histograms."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(first, bins=bins, alpha=0.55, label=labels[0], density=True)
    ax.hist(second, bins=bins, alpha=0.55, label=labels[1], density=True)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(str(path), format="svg")
    plt.close(fig)


def reliability_diagram(path, bin_stats, title: str = "") -> None:
    """Per-bin confidence vs accuracy bars for nonempty bins."""
    fig, ax = plt.subplots(figsize=(5, 4))
    centers, accs, confs = [], [], []
    n_bins = len(bin_stats)
    for j, stat in enumerate(bin_stats):
        if stat.count == 0:
            continue
        centers.append((j + 0.5) / n_bins)
        accs.append(stat.accuracy)
        confs.append(stat.confidence)
    width = 0.8 / n_bins
    ax.bar([c - width / 2 for c in centers], accs, width=width, label="accuracy")
    ax.bar([c + width / 2 for c in centers], confs, width=width, label="confidence")
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("confidence bin")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(str(path), format="svg")
    plt.close(fig)
