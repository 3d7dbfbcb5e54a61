#!/usr/bin/env python3
"""Render learning curves and visitation heatmaps from run artifacts.

Usage:
  plot_metrics.py curves out.png metrics_a.csv [metrics_b.csv ...]
  plot_metrics.py heatmap out.png heatmap_xxx.csv

Metrics CSVs are what `tace run` emits; aggregated CSVs from
`tace aggregate` work too (the *_mean columns are used, shaded by
*_stderr when present).
"""

import csv
import sys


def read_csv(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return rows


def plot_curves(out_path, paths, plt):
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for path in paths:
        rows = read_csv(path)
        it = [float(r["iteration"]) for r in rows]
        for ax, key, label in (
            (axes[0], "mean_return", "mean return"),
            (axes[1], "success_rate", "success rate"),
        ):
            mean_key = key + "_mean" if key + "_mean" in rows[0] else key
            ys = [float(r[mean_key]) for r in rows]
            (line,) = ax.plot(it, ys, label=path.split("/")[-1], lw=1.2)
            err_key = key + "_stderr"
            if err_key in rows[0]:
                errs = [float(r[err_key]) for r in rows]
                ax.fill_between(
                    it,
                    [y - e for y, e in zip(ys, errs)],
                    [y + e for y, e in zip(ys, errs)],
                    color=line.get_color(),
                    alpha=0.2,
                )
            ax.set_xlabel("iteration")
            ax.set_ylabel(label)
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    print("wrote", out_path)


def plot_heatmap(out_path, path, plt):
    with open(path) as f:
        grid = [[float(x) for x in row] for row in csv.reader(f)]
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(grid, cmap="viridis")
    fig.colorbar(im, ax=ax, label="visits")
    ax.set_title(path.split("/")[-1], fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=140)
    print("wrote", out_path)


def main():
    if len(sys.argv) < 4 or sys.argv[1] not in ("curves", "heatmap"):
        print(__doc__)
        return 2
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if sys.argv[1] == "curves":
        plot_curves(sys.argv[2], sys.argv[3:], plt)
    else:
        plot_heatmap(sys.argv[2], sys.argv[3], plt)
    return 0


if __name__ == "__main__":
    sys.exit(main())
