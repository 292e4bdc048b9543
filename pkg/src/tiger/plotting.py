"""Learning-curve rendering: mean line plus a std band per labeled run."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import read_aggregate


def _label_for(path: str) -> str:
    parent = os.path.basename(os.path.dirname(os.path.abspath(path)))
    stem = os.path.splitext(os.path.basename(path))[0]
    return parent if stem == "aggregate" else stem


def plot_runs(aggregate_paths: list[str], out_dir: str,
              metric_name: str = "eval metric") -> tuple[str, str]:
    """Render one chart over any number of aggregate files.

    Returns (chart path, flat data path). The flat file repeats every
    plotted series value at full precision, one row per point.
    """
    series = [(_label_for(p), read_aggregate(p)) for p in aggregate_paths]
    os.makedirs(out_dir, exist_ok=True)
    chart_path = os.path.join(out_dir, "plot.png")
    data_path = os.path.join(out_dir, "plot_data.csv")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, rows in series:
        steps = [r[0] for r in rows]
        means = [r[1] for r in rows]
        stds = [r[2] for r in rows]
        ax.plot(steps, means, label=label)
        ax.fill_between(steps,
                        [m - s for m, s in zip(means, stds)],
                        [m + s for m, s in zip(means, stds)],
                        alpha=0.2)
    ax.set_xlabel("environment steps")
    ax.set_ylabel(metric_name)
    ax.legend()
    fig.tight_layout()
    fig.savefig(chart_path, dpi=120)
    plt.close(fig)

    with open(data_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("label,env_steps,mean,std\n")
        for label, rows in series:
            for steps, mean, std, _ in rows:
                fh.write(f"{label},{steps},{mean!r},{std!r}\n")
    return chart_path, data_path
