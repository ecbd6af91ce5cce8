"""Learning-curve figures for combined run reports."""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.figure  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot_learning_curves(
    combined: pd.DataFrame, metric: str = "val_acc"
) -> matplotlib.figure.Figure:
    """
    Plot one curve of ``metric`` per run against epoch.

    Each run whose gate reached 1 gets a dashed vertical line, in the run's
    colour, at the first epoch with ``g = 1``.

    Parameters
    ----------
    combined : pandas.DataFrame
        Output of ``collect_runs``: columns ``run``, ``epoch``, ``g``,
        ``g_full_epoch`` and ``metric``
    metric : str
        Column to plot on the y axis

    Returns
    -------
    matplotlib.figure.Figure
        The generated figure
    """
    fig, ax = plt.subplots(figsize=(10, 6))
    for run, frame in combined.groupby("run", sort=True):
        (line,) = ax.plot(frame["epoch"], frame[metric], marker="o", markersize=3, label=str(run))
        full = frame["g_full_epoch"].iloc[0]
        if full is not None and not (isinstance(full, float) and math.isnan(full)):
            ax.axvline(x=float(full), color=line.get_color(), linestyle="--", linewidth=1)

    ax.set_xlabel("Epoch")
    ax.set_ylabel(metric.replace("_", " "))
    ax.set_title(f"{metric.replace('_', ' ')} per run (dashed: g reaches 1)")
    ax.grid(True, linestyle=":", alpha=0.5)
    if combined["run"].nunique() <= 12:
        ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    return fig
