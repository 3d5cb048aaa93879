"""Figure builders over the solver's CSV schemas.

Result files carry one row per run with the fixed header
schema,scheme,problem,m,M,P,N,Q,seed,run,y0,z0_1..z0_d,wall_ms; trajectory
files carry path,t,y,z_1..z_d[,h_1..h_d].  Output format follows the file
suffix; vector formats (svg, pdf) are the default.
"""

import warnings
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

_SCHEME_STYLE = {"euler": "tab:blue", "picard": "tab:orange"}


@dataclass
class PlotSpec:
    inputs: list
    out: str
    column: str = "y0"
    baseline: float | None = None
    axis: str = "m"
    log_x: bool = False
    columns: list = field(default_factory=list)  # trajectory column selection
    bins: int = 30
    title: str | None = None


def load_results(paths, required=()):
    frames = []
    for path in paths:
        df = pd.read_csv(path)
        if df.empty:
            raise ValueError(f"{path}: no data rows to plot")
        frames.append(df)
    data = pd.concat(frames, ignore_index=True)
    missing = [c for c in required if c not in data.columns]
    if missing:
        raise ValueError(f"missing columns {missing}; have {list(data.columns)}")
    return data


def _finish(fig, ax, spec):
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return spec.out


def plot_histogram(spec: PlotSpec):
    """Overlayed per-scheme histograms of one result column, with an optional baseline line."""
    data = load_results(spec.inputs, required=("scheme", spec.column))
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for scheme, group in data.groupby("scheme"):
        ax.hist(group[spec.column], bins=spec.bins, alpha=0.55,
                color=_SCHEME_STYLE.get(scheme), label=f"{scheme} ({len(group)} runs)")
    if spec.baseline is not None:
        ax.axvline(spec.baseline, color="black", linestyle="--", linewidth=1.2,
                   label="baseline")
    ax.set_xlabel(spec.column)
    ax.set_ylabel("count")
    ax.legend()
    return _finish(fig, ax, spec)


def plot_sweep(spec: PlotSpec):
    """Mean of one result column against a parameter, with a +-1 std band per scheme."""
    data = load_results(spec.inputs, required=("scheme", spec.axis, spec.column))
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for scheme, group in data.groupby("scheme"):
        agg = group.groupby(spec.axis)[spec.column].agg(["mean", "std", "count"])
        color = _SCHEME_STYLE.get(scheme)
        ax.plot(agg.index, agg["mean"], marker="o", color=color, label=scheme)
        if (agg["count"] > 1).all():
            ax.fill_between(agg.index, agg["mean"] - agg["std"], agg["mean"] + agg["std"],
                            alpha=0.25, color=color)
        else:
            warnings.warn(f"{scheme}: single run per {spec.axis} value, no std band",
                          stacklevel=2)
    if spec.baseline is not None:
        ax.axhline(spec.baseline, color="black", linestyle="--", linewidth=1.2,
                   label="baseline")
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_xlabel(spec.axis)
    ax.set_ylabel(spec.column)
    ax.legend()
    return _finish(fig, ax, spec)


def plot_paths(spec: PlotSpec):
    """Sampled solution trajectories: one line per path for each selected column."""
    data = load_results(spec.inputs, required=("path", "t"))
    columns = spec.columns or ["y"]
    missing = [c for c in columns if c not in data.columns]
    if missing:
        raise ValueError(f"trajectory file has no columns {missing}; have {list(data.columns)}")
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for column in columns:
        for path_id, group in data.groupby("path"):
            group = group.sort_values("t")
            ax.plot(group["t"], group[column], linewidth=1.0, alpha=0.8,
                    label=column if path_id == data["path"].iloc[0] else None)
    ax.set_xlabel("t")
    ax.set_ylabel(", ".join(columns))
    ax.legend()
    return _finish(fig, ax, spec)
