"""Report figures, rendered to SVG with their source data embedded.

Every figure is drawn from a small tidy table.  That table is written next
to the figure as `<name>_data.csv`, and the same CSV text is embedded
verbatim in the SVG's Description metadata, so a figure can always be
traced back to its numbers byte for byte.

The module forces the Agg backend and a fixed `svg.hashsalt`, and strips
the creation date, so rendering the same data twice gives identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np
import pandas as pd

from .errors import DataError
from .wstats import weighted_mean

_RC = {
    "svg.hashsalt": "pfspanel",
    "svg.fonttype": "path",
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

FIGURE_NAMES = (
    "pfs_distribution",
    "insecurity_prevalence",
    "pfs_by_group",
    "spell_lengths",
    "newly_still",
    "representativeness",
)


def _finish(fig, ax, out_dir: Path, name: str, data: pd.DataFrame,
            title: str, paths: dict) -> None:
    ax.set_title(title)
    fig.tight_layout()
    csv_text = data.to_csv(index=False)
    csv_path = out_dir / f"{name}_data.csv"
    csv_path.write_text(csv_text)
    svg_path = out_dir / f"{name}.svg"
    fig.savefig(
        svg_path,
        format="svg",
        metadata={"Description": csv_text, "Date": None},
    )
    plt.close(fig)
    paths[name] = (svg_path, csv_path)


def pfs_histogram_table(pfs: pd.DataFrame, n_bins: int = 25) -> pd.DataFrame:
    vals = pfs["pfs"].to_numpy(dtype=float)
    w = pfs["adjusted_weight"].to_numpy(dtype=float)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    hist, _ = np.histogram(vals, bins=edges, weights=w)
    total = hist.sum()
    share = hist / total if total > 0 else hist
    return pd.DataFrame(
        {
            "bin_left": np.round(edges[:-1], 6),
            "bin_right": np.round(edges[1:], 6),
            "weight_share": share,
        }
    )


def emit_figures(
    out_dir: str | Path,
    pfs: pd.DataFrame,
    prevalence: pd.DataFrame,
    group_summary: pd.DataFrame,
    spell_distribution: pd.DataFrame,
    newly_still: pd.DataFrame,
    representativeness: pd.DataFrame,
    targets: pd.DataFrame | None = None,
) -> dict[str, tuple[Path, Path]]:
    """Render the six report figures; returns name -> (svg, data csv)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, tuple[Path, Path]] = {}
    with plt.rc_context(_RC):
        _fig_pfs_distribution(out, pfs, paths)
        _fig_prevalence(out, prevalence, targets, paths)
        _fig_group_box(out, group_summary, paths)
        _fig_spells(out, spell_distribution, paths)
        _fig_newly_still(out, newly_still, paths)
        _fig_representativeness(out, representativeness, paths)
    return paths


def _fig_pfs_distribution(out, pfs, paths):
    if not len(pfs):
        raise DataError("cannot draw a distribution from an empty pfs table")
    data = pfs_histogram_table(pfs)
    wmean = float(
        weighted_mean(
            pfs["pfs"].to_numpy(dtype=float),
            pfs["adjusted_weight"].to_numpy(dtype=float),
        )
    )
    fig, ax = plt.subplots()
    width = data["bin_right"] - data["bin_left"]
    ax.bar(data["bin_left"], data["weight_share"], width=width, align="edge",
           color="#4878a8", edgecolor="white")
    ax.axvline(wmean, color="#b2543c", linestyle="--",
               label=f"weighted mean {wmean:.3f}")
    ax.set_xlabel("probability of food security")
    ax.set_ylabel("weight share")
    ax.legend()
    _finish(fig, ax, out, "pfs_distribution", data,
            "Distribution of person-year food-security probabilities", paths)


def _fig_prevalence(out, prevalence, targets, paths):
    data = prevalence.copy()
    if targets is not None and len(targets):
        data = data.merge(targets, on="year", how="left")
    else:
        data["target"] = np.nan
    fig, ax = plt.subplots()
    ax.plot(data["year"], data["prevalence"], marker="o", color="#4878a8",
            label="classified insecure share")
    if data["target"].notna().any():
        hit = data[data["target"].notna()]
        ax.scatter(hit["year"], hit["target"], marker="x", color="#b2543c",
                   zorder=3, label="anchoring target")
    ax.set_xlabel("survey year")
    ax.set_ylabel("weighted share")
    ax.set_ylim(bottom=0.0)
    ax.legend()
    _finish(fig, ax, out, "insecurity_prevalence", data,
            "Food insecurity prevalence by survey year", paths)


def _fig_group_box(out, group_summary, paths):
    """Box plots from precomputed weighted five-number summaries.

    Whiskers come from the summary table, which caps them at observed
    values, so nothing drawn can extend past a group's min or max.
    """
    data = group_summary.copy()
    stats = []
    labels = []
    for row in data.itertuples():
        stats.append(
            {
                "med": row.median,
                "q1": row.q1,
                "q3": row.q3,
                "whislo": row.whisker_low,
                "whishi": row.whisker_high,
                "fliers": [],
            }
        )
        labels.append(f"{row.level}")
    fig, ax = plt.subplots()
    if stats:
        ax.bxp(stats, showfliers=False)
        ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("probability of food security")
    _finish(fig, ax, out, "pfs_by_group", data,
            "Food-security probability by group", paths)


def _fig_spells(out, spell_distribution, paths):
    data = spell_distribution.copy()
    fig, ax = plt.subplots()
    if len(data):
        ax.bar(data["length"].astype(int), data["share"], color="#4878a8")
        ax.set_xticks(data["length"].astype(int).tolist())
    ax.set_xlabel("spell length (waves)")
    ax.set_ylabel("weighted share of spells")
    _finish(fig, ax, out, "spell_lengths", data,
            "Distribution of insecurity spell lengths", paths)


def _fig_newly_still(out, newly_still, paths):
    data = newly_still.copy()
    fig, ax = plt.subplots()
    if len(data):
        years = data["year"]
        ax.bar(years, data["newly"], label="newly insecure", color="#b2543c")
        ax.bar(years, data["still"], bottom=data["newly"],
               label="still insecure", color="#4878a8")
        base = data["newly"] + data["still"]
        ax.bar(years, data["prior_unknown"], bottom=base,
               label="prior wave unknown", color="#999999")
        ax.legend()
    ax.set_xlabel("survey year")
    ax.set_ylabel("weighted insecure mass")
    _finish(fig, ax, out, "newly_still", data,
            "Insecure person-years by prior-wave status", paths)


def _fig_representativeness(out, representativeness, paths):
    data = representativeness.copy()
    fig, ax = plt.subplots()
    if len(data):
        labels = data["dimension"].astype(str) + ": " + data["level"].astype(str)
        y = np.arange(len(data))
        ax.barh(y - 0.2, data["share_full"], height=0.4, color="#999999",
                label="all respondents")
        ax.barh(y + 0.2, data["share_study"], height=0.4, color="#4878a8",
                label="study sample")
        ax.set_yticks(y)
        ax.set_yticklabels(labels, fontsize=7)
        ax.invert_yaxis()
        ax.legend()
    ax.set_xlabel("weighted share")
    _finish(fig, ax, out, "representativeness", data,
            "Study sample versus full file", paths)
