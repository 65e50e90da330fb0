"""Food-insecurity dynamics over the classified person-year panel.

Everything here runs on the classification table (person, wave, insecure
flag, weight).  The wave calendar decides which survey years count as
consecutive: annual waves are adjacent, the biennial era makes two-year
steps adjacent, and the late-1980s non-survey years break adjacency
entirely.  A wave where a person has no classification is *unknown*; spells
never extend across unknown waves, they are censored there, because the
person may or may not have been insecure in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .errors import DataError, SchemaError
from .waves import WaveCalendar
from .wstats import box_stats, weighted_mean, weighted_var

PERIOD_BINS = ((1981, 1990), (1991, 2000), (2001, 2010), (2011, 2019))
TRANSITORY_MAX_LEN = 2  # spells of one or two waves
PERSISTENT_MIN_LEN = 3

SPELL_COLUMNS = (
    "person_id", "start_year", "end_year", "length", "left_censored",
    "right_censored", "category", "weight",
)


def _check_status(status: pd.DataFrame, calendar: WaveCalendar) -> None:
    for col in ("person_id", "year", "insecure"):
        if col not in status.columns:
            raise SchemaError(f"status table is missing column {col!r}")
    bad = sorted({int(y) for y in status["year"].unique() if int(y) not in calendar})
    if bad:
        raise DataError(f"status years {bad} are not survey waves")
    if status.duplicated(["person_id", "year"]).any():
        raise DataError("status table has duplicate person-year rows")


@dataclass
class _Run:
    start: int
    end: int
    length: int


def _runs_for_person(
    years: list[int], known: dict[int, bool], calendar: WaveCalendar
) -> list[_Run]:
    runs: list[_Run] = []
    cur: _Run | None = None
    for y in years:
        if known[y]:
            if cur is not None and calendar.adjacent(cur.end, y):
                cur.end = y
                cur.length += 1
            else:
                if cur is not None:
                    runs.append(cur)
                cur = _Run(start=y, end=y, length=1)
        else:
            if cur is not None:
                runs.append(cur)
                cur = None
    if cur is not None:
        runs.append(cur)
    return runs


def _bridge(
    runs: list[_Run], known: dict[int, bool], calendar: WaveCalendar
) -> list[_Run]:
    """Merge runs separated by exactly one unknown wave.

    The merged spell length still counts insecure waves only; the unknown
    wave in the middle contributes nothing.
    """
    if not runs:
        return runs
    merged = [runs[0]]
    for nxt in runs[1:]:
        prev = merged[-1]
        u = calendar.next_wave(prev.end)
        if (
            u is not None
            and u not in known
            and calendar.adjacent(prev.end, u)
            and calendar.prev_wave(nxt.start) == u
            and calendar.adjacent(u, nxt.start)
        ):
            prev.end = nxt.end
            prev.length += nxt.length
        else:
            merged.append(nxt)
    return merged


def find_spells(
    status: pd.DataFrame,
    calendar: WaveCalendar,
    bridge_gaps: bool = False,
) -> pd.DataFrame:
    """Maximal stretches of adjacent insecure waves, with censoring flags.

    A spell is left-censored when the wave before its start carries no known
    status (person unobserved there, or no adjacent prior wave exists), and
    right-censored symmetrically.  A spell's weight is the person's weight
    at its first wave.
    """
    _check_status(status, calendar)
    has_w = "adjusted_weight" in status.columns
    rows = []
    for pid, grp in status.groupby("person_id", sort=True):
        g = grp.sort_values("year")
        years = [int(y) for y in g["year"]]
        known = dict(zip(years, (bool(b) for b in g["insecure"])))
        weights = dict(zip(years, g["adjusted_weight"])) if has_w else {}
        runs = _runs_for_person(years, known, calendar)
        runs = [r for r in runs if known[r.start]]
        if bridge_gaps:
            runs = _bridge(runs, known, calendar)
        for r in runs:
            lag = calendar.lag_year(r.start)
            left = lag is None or lag not in known
            fwd = calendar.next_wave(r.end)
            right = (
                fwd is None
                or not calendar.adjacent(r.end, fwd)
                or fwd not in known
            )
            rows.append(
                {
                    "person_id": pid,
                    "start_year": r.start,
                    "end_year": r.end,
                    "length": r.length,
                    "left_censored": left,
                    "right_censored": right,
                    "category": (
                        "transitory" if r.length <= TRANSITORY_MAX_LEN else "persistent"
                    ),
                    "weight": float(weights.get(r.start, 1.0)),
                }
            )
    return pd.DataFrame(rows, columns=list(SPELL_COLUMNS))


def spell_distribution(spells: pd.DataFrame) -> pd.DataFrame:
    """Spell counts and weight by length, overall and uncensored-only."""
    if not len(spells):
        return pd.DataFrame(
            columns=["length", "n_spells", "n_uncensored", "weight", "share"]
        )
    rows = []
    total_w = spells["weight"].sum()
    for length in sorted(spells["length"].unique()):
        sub = spells[spells["length"] == length]
        unc = sub[~sub["left_censored"] & ~sub["right_censored"]]
        rows.append(
            {
                "length": int(length),
                "n_spells": len(sub),
                "n_uncensored": len(unc),
                "weight": float(sub["weight"].sum()),
                "share": float(sub["weight"].sum() / total_w),
            }
        )
    return pd.DataFrame(rows)


def _adjacent_pairs(status: pd.DataFrame, calendar: WaveCalendar) -> pd.DataFrame:
    """All person-wave pairs with known status at both a wave and its lag."""
    has_w = "adjusted_weight" in status.columns
    rows = []
    for pid, grp in status.groupby("person_id", sort=True):
        g = grp.sort_values("year")
        known = {
            int(y): bool(b) for y, b in zip(g["year"], g["insecure"])
        }
        weights = (
            {int(y): float(w) for y, w in zip(g["year"], g["adjusted_weight"])}
            if has_w
            else {}
        )
        for y in sorted(known):
            lag = calendar.lag_year(y)
            if lag is not None and lag in known:
                rows.append(
                    {
                        "person_id": pid,
                        "year": y,
                        "prev_insecure": known[lag],
                        "insecure": known[y],
                        "weight": weights.get(y, 1.0),
                    }
                )
    return pd.DataFrame(
        rows, columns=["person_id", "year", "prev_insecure", "insecure", "weight"]
    )


def _pair_rates(sub: pd.DataFrame, label: str, label_col: str = "period") -> dict:
    out = {
        label_col: label,
        "n_pairs": len(sub),
        "weight": float(sub["weight"].sum()) if len(sub) else 0.0,
    }
    for name, prev in (("entry_rate", False), ("persistence_rate", True)):
        base = sub[sub["prev_insecure"] == prev]
        if len(base):
            out[name] = weighted_mean(
                base["insecure"].to_numpy(dtype=float),
                base["weight"].to_numpy(dtype=float),
            )
        else:
            out[name] = np.nan
    out["exit_rate"] = (
        1.0 - out["persistence_rate"]
        if not np.isnan(out["persistence_rate"])
        else np.nan
    )
    # unconditional composition of the pairs; the four shares sum to one
    for name, prev, cur in (
        ("share_sec_to_sec", False, False),
        ("share_sec_to_ins", False, True),
        ("share_ins_to_sec", True, False),
        ("share_ins_to_ins", True, True),
    ):
        m = (sub["prev_insecure"] == prev) & (sub["insecure"] == cur)
        out[name] = (
            float(sub.loc[m, "weight"].sum() / sub["weight"].sum())
            if len(sub)
            else np.nan
        )
    return out


def transition_rates(
    status: pd.DataFrame,
    calendar: WaveCalendar,
    period_bins: tuple[tuple[int, int], ...] = PERIOD_BINS,
) -> pd.DataFrame:
    """Entry and persistence rates over adjacent known-status pairs.

    Pairs are weighted by the person's weight at the later wave and binned
    by that wave's year.  The `all` row uses every pair, including any whose
    year falls outside the named bins.
    """
    _check_status(status, calendar)
    pairs = _adjacent_pairs(status, calendar)
    rows = [_pair_rates(pairs, "all")]
    for lo, hi in period_bins:
        sub = pairs[(pairs["year"] >= lo) & (pairs["year"] <= hi)]
        rows.append(_pair_rates(sub, f"{lo}-{hi}"))
    return pd.DataFrame(rows)


def transition_matrix(
    status: pd.DataFrame,
    calendar: WaveCalendar,
    grouping: str = "period",
    period_bins: tuple[tuple[int, int], ...] = PERIOD_BINS,
) -> pd.DataFrame:
    """Transition rates split by period, in total, or by a person attribute.

    For attribute groupings the attribute is read off the pair's later wave
    row, so the group rows partition the `all` row whenever the attribute is
    never missing.
    """
    if grouping == "period":
        return transition_rates(status, calendar, period_bins)
    _check_status(status, calendar)
    pairs = _adjacent_pairs(status, calendar)
    if grouping == "total":
        return pd.DataFrame([_pair_rates(pairs, "all", label_col="group")])
    if grouping not in status.columns:
        raise SchemaError(f"grouping column {grouping!r} not in status table")
    pairs = pairs.merge(
        status[["person_id", "year", grouping]], on=["person_id", "year"], how="left"
    )
    rows = [_pair_rates(pairs, "all", label_col="group")]
    for level in sorted(pairs[grouping].dropna().unique(), key=str):
        rows.append(
            _pair_rates(pairs[pairs[grouping] == level], str(level),
                        label_col="group")
        )
    return pd.DataFrame(rows)


def chronic_classification(
    status: pd.DataFrame,
    calendar: WaveCalendar,
    min_consecutive: int = 2,
) -> pd.DataFrame:
    """Person-level flag: insecure in `min_consecutive` adjacent waves.

    Only persons with at least one adjacent observed pair can be judged;
    others get determinable=False and a missing flag.
    """
    _check_status(status, calendar)
    spells = find_spells(status, calendar, bridge_gaps=False)
    max_run = spells.groupby("person_id")["length"].max()
    rows = []
    for pid, grp in status.groupby("person_id", sort=True):
        g = grp.sort_values("year")
        years = [int(y) for y in g["year"]]
        n_pairs = sum(
            1
            for y in years
            if calendar.lag_year(y) is not None and calendar.lag_year(y) in years
        )
        longest = int(max_run.get(pid, 0))
        determinable = n_pairs >= 1
        rows.append(
            {
                "person_id": pid,
                "chronic": (longest >= min_consecutive) if determinable else np.nan,
                "determinable": determinable,
                "max_run": longest,
                "n_waves": len(years),
                "n_adjacent_pairs": n_pairs,
                "weight": (
                    float(grp["adjusted_weight"].mean())
                    if "adjusted_weight" in grp.columns
                    else 1.0
                ),
            }
        )
    return pd.DataFrame(rows)


def chronic_prevalence(
    status: pd.DataFrame,
    calendar: WaveCalendar,
    windows: tuple[tuple[int, int], ...] | None = None,
    grouping: str | None = None,
    min_consecutive: int = 2,
) -> pd.DataFrame:
    """Weighted share of determinable persons who were ever chronically
    insecure, overall, per window, and optionally per group level."""
    _check_status(status, calendar)

    def share_for(sub_status: pd.DataFrame, window_label: str) -> list[dict]:
        if not len(sub_status):
            return []
        chron = chronic_classification(sub_status, calendar, min_consecutive)
        det = chron[chron["determinable"]]
        groups = [("all", det)]
        if grouping is not None:
            if grouping not in sub_status.columns:
                raise SchemaError(f"grouping column {grouping!r} not in status table")
            attr = (
                sub_status.dropna(subset=[grouping])
                .groupby("person_id")[grouping]
                .first()
            )
            det = det.assign(_g=det["person_id"].map(attr))
            for level in sorted(det["_g"].dropna().unique(), key=str):
                groups.append((str(level), det[det["_g"] == level]))
        rows = []
        for label, g in groups:
            rows.append(
                {
                    "window": window_label,
                    "group": label,
                    "n_persons": len(g),
                    "weight": float(g["weight"].sum()),
                    "chronic_share": (
                        weighted_mean(
                            g["chronic"].astype(float).to_numpy(),
                            g["weight"].to_numpy(dtype=float),
                        )
                        if len(g)
                        else np.nan
                    ),
                }
            )
        return rows

    all_rows = share_for(status, "all")
    for lo, hi in windows or ():
        sub = status[(status["year"] >= lo) & (status["year"] <= hi)]
        all_rows.extend(share_for(sub, f"{lo}-{hi}"))
    return pd.DataFrame(
        all_rows, columns=["window", "group", "n_persons", "weight", "chronic_share"]
    )


def newly_still(status: pd.DataFrame, calendar: WaveCalendar) -> pd.DataFrame:
    """Decompose each wave's insecure mass by the prior wave's status."""
    _check_status(status, calendar)
    has_w = "adjusted_weight" in status.columns
    by_person: dict[str, dict[int, bool]] = {}
    for pid, grp in status.groupby("person_id", sort=True):
        by_person[pid] = {int(y): bool(b) for y, b in zip(grp["year"], grp["insecure"])}
    rows = []
    for year in sorted(int(y) for y in status["year"].unique()):
        sub = status[(status["year"] == year) & (status["insecure"].astype(bool))]
        w = sub["adjusted_weight"].to_numpy(dtype=float) if has_w else np.ones(len(sub))
        newly = still = unknown = 0.0
        lag = calendar.lag_year(year)
        for pid, wi in zip(sub["person_id"], w):
            prior = by_person[pid].get(lag) if lag is not None else None
            if prior is None:
                unknown += wi
            elif prior:
                still += wi
            else:
                newly += wi
        rows.append(
            {
                "year": year,
                "insecure_weight": float(w.sum()),
                "newly": newly,
                "still": still,
                "prior_unknown": unknown,
                "n_insecure": len(sub),
            }
        )
    return pd.DataFrame(rows)


# ----------------------------------------------- survey-instrument crosswalk


def fsss_crosstab(frame: pd.DataFrame, flag_col: str = "fsss_insecure") -> pd.DataFrame:
    """Weighted 2x2 table of the PFS classification against another flag."""
    for col in ("insecure", flag_col, "adjusted_weight"):
        if col not in frame.columns:
            raise SchemaError(f"crosstab input is missing column {col!r}")
    sub = frame.dropna(subset=["insecure", flag_col])
    total = sub["adjusted_weight"].sum()
    rows = []
    for pfs_flag in (False, True):
        for other in (False, True):
            m = (sub["insecure"].astype(bool) == pfs_flag) & (
                sub[flag_col].astype(bool) == other
            )
            wsum = float(sub.loc[m, "adjusted_weight"].sum())
            rows.append(
                {
                    "pfs_insecure": pfs_flag,
                    flag_col: other,
                    "n": int(m.sum()),
                    "weight": wsum,
                    "share": wsum / total if total > 0 else np.nan,
                }
            )
    return pd.DataFrame(rows)


def reclassify_by_rank(
    scores, pfs, weights, person_ids, target_share: float
) -> np.ndarray:
    """Flag the worst-scored mass of people as insecure.

    People are ranked by score (worst first), ties broken by lower PFS, then
    by person id.  People are included while the cumulative weight *before*
    them is under the target share of total weight, so the achieved share
    overshoots by at most one person's weight.
    """
    scores = np.asarray(scores, dtype=float)
    pfs = np.asarray(pfs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    person_ids = np.asarray(person_ids)
    if not (scores.shape == pfs.shape == weights.shape == person_ids.shape):
        raise DataError("rank reclassification inputs differ in length")
    if np.isnan(scores).any():
        raise DataError("rank reclassification requires a score for every row")
    total = weights.sum()
    order = np.lexsort((person_ids, pfs, -scores))
    out = np.zeros(scores.size, dtype=bool)
    cum = 0.0
    for idx in order:
        if cum < target_share * total - 1e-12:
            out[idx] = True
            cum += weights[idx]
        else:
            break
    return out


def reclassified_crosstab(frame: pd.DataFrame) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Re-rank each year's raw scores to match that year's weighted
    instrument prevalence, then cross the result against the PFS flag."""
    for col in ("person_id", "year", "pfs", "insecure", "fsss_raw",
                "fsss_status", "adjusted_weight"):
        if col not in frame.columns:
            raise SchemaError(f"reclassification input is missing column {col!r}")
    sub = frame.dropna(subset=["fsss_raw", "fsss_status", "pfs"]).copy()
    flags = np.zeros(len(sub), dtype=bool)
    for year in sorted(sub["year"].unique()):
        m = (sub["year"] == year).to_numpy()
        ysub = sub[m]
        target = weighted_mean(
            (ysub["fsss_status"] == "insecure").to_numpy(dtype=float),
            ysub["adjusted_weight"].to_numpy(dtype=float),
        )
        flags[m] = reclassify_by_rank(
            ysub["fsss_raw"].to_numpy(),
            ysub["pfs"].to_numpy(),
            ysub["adjusted_weight"].to_numpy(),
            ysub["person_id"].to_numpy(),
            target,
        )
    sub["fsss_rank_insecure"] = flags
    table = fsss_crosstab(sub, flag_col="fsss_rank_insecure")
    return sub, table


def rank_correlations(frame: pd.DataFrame) -> pd.DataFrame:
    """Spearman and Kendall (tau-b) association between PFS and raw scores,
    pooled and per wave."""
    for col in ("year", "pfs", "fsss_raw"):
        if col not in frame.columns:
            raise SchemaError(f"rank correlation input is missing column {col!r}")
    sub = frame.dropna(subset=["pfs", "fsss_raw"])

    def one(scope: str, s: pd.DataFrame) -> dict:
        if len(s) < 2:
            return {"scope": scope, "n": len(s), "spearman": np.nan,
                    "kendall_tau_b": np.nan}
        rho = stats.spearmanr(s["pfs"], s["fsss_raw"]).statistic
        tau = stats.kendalltau(s["pfs"], s["fsss_raw"]).statistic
        return {"scope": scope, "n": len(s), "spearman": float(rho),
                "kendall_tau_b": float(tau)}

    rows = [one("all", sub)]
    for year in sorted(sub["year"].unique()):
        rows.append(one(str(int(year)), sub[sub["year"] == year]))
    return pd.DataFrame(rows)


def group_summary(
    frame: pd.DataFrame,
    group_cols: tuple[str, ...],
    value_col: str = "pfs",
    weight_col: str = "adjusted_weight",
) -> pd.DataFrame:
    """Weighted distribution summaries of a value by group level."""
    rows = []
    for col in group_cols:
        if col not in frame.columns:
            continue
        known = frame.dropna(subset=[col, value_col, weight_col])
        dim_total = known[weight_col].sum()
        for level in sorted(known[col].unique(), key=str):
            sub = known[known[col] == level]
            v = sub[value_col].to_numpy(dtype=float)
            w = sub[weight_col].to_numpy(dtype=float)
            bs = box_stats(v, w)
            rows.append(
                {
                    "group": col,
                    "level": level,
                    "n": len(sub),
                    "weight": float(w.sum()),
                    "share": float(w.sum() / dim_total) if dim_total > 0 else np.nan,
                    "mean": weighted_mean(v, w),
                    "sd": float(np.sqrt(weighted_var(v, w))) if len(sub) > 1 else 0.0,
                    "q1": bs["q1"],
                    "median": bs["median"],
                    "q3": bs["q3"],
                    "whisker_low": bs["whisker_low"],
                    "whisker_high": bs["whisker_high"],
                    "n_outliers": bs["n_outliers"],
                }
            )
    return pd.DataFrame(
        rows,
        columns=["group", "level", "n", "weight", "share", "mean", "sd", "q1",
                 "median", "q3", "whisker_low", "whisker_high", "n_outliers"],
    )


# spec'd operation names for the same computations
def compute_spells(status, calendar, bridge_gaps=False):
    """Alias of find_spells."""
    return find_spells(status, calendar, bridge_gaps)


def newly_still_decomposition(status, calendar):
    """Alias of newly_still."""
    return newly_still(status, calendar)


def crosstab_pfs_fsss(frame: pd.DataFrame) -> pd.DataFrame:
    """Four-cell PFS/FSSS agreement shares, pooled and per year."""
    sub = frame.dropna(subset=["fsss_status"]).copy()
    sub["fsss_insecure"] = sub["fsss_status"] == "insecure"
    pooled = fsss_crosstab(sub)
    pooled.insert(0, "year", "all")
    parts = [pooled]
    for year in sorted(sub["year"].unique()):
        t = fsss_crosstab(sub[sub["year"] == year])
        t.insert(0, "year", str(int(year)))
        parts.append(t)
    return pd.concat(parts, ignore_index=True)


def reclassify_fsss_by_rank(scores, pfs, weights, person_ids, target_share):
    """Alias of reclassify_by_rank."""
    return reclassify_by_rank(scores, pfs, weights, person_ids, target_share)


def rank_correlation(pfs, scores, method: str = "spearman") -> float:
    """Single unweighted rank association coefficient."""
    pfs = np.asarray(pfs, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if method == "spearman":
        return float(stats.spearmanr(pfs, scores).statistic)
    if method == "kendall_tau_b":
        return float(stats.kendalltau(pfs, scores).statistic)
    raise DataError(f"unknown rank correlation method {method!r}")
