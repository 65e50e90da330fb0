"""Study-sample construction from the harmonized person-year table.

A person enters the study if they descend from the original 1968 sampling
frame (flagged `original_1968` or `lineal_descendant`) and they were ever a
reference person or spouse/partner during the analysis window.  Once a
person qualifies, every survey year of theirs inside the window counts,
including childhood years in a parent's household.  Person-years observed
outside the continental United States plus DC are dropped row-wise.

Household food spending is shared, so a household observed through several
qualifying members would otherwise be counted several times.  The adjusted
weight divides each member's individual weight by the number of co-resident
study members that year.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError, IntegrityError, SchemaError
from .ingest import CONTINENTAL, NON_CONTINENTAL, TERRITORIES

DEFAULT_WINDOW = (1977, 2019)
SAMPLE_ELIGIBLE = frozenset({"original_1968", "lineal_descendant"})
SUPPLEMENTAL = frozenset({"latino_supplement", "immigrant_refresher"})
ANALYSIS_ROLES = frozenset({"RP", "SP"})

_REQUIRED = (
    "person_id", "year", "household_id", "role", "sample_flag",
    "individual_weight", "state",
)

ROSTER_COLUMNS = (
    "person_id", "sample_flag", "included", "reason", "n_waves_window",
    "ever_rp_or_sp",
)


@dataclass
class DynastyResult:
    panel: pd.DataFrame
    roster: pd.DataFrame
    dropped: pd.DataFrame  # person-years removed row-wise, with reason
    window: tuple[int, int]

    @property
    def included_persons(self) -> tuple[str, ...]:
        inc = self.roster.loc[self.roster["included"], "person_id"]
        return tuple(sorted(inc))


def _person_flags(table: pd.DataFrame) -> dict[str, str]:
    flags: dict[str, str] = {}
    bad_missing = []
    for pid, grp in table.groupby("person_id", sort=False):
        vals = grp["sample_flag"].dropna().unique()
        if len(vals) == 0:
            bad_missing.append(pid)
        elif len(vals) > 1:
            raise IntegrityError(
                f"person {pid} carries conflicting sample flags {sorted(vals)}"
            )
        else:
            flags[pid] = vals[0]
    if bad_missing:
        raise DataError(
            f"{len(bad_missing)} persons have no sample flag in any wave, "
            f"first few: {sorted(bad_missing)[:5]}"
        )
    return flags


def build_dynasty(
    table: pd.DataFrame, window: tuple[int, int] = DEFAULT_WINDOW
) -> DynastyResult:
    """Select study persons, drop off-geography rows, and reweight."""
    missing = [c for c in _REQUIRED if c not in table.columns]
    if missing:
        raise SchemaError(f"harmonized table is missing columns: {missing}")
    lo, hi = window
    if lo > hi:
        raise DataError(f"analysis window {window} is reversed")

    flags = _person_flags(table)
    in_window = table[(table["year"] >= lo) & (table["year"] <= hi)]
    surveyed = set(in_window["person_id"])
    rp_sp = set(
        in_window.loc[in_window["role"].isin(ANALYSIS_ROLES), "person_id"]
    )

    roster_rows = []
    included: set[str] = set()
    waves_per = in_window.groupby("person_id")["year"].nunique()
    for pid in sorted(flags):
        flag = flags[pid]
        if flag == "nonsample":
            reason = "nonsample"
        elif flag in SUPPLEMENTAL:
            reason = "supplemental_sample"
        elif pid not in surveyed:
            reason = "not_surveyed_in_window"
        elif pid not in rp_sp:
            reason = "never_rp_or_sp"
        else:
            reason = "included"
            included.add(pid)
        roster_rows.append(
            {
                "person_id": pid,
                "sample_flag": flag,
                "included": reason == "included",
                "reason": reason,
                "n_waves_window": int(waves_per.get(pid, 0)),
                "ever_rp_or_sp": pid in rp_sp,
            }
        )
    roster = pd.DataFrame(roster_rows, columns=list(ROSTER_COLUMNS))

    panel = in_window[in_window["person_id"].isin(included)].copy()

    # geography: continental states plus DC only; codes we cannot place are
    # a data problem, not a filter outcome
    state = panel["state"]
    unknown = panel[state.isna() | ~state.isin(CONTINENTAL | NON_CONTINENTAL | TERRITORIES)]
    if len(unknown):
        sample = unknown[["person_id", "year", "state"]].head(10)
        raise DataError(
            f"{len(unknown)} study person-years have unplaceable state codes:\n"
            f"{sample.to_string(index=False)}"
        )
    off = ~state.isin(CONTINENTAL)
    dropped = panel.loc[off, ["person_id", "year", "state"]].copy()
    dropped["reason"] = "outside_continental"
    panel = panel.loc[~off].copy()

    bad_weight = panel["individual_weight"].isna()
    if bad_weight.any():
        sample = panel.loc[bad_weight, ["person_id", "year"]].head(10)
        raise DataError(
            f"{int(bad_weight.sum())} study person-years lack an individual "
            f"weight:\n{sample.to_string(index=False)}"
        )

    n_members = panel.groupby(["household_id", "year"])["person_id"].transform("size")
    panel["adjusted_weight"] = panel["individual_weight"] / n_members

    panel = panel.sort_values(["person_id", "year"], kind="mergesort").reset_index(
        drop=True
    )
    panel["rp_changed"] = _rp_change_flags(table, panel)

    dropped = dropped.sort_values(["person_id", "year"], kind="mergesort").reset_index(
        drop=True
    )
    return DynastyResult(panel=panel, roster=roster, dropped=dropped, window=window)


def _rp_change_flags(full_table: pd.DataFrame, panel: pd.DataFrame) -> np.ndarray:
    """True where the household head differs from the one at the person's
    previous observed wave; first observations are False."""
    rp_rows = full_table[full_table["role"] == "RP"]
    if rp_rows.duplicated(["household_id", "year"]).any():
        dup = rp_rows[rp_rows.duplicated(["household_id", "year"], keep=False)]
        raise IntegrityError(
            "households with more than one reference person in a year:\n"
            f"{dup[['household_id', 'year', 'person_id']].head(10).to_string(index=False)}"
        )
    rp_of = {
        (hh, yr): pid
        for hh, yr, pid in zip(
            rp_rows["household_id"], rp_rows["year"], rp_rows["person_id"]
        )
    }
    out = np.zeros(len(panel), dtype=bool)
    prev_rp: dict[str, str | None] = {}
    seen: set[str] = set()
    # panel is sorted by person then year, so a single pass suffices
    for i, (pid, hh, yr) in enumerate(
        zip(panel["person_id"], panel["household_id"], panel["year"])
    ):
        rp_now = rp_of.get((hh, yr))
        if pid in seen:
            before = prev_rp.get(pid)
            out[i] = (
                before is not None and rp_now is not None and before != rp_now
            )
        seen.add(pid)
        prev_rp[pid] = rp_now
    return out


# spec'd operation names exposing the pipeline's internal steps separately
def select_study_individuals(
    table: pd.DataFrame, window: tuple[int, int] = DEFAULT_WINDOW
) -> DynastyResult:
    """Alias of build_dynasty."""
    return build_dynasty(table, window)


def apply_geography_filter(
    person_years: pd.DataFrame,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Split person-years into (continental-US rows, dropped rows)."""
    state = person_years["state"]
    unknown = person_years[
        state.isna() | ~state.isin(CONTINENTAL | NON_CONTINENTAL | TERRITORIES)
    ]
    if len(unknown):
        sample = unknown[["person_id", "year", "state"]].head(10)
        raise DataError(
            f"{len(unknown)} person-years have unplaceable state codes:\n"
            f"{sample.to_string(index=False)}"
        )
    off = ~state.isin(CONTINENTAL)
    dropped = person_years.loc[off, ["person_id", "year", "state"]].copy()
    dropped["reason"] = "outside_continental"
    return person_years.loc[~off].copy(), dropped.reset_index(drop=True)


def adjust_weights(person_years: pd.DataFrame) -> pd.DataFrame:
    """Divide individual weights by household-year co-resident counts."""
    out = person_years.copy()
    n = out.groupby(["household_id", "year"])["person_id"].transform("size")
    out["adjusted_weight"] = out["individual_weight"] / n
    return out


def flag_rp_changes(
    person_years: pd.DataFrame, full_table: pd.DataFrame
) -> pd.DataFrame:
    """Attach the head-of-household change flag to sorted person-years."""
    out = person_years.sort_values(["person_id", "year"], kind="mergesort")
    out = out.reset_index(drop=True)
    out["rp_changed"] = _rp_change_flags(full_table, out)
    return out


def representativeness_report(full_table, panel, dimensions=None):
    """Alias of representativeness."""
    if dimensions is None:
        return representativeness(full_table, panel)
    return representativeness(full_table, panel, dimensions)


def representativeness(
    full_table: pd.DataFrame,
    panel: pd.DataFrame,
    dimensions: tuple[str, ...] = (
        "indiv_sex",
        "indiv_race_binary",
        "indiv_education_cat",
        "region",
    ),
) -> pd.DataFrame:
    """Weighted category shares, study sample next to the full table.

    Shares use individual weights and are taken over person-years with a
    known value of the dimension, so each dimension's shares sum to one on
    both sides.
    """
    rows = []
    for dim in dimensions:
        if dim not in full_table.columns or dim not in panel.columns:
            continue
        levels = sorted(
            set(full_table[dim].dropna().unique())
            | set(panel[dim].dropna().unique()),
            key=str,
        )
        for frame_name, frame in (("full", full_table), ("study", panel)):
            known = frame.dropna(subset=[dim, "individual_weight"])
            total = known["individual_weight"].sum()
            for level in levels:
                mass = known.loc[known[dim] == level, "individual_weight"].sum()
                share = float(mass / total) if total > 0 else np.nan
                rows.append(
                    {"dimension": dim, "level": level, "sample": frame_name,
                     "share": share}
                )
    long = pd.DataFrame(rows, columns=["dimension", "level", "sample", "share"])
    wide = long.pivot_table(
        index=["dimension", "level"], columns="sample", values="share",
        aggfunc="first",
    ).reset_index()
    wide.columns.name = None
    for col in ("full", "study"):
        if col not in wide.columns:
            wide[col] = np.nan
    wide = wide.rename(columns={"full": "share_full", "study": "share_study"})
    return wide[["dimension", "level", "share_full", "share_study"]]
