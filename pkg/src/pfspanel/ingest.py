"""Raw panel ingestion and harmonization.

The raw CSV is one row per person per survey year, with assistance-program
and food-expenditure fields whose encoding changed across three survey
regimes:

* R1 (1977-1993): program participation recorded as a count of recipient
  household members; food reported as annual at-home+delivered and annual
  eaten-out totals.
* R2 (1994-1997 and 2009-2019): participation is a yes/no item; food
  reported per component with a recall-period code.
* R3 (1999-2007): participation recorded as twelve monthly flags; the flag
  for the month immediately before the interview month decides status.

Harmonization converts everything to monthly per-capita spending in real
(January 2019) dollars, resolves benefits under their recall codes, imputes
individual race from the first survey round where it was collected, assigns
children 15 and younger the reference person's educational attainment, and
maps states to census-style regions.  Every excluded row carries a reason;
parsed row counts always equal harmonized plus excluded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    HarmonizationError,
    IntegrityError,
    RangeError,
    SchemaError,
)

log = logging.getLogger(__name__)

# ------------------------------------------------------------------ schema

CANONICAL_COLUMNS = (
    "person_id",
    "year",
    "household_id",
    "role",
    "interview_month",
    "individual_weight",
    "state",
    "sample_flag",
    "snap_raw",
    "snap_benefit_raw",
    "benefit_recall",
    "food_home_delivered_annual",
    "food_out_annual",
    "food_home_amount",
    "food_home_recall",
    "food_extra_amount",
    "food_extra_recall",
    "food_delivered_amount",
    "food_delivered_recall",
    "food_out_amount",
    "food_out_recall",
    "family_size",
    "n_children",
    "rp_age",
    "rp_sex",
    "rp_race",
    "rp_marital",
    "rp_education_grades",
    "rp_college_degree",
    "rp_employment",
    "rp_disability",
    "indiv_sex",
    "indiv_age",
    "indiv_race",
    "indiv_education_grades",
    "indiv_college_degree",
    "income_annual",
    "tfp_cost_pc",
    "fsss_raw",
    "fsss_status",
)

# columns that may be absent from the file entirely (treated as all-missing)
OPTIONAL_COLUMNS = frozenset(
    {
        "indiv_sex",
        "indiv_age",
        "indiv_race",
        "indiv_education_grades",
        "indiv_college_degree",
        "fsss_raw",
        "fsss_status",
    }
)

HARMONIZED_COLUMNS = (
    "person_id",
    "year",
    "household_id",
    "role",
    "interview_month",
    "individual_weight",
    "state",
    "region",
    "sample_flag",
    "snap_status",
    "snap_benefit_month",
    "benefit_imputed",
    "food_exp_pc_month",
    "income_pc",
    "tfp_cost_pc_real",
    "family_size",
    "n_children",
    "child_ratio",
    "rp_age",
    "rp_female",
    "rp_race_binary",
    "rp_married",
    "rp_education_cat",
    "rp_employed",
    "rp_disabled",
    "indiv_sex",
    "indiv_age",
    "indiv_race_binary",
    "indiv_education_cat",
    "fsss_raw",
    "fsss_status",
)

SAMPLE_FLAGS = ("original_1968", "lineal_descendant", "nonsample",
                "latino_supplement", "immigrant_refresher")
ROLES = ("RP", "SP", "CH", "OTHER")
RECALLS = ("week", "two_week", "month", "year", "other", "missing")

_RECALL_TOKENS = {
    "week": "week",
    "weekly": "week",
    "two_week": "two_week",
    "twoweek": "two_week",
    "biweekly": "two_week",
    "two weeks": "two_week",
    "month": "month",
    "monthly": "month",
    "year": "year",
    "annual": "year",
    "yearly": "year",
    "other": "other",
    "dk": "other",
    "dont_know": "other",
    "don't know": "other",
    "na": "other",
    "n/a": "other",
    "refused": "other",
    "": "missing",
}

_REFUSAL_TOKENS = {"refused", "dk", "dont_know", "don't know", "na", "n/a", "other"}

RECALL_TO_MONTHLY = {
    "week": 52.0 / 12.0,
    "two_week": 26.0 / 12.0,
    "month": 1.0,
    "year": 1.0 / 12.0,
}

CONTINENTAL = frozenset(
    """AL AR AZ CA CO CT DC DE FL GA IA ID IL IN KS KY LA MA MD ME MI MN MO
    MS MT NC ND NE NH NJ NM NV NY OH OK OR PA RI SC SD TN TX UT VA VT WA WI
    WV WY""".split()
)
NON_CONTINENTAL = frozenset({"AK", "HI"})
TERRITORIES = frozenset({"PR", "GU", "VI", "AS", "MP"})

REGION_BY_STATE = {}
for _st in "ME NH VT NY MA CT RI".split():
    REGION_BY_STATE[_st] = "northeast"
for _st in "PA NJ DC DE MD VA".split():
    REGION_BY_STATE[_st] = "mid_atlantic"
# KY is absent from the published state-to-region listing; grouped with its
# census-South neighbors here
for _st in "NC SC GA TN WV FL AL AR MS LA TX KY".split():
    REGION_BY_STATE[_st] = "south"
for _st in "OH IN MI IL MN WI IA MO".split():
    REGION_BY_STATE[_st] = "midwest"
for _st in "KS NE ND SD OK AZ CO ID MT NV NM UT WY OR WA CA".split():
    REGION_BY_STATE[_st] = "west"


@dataclass(slots=True)
class RawRecord:
    """One person-year row in canonical raw form; None marks missing."""

    person_id: str
    year: int
    household_id: str
    role: str
    interview_month: int | None
    individual_weight: float | None
    state: str | None
    sample_flag: str | None
    snap_raw: str | None
    snap_benefit_raw: float | None
    benefit_recall: str
    food_home_delivered_annual: float | None
    food_out_annual: float | None
    food_home_amount: float | None
    food_home_recall: str
    food_extra_amount: float | None
    food_extra_recall: str
    food_delivered_amount: float | None
    food_delivered_recall: str
    food_out_amount: float | None
    food_out_recall: str
    family_size: float | None
    n_children: float | None
    rp_age: float | None
    rp_sex: str | None
    rp_race: str | None
    rp_marital: str | None
    rp_education_grades: float | None
    rp_college_degree: str | None
    rp_employment: str | None
    rp_disability: str | None
    indiv_sex: str | None
    indiv_age: float | None
    indiv_race: str | None
    indiv_education_grades: float | None
    indiv_college_degree: str | None
    income_annual: float | None
    tfp_cost_pc: float | None
    fsss_raw: float | None
    fsss_status: str | None


@dataclass
class ParseResult:
    records: list[RawRecord]
    warnings: list[dict]
    n_rows: int


# --------------------------------------------------------------- CPI table


class CpiTable:
    """Monthly price index anchored so January 2019 is the base period."""

    BASE_YEAR = 2019
    BASE_MONTH = 1

    def __init__(self, frame: pd.DataFrame):
        for col in ("year", "month", "index"):
            if col not in frame.columns:
                raise SchemaError(f"price index table is missing column {col!r}")
        f = frame.copy()
        f["year"] = f["year"].astype(int)
        f["month"] = f["month"].astype(int)
        f["index"] = f["index"].astype(float)
        if (f["index"] <= 0).any():
            raise DataError("price index values must be positive")
        if f.duplicated(["year", "month"]).any():
            raise IntegrityError("price index table has duplicate year/month rows")
        self._monthly = {
            (int(r.year), int(r.month)): float(r.index) for r in f.itertuples()
        }
        self._annual = f.groupby("year")["index"].mean().to_dict()
        key = (self.BASE_YEAR, self.BASE_MONTH)
        if key not in self._monthly:
            raise SchemaError(
                "price index table must include the January 2019 base period"
            )
        self._base = self._monthly[key]

    @classmethod
    def from_csv(cls, path: str | Path) -> "CpiTable":
        return cls(pd.read_csv(path))

    def years(self) -> tuple[int, ...]:
        return tuple(sorted(self._annual))

    def index_for(self, year: int, month: int | None = None) -> float:
        if year not in self._annual:
            raise RangeError(
                f"price index table does not cover year {year}; coverage is "
                f"{min(self._annual)}-{max(self._annual)}"
            )
        if month is not None and (year, month) in self._monthly:
            return self._monthly[(year, month)]
        return float(self._annual[year])

    def deflate(self, amount: float, year: int, month: int | None = None) -> float:
        """Express a nominal amount in January-2019 dollars."""
        return amount * self._base / self.index_for(year, month)


def deflate(
    amount: float, year: int, month: int | None, cpi: CpiTable
) -> float:
    """Functional form of CpiTable.deflate."""
    return cpi.deflate(amount, year, month)


# ------------------------------------------------------------------ parsing


def _norm(s: str) -> str:
    return s.strip().lower().replace("-", "_")


def _parse_recall(cell: str, warn, row: int, col: str) -> str:
    token = _norm(cell)
    if token in _RECALL_TOKENS:
        return _RECALL_TOKENS[token]
    warn(row, col, cell, "unrecognized recall period; treated as 'other'")
    return "other"


def parse_panel_csv(
    source: str | Path | pd.DataFrame, schema: dict[str, str] | None = None
) -> ParseResult:
    """Read the raw panel into typed records.

    `schema` maps canonical column names to the file's actual headers for
    files that use different labels.  Malformed numeric cells become missing
    values with one warning each; recognized refusal tokens in the benefit
    column are not warnings, they are data (recall becomes 'other').
    """
    if isinstance(source, pd.DataFrame):
        df = source.astype(str)
        df = df.replace({"nan": "", "None": "", "<NA>": ""})
    else:
        df = pd.read_csv(source, dtype=str, keep_default_na=False)
    schema = schema or {}
    rename = {}
    missing = []
    for canon in CANONICAL_COLUMNS:
        actual = schema.get(canon, canon)
        if actual in df.columns:
            rename[actual] = canon
        elif canon not in OPTIONAL_COLUMNS:
            missing.append(canon if actual == canon else f"{canon} (mapped to {actual!r})")
    if missing:
        raise SchemaError(f"raw panel is missing required columns: {missing}")
    df = df.rename(columns=rename)
    for canon in CANONICAL_COLUMNS:
        if canon not in df.columns:
            df[canon] = ""

    warnings: list[dict] = []

    def warn(row: int, col: str, value: str, message: str) -> None:
        warnings.append({"row": int(row), "column": col, "value": value,
                         "message": message})

    n = len(df)
    cols: dict[str, list] = {}

    def numeric(col: str, lo=None, hi=None, integer=False) -> list:
        raw = df[col].to_numpy()
        out = []
        for i, cell in enumerate(raw):
            s = cell.strip()
            if s == "":
                out.append(None)
                continue
            try:
                v = float(s)
            except ValueError:
                warn(i, col, cell, "malformed numeric cell; treated as missing")
                out.append(None)
                continue
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                warn(i, col, cell, "value out of range; treated as missing")
                out.append(None)
                continue
            out.append(float(int(v)) if integer and v == int(v) else v)
        return out

    def token(col: str, allowed: tuple[str, ...], fallback=None) -> list:
        raw = df[col].to_numpy()
        out = []
        lowered = {a.lower(): a for a in allowed}
        for i, cell in enumerate(raw):
            s = _norm(cell)
            if s == "":
                out.append(None)
            elif s in lowered:
                out.append(lowered[s])
            else:
                warn(i, col, cell, f"unrecognized value; expected one of {allowed}")
                out.append(fallback)
        return out

    # keys must parse; a row without a usable person/year cannot be keyed
    pid_raw = df["person_id"].to_numpy()
    year_raw = df["year"].to_numpy()
    pids, years = [], []
    for i in range(n):
        pid = pid_raw[i].strip()
        try:
            year = int(float(year_raw[i]))
        except ValueError:
            raise IntegrityError(
                f"row {i}: year {year_raw[i]!r} is not an integer"
            ) from None
        if pid == "":
            raise IntegrityError(f"row {i}: empty person_id")
        pids.append(pid)
        years.append(year)
    dup = pd.DataFrame({"p": pids, "y": years}).duplicated()
    if dup.any():
        k = int(np.argmax(dup.to_numpy()))
        raise IntegrityError(
            f"duplicate (person_id, year) key at row {k}: ({pids[k]}, {years[k]})"
        )

    cols["person_id"] = pids
    cols["year"] = years
    cols["household_id"] = [c.strip() for c in df["household_id"].to_numpy()]
    cols["role"] = token("role", ROLES, fallback="OTHER")
    cols["interview_month"] = numeric("interview_month", lo=1, hi=12, integer=True)
    cols["individual_weight"] = numeric("individual_weight", lo=0.0)
    cols["state"] = [
        (c.strip().upper() or None) for c in df["state"].to_numpy()
    ]
    cols["sample_flag"] = token("sample_flag", SAMPLE_FLAGS)
    cols["snap_raw"] = [(c.strip() or None) for c in df["snap_raw"].to_numpy()]

    # the benefit amount column may hold refusal tokens instead of numbers;
    # those force the recall period to 'other' (amount unknown, imputed later)
    benefit_vals: list[float | None] = []
    recall_cells = df["benefit_recall"].to_numpy()
    benefit_recall: list[str] = [
        _parse_recall(recall_cells[i], warn, i, "benefit_recall") for i in range(n)
    ]
    for i, cell in enumerate(df["snap_benefit_raw"].to_numpy()):
        s = cell.strip()
        if s == "":
            benefit_vals.append(None)
            continue
        try:
            benefit_vals.append(float(s))
        except ValueError:
            if _norm(s) in _REFUSAL_TOKENS:
                benefit_vals.append(None)
                benefit_recall[i] = "other"
            else:
                warn(i, "snap_benefit_raw", cell,
                     "malformed numeric cell; treated as missing")
                benefit_vals.append(None)
    cols["snap_benefit_raw"] = benefit_vals
    cols["benefit_recall"] = benefit_recall

    for col in ("food_home_delivered_annual", "food_out_annual",
                "food_home_amount", "food_extra_amount",
                "food_delivered_amount", "food_out_amount"):
        cols[col] = numeric(col)
    for col in ("food_home_recall", "food_extra_recall",
                "food_delivered_recall", "food_out_recall"):
        cells = df[col].to_numpy()
        cols[col] = [_parse_recall(cells[i], warn, i, col) for i in range(n)]

    cols["family_size"] = numeric("family_size", lo=1, integer=True)
    cols["n_children"] = numeric("n_children", lo=0, integer=True)
    cols["rp_age"] = numeric("rp_age", lo=0, hi=130)
    cols["rp_sex"] = token("rp_sex", ("male", "female"))
    cols["rp_race"] = [( _norm(c) or None) for c in df["rp_race"].to_numpy()]
    cols["rp_marital"] = token(
        "rp_marital", ("married", "single", "widowed", "divorced", "separated")
    )
    cols["rp_education_grades"] = numeric("rp_education_grades", lo=0, hi=17)
    cols["rp_college_degree"] = token("rp_college_degree", ("yes", "no"))
    cols["rp_employment"] = token(
        "rp_employment",
        ("working", "temp_laid_off", "looking", "retired", "perm_disabled",
         "housekeeping", "student", "other"),
    )
    cols["rp_disability"] = token(
        "rp_disability",
        ("none", "work_type_limited", "work_amount_limited", "both"),
    )
    cols["indiv_sex"] = token("indiv_sex", ("male", "female"))
    cols["indiv_age"] = numeric("indiv_age", lo=0, hi=130)
    cols["indiv_race"] = [(_norm(c) or None) for c in df["indiv_race"].to_numpy()]
    cols["indiv_education_grades"] = numeric("indiv_education_grades", lo=0, hi=17)
    cols["indiv_college_degree"] = token("indiv_college_degree", ("yes", "no"))
    cols["income_annual"] = numeric("income_annual")
    cols["tfp_cost_pc"] = numeric("tfp_cost_pc")
    cols["fsss_raw"] = numeric("fsss_raw", lo=0, hi=18, integer=True)
    cols["fsss_status"] = token("fsss_status", ("secure", "insecure"))

    names = [f.name for f in fields(RawRecord)]
    records = [
        RawRecord(**{name: cols[name][i] for name in names}) for i in range(n)
    ]
    return ParseResult(records=records, warnings=warnings, n_rows=n)


# ------------------------------------------------------ record harmonization


def snap_regime(year: int) -> str:
    """Which participation encoding applies in a survey year."""
    if year <= 1993:
        return "R1"
    if 1999 <= year <= 2007:
        return "R3"
    return "R2"


def harmonize_snap_status(rec: RawRecord) -> bool:
    """Resolve program participation under the year's encoding regime."""
    regime = snap_regime(rec.year)
    raw = rec.snap_raw
    if regime == "R1":
        if raw is None:
            return False
        try:
            return float(raw) >= 1.0
        except ValueError:
            return False
    if regime == "R2":
        return raw is not None and _norm(raw) == "yes"
    # R3: twelve monthly flags, keyed to the month before the interview
    if rec.interview_month is None:
        raise HarmonizationError(
            f"person {rec.person_id} year {rec.year}: monthly participation "
            "flags cannot be located without an interview month"
        )
    flags = (raw or "").strip()
    if len(flags) != 12 or any(ch not in "01" for ch in flags):
        raise HarmonizationError(
            f"person {rec.person_id} year {rec.year}: malformed monthly "
            f"participation flags {raw!r}"
        )
    idx = (int(rec.interview_month) - 2) % 12  # January interviews look at December
    return flags[idx] == "1"


def harmonize_benefit(
    rec: RawRecord, snap_status: bool, year_mean_monthly: float | None
) -> tuple[float | None, bool]:
    """Monthly benefit amount; (value, was_imputed).

    Non-participants get a missing benefit no matter what the raw cell says.
    Unknown recall periods (refusals and the like) take the same-year mean
    monthly benefit among participants with interpretable answers.
    """
    if not snap_status:
        return None, False
    value = rec.snap_benefit_raw
    if value is not None and value < 0:
        raise DataError(
            f"person {rec.person_id} year {rec.year}: negative benefit {value!r}"
        )
    recall = rec.benefit_recall
    if recall in RECALL_TO_MONTHLY and value is not None:
        return value * RECALL_TO_MONTHLY[recall], False
    return (year_mean_monthly, True) if year_mean_monthly is not None else (None, True)


def _convert_component(
    amount: float | None,
    recall: str,
    year_mean: float | None,
    label: str,
    rec: RawRecord,
) -> float | None:
    if amount is not None and amount < 0:
        raise DataError(
            f"person {rec.person_id} year {rec.year}: negative {label} "
            f"expenditure {amount!r}"
        )
    if amount is None:
        return None
    if recall in RECALL_TO_MONTHLY:
        return amount * RECALL_TO_MONTHLY[recall]
    # recall unknown: the reported number is uninterpretable; same-year mean
    return year_mean


def harmonize_food_expenditure(
    rec: RawRecord,
    benefit_month: float | None,
    component_year_means: dict[str, float] | None = None,
) -> tuple[float | None, str | None]:
    """Monthly household food spending in nominal dollars.

    Returns (value, exclusion_reason); exactly one side is set.  Before 1994
    the components are annual totals divided by twelve plus the benefit; from
    1994 on, participants report spending beyond their benefit, so the
    at-home piece is benefit + extra, while non-participants report at-home
    spending directly.  Delivered and eaten-out components are always added.
    """
    means = component_year_means or {}
    if rec.year <= 1993:
        hd, out = rec.food_home_delivered_annual, rec.food_out_annual
        for v, label in ((hd, "at-home/delivered"), (out, "eaten-out")):
            if v is not None and v < 0:
                raise DataError(
                    f"person {rec.person_id} year {rec.year}: negative {label} "
                    f"expenditure {v!r}"
                )
        if hd is None and out is None:
            return None, "unusable_food"
        total = (hd or 0.0) / 12.0 + (out or 0.0) / 12.0 + (benefit_month or 0.0)
        return total, None

    delivered = _convert_component(
        rec.food_delivered_amount, rec.food_delivered_recall,
        means.get("delivered"), "delivered", rec,
    )
    out = _convert_component(
        rec.food_out_amount, rec.food_out_recall, means.get("out"), "eaten-out", rec
    )
    if benefit_month is not None:
        at_home_extra = _convert_component(
            rec.food_extra_amount, rec.food_extra_recall,
            means.get("extra"), "extra at-home", rec,
        )
        pieces = [benefit_month, at_home_extra, delivered, out]
    else:
        at_home = _convert_component(
            rec.food_home_amount, rec.food_home_recall,
            means.get("home"), "at-home", rec,
        )
        pieces = [at_home, delivered, out]
    if all(p is None for p in pieces):
        return None, "unusable_food"
    return float(sum(p for p in pieces if p is not None)), None


def education_category(
    grades: float | None, college_degree: str | None
) -> str | None:
    """Completed-grades plus degree-flag mapping to four attainment levels."""
    if college_degree == "yes":
        return "college"
    if grades is None:
        return None
    if grades < 12:
        return "less_hs"
    if grades == 12:
        return "hs"
    return "some_college"


def race_binary(race: str | None) -> str | None:
    if race is None:
        return None
    return "white" if race == "white" else "nonwhite"


def impute_race_education(records: list[RawRecord]) -> None:
    """Fill one person's missing race in place from its first-collected value.

    `records` must all belong to the same person.  Education is not filled
    across waves here; the child rule (15 and younger take the reference
    person's attainment) is applied later because it needs same-record RP
    fields, not the person's history.
    """
    ordered = sorted(records, key=lambda r: r.year)
    first_race = next((r.indiv_race for r in ordered if r.indiv_race is not None), None)
    if first_race is not None:
        for r in ordered:
            if r.indiv_race is None:
                r.indiv_race = first_race


def region_of_state(state: str | None) -> str | None:
    if state is None:
        return None
    return REGION_BY_STATE.get(state)


# -------------------------------------------------------- table harmonization


@dataclass
class HarmonizeResult:
    table: pd.DataFrame
    exclusions: pd.DataFrame  # person_id, year, reason
    warnings: list[dict] = field(default_factory=list)

    @property
    def n_excluded(self) -> int:
        return len(self.exclusions)


def harmonize_table(parsed: ParseResult, cpi: CpiTable) -> HarmonizeResult:
    """Harmonize every parsed record; account for every row.

    Two-pass: first resolve participation and collect same-year means for
    benefit/component imputation, then convert, deflate, and assemble the
    harmonized table in its fixed column order.
    """
    records = parsed.records
    warnings: list[dict] = list(parsed.warnings)

    by_person: dict[str, list[RawRecord]] = {}
    for rec in records:
        by_person.setdefault(rec.person_id, []).append(rec)
    for person_records in by_person.values():
        impute_race_education(person_records)

    status: list[bool] = [harmonize_snap_status(rec) for rec in records]

    # same-year means for imputation, from interpretable answers only
    benefit_lists: dict[int, list[float]] = {}
    comp_lists: dict[tuple[int, str], list[float]] = {}
    for rec, st in zip(records, status):
        if st and rec.snap_benefit_raw is not None and rec.benefit_recall in RECALL_TO_MONTHLY:
            if rec.snap_benefit_raw < 0:
                raise DataError(
                    f"person {rec.person_id} year {rec.year}: negative benefit"
                )
            benefit_lists.setdefault(rec.year, []).append(
                rec.snap_benefit_raw * RECALL_TO_MONTHLY[rec.benefit_recall]
            )
        if rec.year >= 1994:
            for label, amount, recall in (
                ("home", rec.food_home_amount, rec.food_home_recall),
                ("extra", rec.food_extra_amount, rec.food_extra_recall),
                ("delivered", rec.food_delivered_amount, rec.food_delivered_recall),
                ("out", rec.food_out_amount, rec.food_out_recall),
            ):
                if amount is not None and amount >= 0 and recall in RECALL_TO_MONTHLY:
                    comp_lists.setdefault((rec.year, label), []).append(
                        amount * RECALL_TO_MONTHLY[recall]
                    )
    benefit_year_mean = {y: float(np.mean(v)) for y, v in benefit_lists.items()}
    comp_year_mean = {k: float(np.mean(v)) for k, v in comp_lists.items()}

    rows: list[dict] = []
    excluded: list[dict] = []

    for i, (rec, st) in enumerate(zip(records, status)):
        if rec.family_size is None or rec.family_size < 1:
            excluded.append(
                {"person_id": rec.person_id, "year": rec.year,
                 "reason": "missing_family_size"}
            )
            continue
        benefit, benefit_imputed = harmonize_benefit(
            rec, st, benefit_year_mean.get(rec.year)
        )
        means = {
            label: comp_year_mean.get((rec.year, label))
            for label in ("home", "extra", "delivered", "out")
        }
        food_hh_month, reason = harmonize_food_expenditure(rec, benefit, means)
        if reason is not None:
            excluded.append(
                {"person_id": rec.person_id, "year": rec.year, "reason": reason}
            )
            continue

        month = int(rec.interview_month) if rec.interview_month is not None else None
        food_pc_real = cpi.deflate(food_hh_month / rec.family_size, rec.year, month)
        benefit_real = (
            cpi.deflate(benefit, rec.year, month) if benefit is not None else None
        )
        income_pc_real = (
            cpi.deflate(rec.income_annual / rec.family_size, rec.year, month)
            if rec.income_annual is not None
            else None
        )
        tfp_real = (
            cpi.deflate(rec.tfp_cost_pc, rec.year, month)
            if rec.tfp_cost_pc is not None and rec.tfp_cost_pc > 0
            else None
        )

        n_children = rec.n_children
        if n_children is not None and n_children > rec.family_size:
            warnings.append(
                {"row": i, "column": "n_children", "value": str(n_children),
                 "message": "more children than household members; cleared"}
            )
            n_children = None
        child_ratio = (
            n_children / rec.family_size if n_children is not None else None
        )

        if rec.indiv_age is not None and rec.indiv_age <= 15:
            indiv_edu = education_category(
                rec.rp_education_grades, rec.rp_college_degree
            )
        elif rec.indiv_age is None and rec.role == "CH":
            indiv_edu = education_category(
                rec.rp_education_grades, rec.rp_college_degree
            )
        else:
            indiv_edu = education_category(
                rec.indiv_education_grades, rec.indiv_college_degree
            )

        rows.append(
            {
                "person_id": rec.person_id,
                "year": rec.year,
                "household_id": rec.household_id,
                "role": rec.role,
                "interview_month": month,
                "individual_weight": rec.individual_weight,
                "state": rec.state,
                "region": region_of_state(rec.state),
                "sample_flag": rec.sample_flag,
                "snap_status": bool(st),
                "snap_benefit_month": benefit_real,
                "benefit_imputed": bool(benefit_imputed),
                "food_exp_pc_month": food_pc_real,
                "income_pc": income_pc_real,
                "tfp_cost_pc_real": tfp_real,
                "family_size": rec.family_size,
                "n_children": n_children,
                "child_ratio": child_ratio,
                "rp_age": rec.rp_age,
                "rp_female": None if rec.rp_sex is None else float(rec.rp_sex == "female"),
                "rp_race_binary": race_binary(rec.rp_race),
                "rp_married": None if rec.rp_marital is None else float(rec.rp_marital == "married"),
                "rp_education_cat": education_category(
                    rec.rp_education_grades, rec.rp_college_degree
                ),
                "rp_employed": None if rec.rp_employment is None else float(
                    rec.rp_employment in ("working", "temp_laid_off")
                ),
                "rp_disabled": None if rec.rp_disability is None else float(
                    rec.rp_disability in ("work_type_limited", "work_amount_limited", "both")
                ),
                "indiv_sex": rec.indiv_sex,
                "indiv_age": rec.indiv_age,
                "indiv_race_binary": race_binary(rec.indiv_race),
                "indiv_education_cat": indiv_edu,
                "fsss_raw": rec.fsss_raw,
                "fsss_status": rec.fsss_status,
            }
        )

    table = pd.DataFrame(rows, columns=list(HARMONIZED_COLUMNS))
    exclusions = pd.DataFrame(excluded, columns=["person_id", "year", "reason"])
    if len(table) + len(exclusions) != parsed.n_rows:
        raise IntegrityError(
            "row accounting broke: "
            f"{len(table)} harmonized + {len(exclusions)} excluded != "
            f"{parsed.n_rows} parsed"
        )
    return HarmonizeResult(table=table, exclusions=exclusions, warnings=warnings)
