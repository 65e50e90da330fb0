"""Food-security cutoffs on the PFS scale.

Years with an external prevalence target get a cutoff calibrated so that the
weighted share of people with PFS strictly below it matches the target as
closely as the discrete weight distribution allows.  Years without a target
get a cutoff predicted from a regression of calibrated cutoffs on a
macroeconomic indicator (program participation rate by default).  Fixed
percentile rules (5th, 20th) are available as sensitivity modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, SchemaError
from .glm import fit_ols
from .wstats import weighted_quantile, weighted_share

log = logging.getLogger(__name__)

CLAMP_LO = 0.001
CLAMP_HI = 0.999

MACRO_COLUMNS = (
    "year", "income_pc", "snap_rate", "poverty_rate", "unemployment_rate",
    "gdp_growth",
)

VARIANT_PREDICTORS: dict[str, tuple[str, ...]] = {
    "income": ("ln_income_pc",),
    "snap_rate": ("snap_rate",),
    "unemployment": ("unemployment_rate",),
    "gdp_growth": ("gdp_growth",),
    "all": ("ln_income_pc", "snap_rate", "unemployment_rate", "gdp_growth"),
}
DEFAULT_VARIANT = "snap_rate"

CORRELATION_ORDER = (
    "cutoff", "ln_income_pc", "snap_rate", "poverty_rate",
    "unemployment_rate", "gdp_growth",
)

MODES = ("anchored", "snap_model", "p5", "p20")


def calibrate_cutoff(pfs, weights, target: float) -> float:
    """Cutoff whose strictly-below mass matches the target prevalence."""
    arr = np.asarray(pfs, dtype=float)
    if arr.size == 0:
        raise DataError("cannot calibrate a cutoff on an empty year")
    if target <= 0.0:
        return float(np.min(arr))
    if target >= 1.0:
        return float(np.nextafter(np.max(arr), np.inf))
    return weighted_quantile(arr, weights, target)


def classify(pfs, cutoff: float) -> np.ndarray:
    return np.asarray(pfs, dtype=float) < cutoff


def achieved_prevalence(pfs, weights, cutoff: float) -> float:
    return weighted_share(classify(pfs, cutoff), weights)


@dataclass
class ThresholdModel:
    """Linear map from macro indicators to a cutoff."""

    variant: str
    predictors: tuple[str, ...]
    intercept: float
    coefficients: dict[str, float]
    r_squared: float
    n_obs: int

    def predict_raw(self, macro_row) -> float:
        val = self.intercept
        for name in self.predictors:
            x = macro_row[name]
            if x is None or (isinstance(x, float) and np.isnan(x)):
                raise DataError(f"macro indicator {name!r} is missing")
            val += self.coefficients[name] * float(x)
        return float(val)

    def predict(self, macro_row, year: int | None = None) -> float:
        raw = self.predict_raw(macro_row)
        clamped = min(max(raw, CLAMP_LO), CLAMP_HI)
        if clamped != raw:
            log.warning(
                "predicted cutoff %.4f%s outside [%s, %s]; clamped",
                raw, f" for {year}" if year is not None else "", CLAMP_LO, CLAMP_HI,
            )
        return clamped

    def to_jsonable(self) -> dict:
        return {
            "variant": self.variant,
            "predictors": list(self.predictors),
            "intercept": self.intercept,
            "coefficients": dict(self.coefficients),
            "r_squared": self.r_squared,
            "n_obs": self.n_obs,
        }


@dataclass
class CalibrationResult:
    cutoffs: pd.DataFrame      # year, cutoff, provenance, target, achieved_prevalence
    status: pd.DataFrame       # person-year classification
    prevalence: pd.DataFrame   # year, weighted insecure share
    model: ThresholdModel | None
    variants: pd.DataFrame = field(default_factory=pd.DataFrame)
    correlations: pd.DataFrame = field(default_factory=pd.DataFrame)


def _prepare_macro(macro: pd.DataFrame) -> pd.DataFrame:
    missing = [c for c in MACRO_COLUMNS if c not in macro.columns]
    if missing:
        raise SchemaError(f"macro table is missing columns: {missing}")
    m = macro.copy()
    m["year"] = m["year"].astype(int)
    if m.duplicated("year").any():
        raise DataError("macro table has duplicate years")
    income = m["income_pc"].astype(float)
    if (income <= 0).any():
        raise DataError("per-capita income must be positive to take logs")
    m["ln_income_pc"] = np.log(income)
    return m.set_index("year")


def fit_threshold_model(
    anchored: pd.DataFrame, macro: pd.DataFrame, variant: str = DEFAULT_VARIANT
) -> ThresholdModel:
    """Regress calibrated cutoffs on macro indicators over anchored years."""
    if variant not in VARIANT_PREDICTORS:
        raise ConfigError(
            f"unknown threshold model variant {variant!r}; "
            f"choose from {sorted(VARIANT_PREDICTORS)}"
        )
    predictors = VARIANT_PREDICTORS[variant]
    m = _prepare_macro(macro)
    years = anchored["year"].astype(int)
    absent = sorted(set(years) - set(m.index))
    if absent:
        raise DataError(f"macro table lacks anchored years {absent}")
    if len(anchored) < len(predictors) + 1:
        raise DataError(
            f"{len(anchored)} anchored years cannot identify "
            f"{len(predictors) + 1} model parameters"
        )
    X = np.column_stack(
        [np.ones(len(anchored))]
        + [m.loc[years, p].to_numpy(dtype=float) for p in predictors]
    )
    y = anchored["cutoff"].to_numpy(dtype=float)
    fitted = fit_ols(X, y, columns=["intercept", *predictors])
    coef = {p: fitted.coefficients.get(p, 0.0) for p in predictors}
    return ThresholdModel(
        variant=variant,
        predictors=predictors,
        intercept=fitted.coefficients.get("intercept", 0.0),
        coefficients=coef,
        r_squared=fitted.r_squared,
        n_obs=len(anchored),
    )


def _variant_table(anchored: pd.DataFrame, macro: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for variant in VARIANT_PREDICTORS:
        try:
            model = fit_threshold_model(anchored, macro, variant)
        except DataError:
            continue
        row = {"variant": variant, "intercept": model.intercept,
               "r_squared": model.r_squared, "n_obs": model.n_obs}
        for pred in VARIANT_PREDICTORS["all"]:
            row[pred] = model.coefficients.get(pred, np.nan)
        rows.append(row)
    cols = ["variant", "intercept", *VARIANT_PREDICTORS["all"], "r_squared", "n_obs"]
    return pd.DataFrame(rows, columns=cols)


def _correlation_table(anchored: pd.DataFrame, macro: pd.DataFrame) -> pd.DataFrame:
    m = _prepare_macro(macro)
    joined = anchored.merge(
        m.reset_index()[["year", *CORRELATION_ORDER[1:]]], on="year", how="inner"
    )
    sub = joined[list(CORRELATION_ORDER)].astype(float)
    corr = sub.corr()
    out = corr.reset_index().rename(columns={"index": "variable"})
    return out[["variable", *CORRELATION_ORDER]]


def predict_cutoffs(
    model: ThresholdModel, macro: pd.DataFrame, years
) -> pd.DataFrame:
    """Model-extrapolated cutoffs for the given years."""
    m = _prepare_macro(macro)
    rows = []
    for year in sorted(int(y) for y in years):
        if year not in m.index:
            raise DataError(f"macro table lacks year {year}")
        rows.append(
            {"year": year, "cutoff": model.predict(m.loc[year], year),
             "provenance": "model", "target": np.nan}
        )
    return pd.DataFrame(rows, columns=["year", "cutoff", "provenance", "target"])


def percentile_bounds(pfs, weights) -> tuple[float, float]:
    """The 5th and 20th percentile cutoffs for one year's PFS values."""
    return (
        calibrate_cutoff(pfs, weights, 0.05),
        calibrate_cutoff(pfs, weights, 0.20),
    )


def calibrate_panel(
    pfs_table: pd.DataFrame,
    targets: pd.DataFrame,
    macro: pd.DataFrame | None = None,
    mode: str = "anchored",
    variant: str = DEFAULT_VARIANT,
) -> CalibrationResult:
    """Year-by-year cutoffs and person-year classification.

    `targets` has columns year and target.  `macro` is required whenever any
    year's cutoff must be predicted rather than anchored.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown threshold mode {mode!r}; choose from {MODES}")
    for col in ("person_id", "year", "pfs", "adjusted_weight"):
        if col not in pfs_table.columns:
            raise SchemaError(f"pfs table is missing column {col!r}")
    years = sorted(int(y) for y in pfs_table["year"].unique())
    target_by_year = {}
    if targets is not None and len(targets):
        target_by_year = {
            int(r.year): float(r.target) for r in targets.itertuples()
        }

    def year_slice(year):
        sub = pfs_table[pfs_table["year"] == year]
        return sub["pfs"].to_numpy(dtype=float), sub["adjusted_weight"].to_numpy(dtype=float)

    anchored_rows = []
    for year in years:
        if year in target_by_year:
            pfs, w = year_slice(year)
            cut = calibrate_cutoff(pfs, w, target_by_year[year])
            anchored_rows.append(
                {"year": year, "cutoff": cut, "target": target_by_year[year]}
            )
    anchored = pd.DataFrame(anchored_rows, columns=["year", "cutoff", "target"])

    model: ThresholdModel | None = None
    cut_rows = []

    if mode in ("p5", "p20"):
        pct = 0.05 if mode == "p5" else 0.20
        for year in years:
            pfs, w = year_slice(year)
            cut_rows.append(
                {"year": year, "cutoff": calibrate_cutoff(pfs, w, pct),
                 "provenance": "percentile", "target": pct}
            )
    elif mode == "anchored":
        if not len(anchored):
            raise ConfigError(
                "anchored mode needs at least one year with a prevalence target"
            )
        unanchored = [y for y in years if y not in target_by_year]
        if unanchored:
            if macro is None:
                raise DataError(
                    f"years {unanchored} have no prevalence target and no "
                    "macro table was given to extrapolate from"
                )
            model = fit_threshold_model(anchored, macro, variant)
            m = _prepare_macro(macro)
        for year in years:
            if year in target_by_year:
                row = anchored[anchored["year"] == year].iloc[0]
                cut_rows.append(
                    {"year": year, "cutoff": float(row["cutoff"]),
                     "provenance": "anchored", "target": float(row["target"])}
                )
            else:
                if year not in m.index:
                    raise DataError(f"macro table lacks year {year}")
                cut_rows.append(
                    {"year": year, "cutoff": model.predict(m.loc[year], year),
                     "provenance": "model", "target": np.nan}
                )
    else:  # snap_model: the fitted rule everywhere, anchored years included
        if not len(anchored):
            raise ConfigError(
                "snap_model mode needs anchored years to fit the rule on"
            )
        if macro is None:
            raise DataError("snap_model mode requires a macro table")
        model = fit_threshold_model(anchored, macro, variant)
        m = _prepare_macro(macro)
        for year in years:
            if year not in m.index:
                raise DataError(f"macro table lacks year {year}")
            cut_rows.append(
                {"year": year, "cutoff": model.predict(m.loc[year], year),
                 "provenance": "model",
                 "target": target_by_year.get(year, np.nan)}
            )

    cutoffs = pd.DataFrame(cut_rows, columns=["year", "cutoff", "provenance", "target"])
    ach = []
    for row in cutoffs.itertuples():
        pfs, w = year_slice(row.year)
        ach.append(achieved_prevalence(pfs, w, row.cutoff))
    cutoffs["achieved_prevalence"] = ach

    status = pfs_table.merge(cutoffs[["year", "cutoff"]], on="year", how="left")
    status["insecure"] = status["pfs"] < status["cutoff"]
    keep = [c for c in ("person_id", "year", "household_id", "pfs", "cutoff",
                        "insecure", "adjusted_weight") if c in status.columns]
    status = status[keep].sort_values(["person_id", "year"], kind="mergesort")
    status = status.reset_index(drop=True)

    prev_rows = []
    for year in years:
        sub = status[status["year"] == year]
        prev_rows.append(
            {"year": year,
             "prevalence": weighted_share(sub["insecure"].to_numpy(),
                                          sub["adjusted_weight"].to_numpy()),
             "n": len(sub)}
        )
    prevalence = pd.DataFrame(prev_rows, columns=["year", "prevalence", "n"])

    variants = pd.DataFrame()
    correlations = pd.DataFrame()
    if macro is not None and len(anchored) >= 2:
        variants = _variant_table(anchored, macro)
        correlations = _correlation_table(anchored, macro)

    return CalibrationResult(
        cutoffs=cutoffs, status=status, prevalence=prevalence, model=model,
        variants=variants, correlations=correlations,
    )
