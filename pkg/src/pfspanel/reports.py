"""Report-stage tables: summaries, model coefficients, and the PFS-income
association under progressively stricter controls."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError
from .glm import fit_ols, within_transform
from .wstats import weighted_mean

ASSOCIATION_SPECS = ("pooled", "pooled_controls", "within", "within_controls")


def _dummies(frame: pd.DataFrame, col: str, prefix: str) -> pd.DataFrame:
    """Sorted-level dummies with the first level as reference."""
    levels = sorted(x for x in frame[col].dropna().unique())
    out = pd.DataFrame(index=frame.index)
    for lv in levels[1:]:
        out[f"{prefix}[{lv}]"] = (frame[col] == lv).astype(float)
    return out


def _design_frame(panel: pd.DataFrame, controls: bool) -> pd.DataFrame:
    cols = {
        "intercept": np.ones(len(panel)),
        "ln_income_pc": panel["ln_income_pc"].to_numpy(dtype=float),
        "has_children": panel["has_children"].to_numpy(dtype=float),
    }
    X = pd.DataFrame(cols, index=panel.index)
    if controls:
        age = panel["age_c"].to_numpy(dtype=float)
        X["age_c"] = age
        X["age_c_sq"] = age * age
        X = pd.concat([X, _dummies(panel, "rp_education_cat", "edu")], axis=1)
    X = pd.concat(
        [X, _dummies(panel, "state", "state"), _dummies(panel, "year", "year")],
        axis=1,
    )
    return X


def emit_association_report(panel: pd.DataFrame) -> tuple[pd.DataFrame, dict]:
    """PFS on log income and covariates, four ways.

    Columns: pooled OLS, pooled with individual controls, person-demeaned
    (within), and within with controls.  State and year dummies are present
    in every specification; in the within columns, regressors that are
    constant within person collapse to zero and are reported as dropped
    rather than given a coefficient.
    """
    needed = ("person_id", "pfs", "ln_income_pc", "has_children", "age_c",
              "rp_education_cat", "state", "year", "adjusted_weight")
    missing = [c for c in needed if c not in panel.columns]
    if missing:
        raise SchemaError(f"association input is missing columns: {missing}")
    sub = panel.dropna(
        subset=["pfs", "ln_income_pc", "has_children", "age_c"]
    ).copy()
    if not len(sub):
        raise DataError("association report has no usable rows")
    w = sub["adjusted_weight"].to_numpy(dtype=float)
    y = sub["pfs"].to_numpy(dtype=float)

    results: dict[str, dict] = {}
    dropped: dict[str, list[str]] = {}
    for name in ASSOCIATION_SPECS:
        controls = name.endswith("controls")
        X = _design_frame(sub, controls)
        if name.startswith("within"):
            work = X.copy()
            work["_y"] = y
            work["person_id"] = sub["person_id"].to_numpy()
            work["_w"] = w
            demeaned = within_transform(
                work, [c for c in X.columns] + ["_y"],
                group_col="person_id", weight_col="_w",
            )
            fit = fit_ols(
                demeaned[X.columns].to_numpy(dtype=float),
                demeaned["_y"].to_numpy(dtype=float),
                weights=w,
                columns=tuple(X.columns),
            )
        else:
            fit = fit_ols(
                X.to_numpy(dtype=float), y, weights=w, columns=tuple(X.columns)
            )
        results[name] = dict(fit.coefficients)
        results[name]["r_squared"] = fit.r_squared
        results[name]["n_obs"] = fit.n_obs
        dropped[name] = list(fit.dropped)

    terms: list[str] = []
    for name in ASSOCIATION_SPECS:
        for t in results[name]:
            if t not in terms and not t.startswith(("year[", "state[")):
                terms.append(t)
    # FE dummies stay out of the table; they are controls, not findings
    rows = []
    for t in terms:
        row = {"term": t}
        for name in ASSOCIATION_SPECS:
            row[name] = results[name].get(t, np.nan)
        rows.append(row)
    table = pd.DataFrame(rows, columns=["term", *ASSOCIATION_SPECS])
    return table, dropped


def sample_summary(study: pd.DataFrame, pfs: pd.DataFrame | None) -> pd.DataFrame:
    """Person-year composition by decade: counts and weighted means."""
    for col in ("year", "adjusted_weight", "food_exp_pc_month", "income_pc"):
        if col not in study.columns:
            raise SchemaError(f"summary input is missing column {col!r}")
    tab = study.copy()
    if pfs is not None and len(pfs):
        tab = tab.merge(
            pfs[["person_id", "year", "pfs"]], on=["person_id", "year"], how="left"
        )
    else:
        tab["pfs"] = np.nan
    tab["decade"] = (tab["year"] // 10 * 10).astype(int).astype(str) + "s"

    def block(label: str, g: pd.DataFrame) -> dict:
        w = g["adjusted_weight"].to_numpy(dtype=float)
        row = {
            "period": label,
            "person_years": int(len(g)),
            "persons": int(g["person_id"].nunique()),
            "households": int(g["household_id"].nunique()),
        }
        for col in ("food_exp_pc_month", "income_pc", "family_size",
                    "n_children", "rp_age", "pfs"):
            vals = g[col].to_numpy(dtype=float)
            ok = ~np.isnan(vals)
            row[f"mean_{col}"] = (
                float(weighted_mean(vals[ok], w[ok])) if ok.any() else np.nan
            )
        return row

    rows = [block("all", tab)]
    for dec, g in tab.groupby("decade", sort=True):
        rows.append(block(str(dec), g))
    return pd.DataFrame(rows)


def model_coefficient_table(mean_model: dict, variance_model: dict | None) -> pd.DataFrame:
    """Flatten fitted-model JSON payloads into one long coefficient table."""
    rows = []
    for eq, payload in (("mean", mean_model), ("variance", variance_model)):
        if payload is None:
            continue
        for term in payload["columns"]:
            if term in payload["coefficients"]:
                rows.append(
                    {"equation": eq, "term": term,
                     "estimate": payload["coefficients"][term]}
                )
        for term in payload.get("dropped", ()):
            rows.append({"equation": eq, "term": term, "estimate": np.nan})
        rows.append(
            {"equation": eq, "term": "(n_obs)", "estimate": payload["n_obs"]}
        )
    return pd.DataFrame(rows, columns=["equation", "term", "estimate"])
