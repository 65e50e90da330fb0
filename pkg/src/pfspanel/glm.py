"""Design construction and quasi-likelihood fitting.

Two fitters share one backbone: a log-link Poisson-type quasi-MLE solved by
iteratively reweighted least squares, and weighted least squares under the
identity link.  Neither assumes the response is integer valued; only the
conditional mean (and for the quasi fit, the mean-variance proportionality
used as a working assumption) matters.

Columns are standardized internally before fitting so that rank detection
and the IRLS solves stay well conditioned even when raw regressors span
several orders of magnitude (a lagged expenditure and its square, say).
Coefficients are mapped back to the original scale before they are stored.

Collinear columns are removed up front by a pivoted QR factorization with a
1e-10 relative tolerance on the diagonal of R; dropped names are reported on
the fitted model rather than silently absorbed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import ConfigError, DataError, DomainError, JoinError, NumericError
from .waves import WaveCalendar

RANK_RTOL = 1e-10
COEF_TOL = 1e-10
DEV_RTOL = 1e-12
MAX_IRLS_ITER = 100
_ETA_CLIP = 700.0


@dataclass(frozen=True)
class Covariate:
    """One regressor: a numeric column or a categorical one with a reference."""

    column: str
    kind: str = "numeric"
    reference: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("numeric", "categorical"):
            raise ConfigError(f"unknown covariate kind {self.kind!r}")
        if self.kind == "categorical" and not self.reference:
            raise ConfigError(
                f"categorical covariate {self.column!r} must name its reference level"
            )


@dataclass(frozen=True)
class DesignSpec:
    """What goes into the regression design.

    The lag polynomial applies to the response itself: degree 2 means the
    value at the immediately preceding calendar wave and its square enter as
    regressors.  Rows whose preceding wave is missing or not adjacent (the
    1988-1991 hole, biennial spacing) are excluded from the design.
    """

    response: str
    lag_polynomial: int = 2
    covariates: tuple[Covariate, ...] = ()
    fixed_effects: tuple[str, ...] = ("state", "year")
    weight_column: str = "adjusted_weight"

    def __post_init__(self) -> None:
        if self.lag_polynomial < 0:
            raise ConfigError("lag polynomial degree must be >= 0")


@dataclass
class Design:
    """A realized design matrix plus bookkeeping about what was excluded."""

    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    columns: tuple[str, ...]
    index: pd.Index
    exclusions: dict[str, int] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return int(self.X.shape[0])


def lag_column_name(response: str, power: int) -> str:
    return f"lag_{response}" if power == 1 else f"lag_{response}_pow{power}"


def attach_lags(
    df: pd.DataFrame, response: str, calendar: WaveCalendar, degree: int
) -> pd.DataFrame:
    """Return a copy of `df` with lag-power columns for the response.

    The lag source is the person's observation at the immediately preceding
    calendar wave; rows whose preceding wave is not adjacent (or where the
    person was not observed then) get missing lags.
    """
    out = df.copy()
    if degree == 0:
        return out
    lag_src_year = {y: calendar.lag_year(y) for y in out["year"].unique()}
    src = out[["person_id", "year", response]].rename(
        columns={"year": "_lag_source_year", response: "_lag_value"}
    )
    out["_lag_source_year"] = out["year"].map(lag_src_year)
    merged = out.merge(src, on=["person_id", "_lag_source_year"], how="left")
    merged.index = out.index
    lag = merged["_lag_value"]
    for power in range(1, degree + 1):
        out[lag_column_name(response, power)] = lag**power
    return out.drop(columns=["_lag_source_year"])


def build_design(
    df: pd.DataFrame, spec: DesignSpec, calendar: WaveCalendar
) -> Design:
    """Assemble the design matrix for one regression.

    Column order is deterministic: intercept, lag powers, covariates in spec
    order (categorical levels sorted, reference omitted), then fixed-effect
    dummies with the first sorted level as reference.
    """
    required = {"person_id", "year", spec.response, spec.weight_column}
    required.update(c.column for c in spec.covariates)
    required.update(spec.fixed_effects)
    missing_cols = sorted(required - set(df.columns))
    if missing_cols:
        raise DataError(f"design input is missing columns: {missing_cols}")
    if df.duplicated(["person_id", "year"]).any():
        raise DataError("design input has duplicate (person_id, year) rows")

    work = attach_lags(df, spec.response, calendar, spec.lag_polynomial)

    keep = pd.Series(True, index=work.index)
    exclusions: dict[str, int] = {}

    def _mark(mask: pd.Series, reason: str) -> None:
        newly = keep & mask
        n = int(newly.sum())
        if n:
            exclusions[reason] = exclusions.get(reason, 0) + n
        keep.loc[newly] = False

    y_raw = pd.to_numeric(work[spec.response], errors="coerce")
    _mark(y_raw.isna(), "missing_response")
    w_raw = pd.to_numeric(work[spec.weight_column], errors="coerce")
    _mark(w_raw.isna() | (w_raw < 0), "missing_or_negative_weight")
    for power in range(1, spec.lag_polynomial + 1):
        col = lag_column_name(spec.response, power)
        _mark(work[col].isna(), "no_adjacent_lag")
        break  # all powers share the same source; one check is enough
    for cov in spec.covariates:
        vals = work[cov.column]
        if cov.kind == "numeric":
            vals = pd.to_numeric(vals, errors="coerce")
        _mark(vals.isna(), "missing_covariate")
    for fe in spec.fixed_effects:
        _mark(work[fe].isna(), "missing_fixed_effect")

    kept = work.loc[keep]
    if kept.empty:
        raise DataError("no rows remain after design exclusions")

    columns: list[str] = ["intercept"]
    mats: list[np.ndarray] = [np.ones(len(kept))]
    for power in range(1, spec.lag_polynomial + 1):
        col = lag_column_name(spec.response, power)
        columns.append(col)
        mats.append(kept[col].to_numpy(dtype=float))
    for cov in spec.covariates:
        if cov.kind == "numeric":
            columns.append(cov.column)
            mats.append(pd.to_numeric(kept[cov.column]).to_numpy(dtype=float))
        else:
            levels = sorted(str(v) for v in kept[cov.column].unique())
            for level in levels:
                if level == str(cov.reference):
                    continue
                columns.append(f"{cov.column}[{level}]")
                mats.append(
                    (kept[cov.column].astype(str) == level).to_numpy(dtype=float)
                )
    for fe in spec.fixed_effects:
        levels = sorted(kept[fe].unique(), key=lambda v: (str(type(v)), v))
        for level in levels[1:]:
            columns.append(f"{fe}[{level}]")
            mats.append((kept[fe] == level).to_numpy(dtype=float))

    X = np.column_stack(mats)
    y = pd.to_numeric(kept[spec.response]).to_numpy(dtype=float)
    w = pd.to_numeric(kept[spec.weight_column]).to_numpy(dtype=float)
    return Design(
        X=X,
        y=y,
        weights=w,
        columns=tuple(columns),
        index=kept.index,
        exclusions=exclusions,
    )


@dataclass
class FittedModel:
    """Coefficients plus fit diagnostics for one regression."""

    link: str
    columns: tuple[str, ...]
    coefficients: dict[str, float]
    dropped: tuple[str, ...]
    converged: bool
    n_iter: int
    deviance: float
    n_obs: int
    max_abs_score: float
    r_squared: float | None = None

    def coef_vector(self, columns: tuple[str, ...]) -> np.ndarray:
        """Coefficients aligned to `columns` (zeros for dropped names)."""
        return np.array([self.coefficients.get(c, 0.0) for c in columns])

    def to_jsonable(self) -> dict:
        return {
            "link": self.link,
            "columns": list(self.columns),
            "coefficients": self.coefficients,
            "dropped": list(self.dropped),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "deviance": self.deviance,
            "n_obs": self.n_obs,
            "max_abs_score": self.max_abs_score,
            "r_squared": self.r_squared,
        }


def _as_matrix(X, y, weights, columns):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise DataError("X and y row counts differ")
    if weights is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(weights, dtype=float)
    if w.shape != y.shape:
        raise DataError("weights must align with y")
    if np.any(~np.isfinite(X)) or np.any(~np.isfinite(y)) or np.any(~np.isfinite(w)):
        raise DataError("design, response and weights must be finite")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    if w.sum() <= 0:
        raise DataError("total weight must be positive")
    if columns is None:
        columns = tuple(f"x{i}" for i in range(X.shape[1]))
    else:
        columns = tuple(columns)
        if len(columns) != X.shape[1]:
            raise DataError("column names do not match design width")
    return X, y, w, columns


class _Standardizer:
    """Scale columns to unit spread; undo the mapping on coefficients.

    Scaling only (no centering): the rank of the matrix and the fitted
    conditional mean are unchanged, and coefficients map back by a plain
    division, with no bookkeeping tied to an intercept column.
    """

    def __init__(self, X: np.ndarray, fit_rows: np.ndarray):
        sub = X[fit_rows]
        means = sub.mean(axis=0)
        sds = sub.std(axis=0)
        is_const = sds <= 1e-12 * np.maximum(1.0, np.abs(means))
        const_scale = np.where(np.abs(means) > 1e-300, np.abs(means), 1.0)
        self.scale = np.where(is_const, const_scale, sds)
        self.is_const = is_const

    def transform(self, X: np.ndarray) -> np.ndarray:
        return X / self.scale

    def unscale_coefficients(self, beta_std: np.ndarray) -> np.ndarray:
        return beta_std / self.scale


def _detect_rank(Xs: np.ndarray, columns: tuple[str, ...]):
    """Pivoted QR rank detection; returns kept column indices and dropped names."""
    n, p = Xs.shape
    _, R, piv = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        raise DataError("design matrix is entirely zero")
    rank = int(np.sum(diag > RANK_RTOL * diag[0]))
    kept = np.sort(piv[:rank])
    dropped = tuple(columns[i] for i in sorted(piv[rank:]))
    return kept, dropped


def _weighted_lstsq(X: np.ndarray, z: np.ndarray, W: np.ndarray) -> np.ndarray:
    sw = np.sqrt(W)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
    return beta


def _poisson_deviance(y: np.ndarray, mu: np.ndarray, w: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogy = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(w * (ylogy - (y - mu))))


def fit_poisson_qmle(
    X,
    y,
    weights=None,
    columns=None,
    max_iter: int = MAX_IRLS_ITER,
    coef_tol: float = COEF_TOL,
    dev_rtol: float = DEV_RTOL,
) -> FittedModel:
    """Log-link quasi-MLE: solve sum_i w_i (y_i - exp(x_i b)) x_i = 0 by IRLS.

    Convergence: max absolute coefficient step below `coef_tol`, or relative
    deviance change below `dev_rtol`, within `max_iter` sweeps.  The model is
    returned with converged=False (never an exception) when the cap is hit,
    so callers can decide whether the situation is degenerate or fatal.
    """
    X, y, w, columns = _as_matrix(X, y, weights, columns)
    if np.any(y < 0):
        raise DomainError("quasi-Poisson response must be non-negative")

    fit_rows = w > 0
    std = _Standardizer(X, fit_rows)
    Xs_all = std.transform(X)
    Xs = Xs_all[fit_rows]
    yf = y[fit_rows]
    wf = w[fit_rows]

    kept_idx, dropped = _detect_rank(Xs, columns)
    Xk = Xs[:, kept_idx]

    ybar = float(np.average(yf, weights=wf))
    mu = (yf + (ybar if ybar > 0 else 1.0)) / 2.0
    mu = np.maximum(mu, 1e-12)
    eta = np.log(mu)
    beta = np.zeros(Xk.shape[1])
    deviance = _poisson_deviance(yf, mu, wf)
    converged = False
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        Wk = wf * mu
        if not np.any(Wk > 0):
            break
        z = eta + (yf - mu) / mu
        beta_new = _weighted_lstsq(Xk, z, Wk)
        eta = np.clip(Xk @ beta_new, -_ETA_CLIP, _ETA_CLIP)
        mu = np.exp(eta)
        dev_new = _poisson_deviance(yf, mu, wf)
        step = float(np.max(np.abs(beta_new - beta))) if n_iter > 1 else np.inf
        beta = beta_new
        if step < coef_tol or abs(dev_new - deviance) <= dev_rtol * (
            abs(deviance) + 1e-300
        ):
            deviance = dev_new
            converged = True
            break
        deviance = dev_new

    score = Xk.T @ (wf * (yf - mu))
    beta_full_std = np.zeros(len(columns))
    beta_full_std[kept_idx] = beta
    beta_orig = std.unscale_coefficients(beta_full_std)
    coefficients = {
        columns[i]: float(beta_orig[i]) for i in kept_idx
    }
    return FittedModel(
        link="log",
        columns=columns,
        coefficients=coefficients,
        dropped=dropped,
        converged=converged,
        n_iter=n_iter,
        deviance=deviance,
        n_obs=int(fit_rows.sum()),
        max_abs_score=float(np.max(np.abs(score))) if score.size else 0.0,
    )


def fit_ols(X, y, weights=None, columns=None) -> FittedModel:
    """Weighted least squares under the identity link, with weighted R^2."""
    X, y, w, columns = _as_matrix(X, y, weights, columns)
    fit_rows = w > 0
    std = _Standardizer(X, fit_rows)
    Xs_all = std.transform(X)
    Xs = Xs_all[fit_rows]
    yf = y[fit_rows]
    wf = w[fit_rows]

    kept_idx, dropped = _detect_rank(Xs, columns)
    Xk = Xs[:, kept_idx]
    beta = _weighted_lstsq(Xk, yf, wf)
    resid = yf - Xk @ beta
    ssr = float(np.sum(wf * resid**2))

    has_const = bool(std.is_const[kept_idx].any())
    if has_const:
        sst = float(np.sum(wf * (yf - np.average(yf, weights=wf)) ** 2))
    else:
        sst = float(np.sum(wf * yf**2))
    r_squared = 0.0 if sst <= 1e-300 else max(0.0, 1.0 - ssr / sst)

    score = Xk.T @ (wf * resid)
    beta_full_std = np.zeros(len(columns))
    beta_full_std[kept_idx] = beta
    beta_orig = std.unscale_coefficients(beta_full_std)
    coefficients = {columns[i]: float(beta_orig[i]) for i in kept_idx}
    return FittedModel(
        link="identity",
        columns=columns,
        coefficients=coefficients,
        dropped=dropped,
        converged=True,
        n_iter=1,
        deviance=ssr,
        n_obs=int(fit_rows.sum()),
        max_abs_score=float(np.max(np.abs(score))) if score.size else 0.0,
        r_squared=r_squared,
    )


def predict(model: FittedModel, X, columns=None) -> np.ndarray:
    """Evaluate the fitted conditional mean on a design with matching columns."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if columns is None:
        columns = model.columns
    columns = tuple(columns)
    if columns != model.columns:
        raise JoinError(
            "prediction design columns do not match the fitted design: "
            f"{columns} vs {model.columns}"
        )
    if X.shape[1] != len(columns):
        raise DataError("prediction design width does not match column names")
    beta = model.coef_vector(columns)
    eta = X @ beta
    if model.link == "log":
        return np.exp(np.clip(eta, -_ETA_CLIP, _ETA_CLIP))
    return eta


def within_transform(
    df: pd.DataFrame,
    columns: list[str],
    group_col: str = "person_id",
    weight_col: str | None = None,
) -> pd.DataFrame:
    """Subtract weighted group means from the listed columns.

    Used for individual fixed effects: regressors that are constant within a
    group become identically zero and will be rank-dropped downstream.
    """
    out = df.copy()
    for col in columns:
        if col not in out.columns:
            raise DataError(f"within transform: column {col!r} not present")
    if weight_col is None:
        means = out.groupby(group_col)[columns].transform("mean")
        out[columns] = out[columns] - means
        return out
    w = pd.to_numeric(out[weight_col], errors="coerce").fillna(0.0)
    for col in columns:
        v = pd.to_numeric(out[col], errors="coerce")
        num = (v * w).groupby(out[group_col]).transform("sum")
        den = w.groupby(out[group_col]).transform("sum")
        fallback = v.groupby(out[group_col]).transform("mean")
        mean = np.where(den > 0, num / den.replace(0.0, np.nan), fallback)
        out[col] = v - mean
    return out
