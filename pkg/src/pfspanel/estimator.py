"""Food-security probabilities from two-step conditional moments.

The construction:

1. fit the conditional mean of monthly per-capita food spending with a
   log-link quasi-MLE on the prior wave's value and its square, household
   covariates, and state/year effects;
2. fit the conditional variance by running the same regression on the
   squared step-1 residuals;
3. match a gamma distribution to the fitted mean/variance pair for each
   person-year and report the probability that spending clears the
   minimum-adequate-diet cost for that household.

Fitted variances can collapse toward zero on degenerate inputs (a panel
with a constant response has identically zero residuals), so variances are
floored at max(1e-6, 1e-8 * mean^2) before the gamma match; floored rows
are flagged, never hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DomainError, JoinError, NumericError
from .glm import DesignSpec, FittedModel, build_design, fit_poisson_qmle, predict
from .waves import WaveCalendar

VARIANCE_ABS_FLOOR = 1e-6
VARIANCE_REL_FLOOR = 1e-8

PFS_COLUMNS = (
    "person_id",
    "year",
    "household_id",
    "pfs",
    "mean",
    "variance",
    "tfp_cost",
    "nme",
    "adjusted_weight",
)


@dataclass(frozen=True)
class GammaParams:
    """Shape/scale parametrization; mean = shape*scale, var = shape*scale^2."""

    shape: float
    scale: float


def gamma_from_moments(mean: float, variance: float) -> GammaParams:
    """Match shape and scale to a positive mean/variance pair."""
    if not (mean > 0.0) or not np.isfinite(mean):
        raise DomainError(f"gamma moment match needs mean > 0, got {mean!r}")
    if not (variance > 0.0) or not np.isfinite(variance):
        raise DomainError(f"gamma moment match needs variance > 0, got {variance!r}")
    return GammaParams(shape=mean * mean / variance, scale=variance / mean)


def gamma_survival(threshold: float, params: GammaParams) -> float:
    """P(X >= threshold) for X ~ Gamma(shape, scale)."""
    from .special import reg_upper_gamma

    if threshold < 0.0 or not np.isfinite(threshold):
        raise DomainError(f"threshold must be a finite non-negative real, got {threshold!r}")
    if threshold == 0.0:
        return 1.0
    return reg_upper_gamma(params.shape, threshold / params.scale)


def survival_from_moments(threshold: float, mean: float, variance: float) -> float:
    return gamma_survival(threshold, gamma_from_moments(mean, variance))


@dataclass
class MomentEstimates:
    """Fitted conditional moments for every design-eligible person-year."""

    table: pd.DataFrame
    mean_model: FittedModel
    variance_model: FittedModel | None
    design_columns: tuple[str, ...]
    exclusions: dict[str, int]
    degenerate_variance: bool
    n_floored: int


def estimate_moments(
    panel: pd.DataFrame,
    spec: DesignSpec,
    calendar: WaveCalendar,
    abs_floor: float = VARIANCE_ABS_FLOOR,
    rel_floor: float = VARIANCE_REL_FLOOR,
) -> MomentEstimates:
    """Two-step quasi-MLE conditional moments on the study panel.

    Rows without an adjacent prior-wave lag (or with missing covariates)
    are excluded from both fits and from the output; the exclusion tally
    says why.  Non-convergence of either fit is an error carrying the fit
    diagnostics, except for the one benign degenerate case: identically
    zero squared residuals, where the variance is simply floored.
    """
    design = build_design(panel, spec, calendar)
    mean_model = fit_poisson_qmle(
        design.X, design.y, design.weights, columns=design.columns
    )
    if not mean_model.converged:
        raise NumericError(
            "conditional mean fit did not converge: "
            f"iterations={mean_model.n_iter}, deviance={mean_model.deviance!r}, "
            f"max_abs_score={mean_model.max_abs_score!r}"
        )
    mu = predict(mean_model, design.X)
    sq_resid = (design.y - mu) ** 2

    # residuals at float-noise scale relative to the response mean exactly
    # fit; fitting a log-link model to them is meaningless, so treat the
    # variance as identically zero and let the floor take over
    scale = max(1.0, float(np.average(np.abs(design.y), weights=design.weights)))
    degenerate = bool(np.max(sq_resid) <= (1e-10 * scale) ** 2)
    if degenerate:
        variance_model = None
        var_pred = np.zeros_like(mu)
    else:
        variance_model = fit_poisson_qmle(
            design.X, sq_resid, design.weights, columns=design.columns
        )
        if not variance_model.converged:
            raise NumericError(
                "conditional variance fit did not converge: "
                f"iterations={variance_model.n_iter}, "
                f"deviance={variance_model.deviance!r}, "
                f"max_abs_score={variance_model.max_abs_score!r}"
            )
        var_pred = predict(variance_model, design.X)

    floor = np.maximum(abs_floor, rel_floor * mu**2)
    floored = var_pred < floor
    variance = np.where(floored, floor, var_pred)

    table = pd.DataFrame(
        {
            "person_id": panel.loc[design.index, "person_id"].to_numpy(),
            "year": panel.loc[design.index, "year"].to_numpy(),
            "mean": mu,
            "variance": variance,
            "variance_floored": floored,
        },
        index=design.index,
    )
    return MomentEstimates(
        table=table,
        mean_model=mean_model,
        variance_model=variance_model,
        design_columns=design.columns,
        exclusions=design.exclusions,
        degenerate_variance=degenerate,
        n_floored=int(floored.sum()),
    )


def compute_pfs(moments: pd.DataFrame, panel: pd.DataFrame) -> pd.DataFrame:
    """Attach gamma survival probabilities at each household's diet cost.

    `moments` must carry person_id/year/mean/variance; `panel` supplies the
    real-dollar diet cost, observed spending, household id, and weight for
    the same person-years.
    """
    needed = [
        "person_id",
        "year",
        "household_id",
        "tfp_cost_pc_real",
        "food_exp_pc_month",
        "adjusted_weight",
    ]
    for col in needed:
        if col not in panel.columns:
            raise JoinError(f"panel is missing column {col!r} needed for the join")
    merged = moments.merge(
        panel[needed], on=["person_id", "year"], how="left", validate="one_to_one"
    )
    if merged["tfp_cost_pc_real"].isna().any():
        bad = merged.loc[merged["tfp_cost_pc_real"].isna(), ["person_id", "year"]]
        raise JoinError(
            f"{len(bad)} moment rows have no matching diet cost; first few:\n"
            f"{bad.head().to_string(index=False)}"
        )
    tfp = merged["tfp_cost_pc_real"].to_numpy(dtype=float)
    if np.any(tfp <= 0):
        raise DomainError("diet costs must be positive")
    mean = merged["mean"].to_numpy(dtype=float)
    var = merged["variance"].to_numpy(dtype=float)
    pfs = np.array(
        [survival_from_moments(t, m, v) for t, m, v in zip(tfp, mean, var)]
    )
    out = pd.DataFrame(
        {
            "person_id": merged["person_id"],
            "year": merged["year"],
            "household_id": merged["household_id"],
            "pfs": pfs,
            "mean": mean,
            "variance": var,
            "tfp_cost": tfp,
            "nme": merged["food_exp_pc_month"].to_numpy(dtype=float) / tfp,
            "adjusted_weight": merged["adjusted_weight"].to_numpy(dtype=float),
        }
    )
    return out[list(PFS_COLUMNS)]
