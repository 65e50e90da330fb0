import numpy as np
import pandas as pd
import pytest

from pfspanel.errors import JoinError, NumericError
from pfspanel.estimator import (
    GammaParams,
    compute_pfs,
    estimate_moments,
    gamma_survival,
    survival_from_moments,
)
from pfspanel.glm import Covariate, DesignSpec
from pfspanel.waves import unit_calendar


def _toy_panel(n_persons=220, n_waves=6, seed=17):
    """Small panel whose mean and variance are exactly log-linear."""
    rng = np.random.default_rng(seed)
    cal = unit_calendar(n_waves, start=2000)
    rows = []
    for pid in range(n_persons):
        z = float(rng.uniform(0.0, 1.0))
        hh = 1000 + pid
        w_prev = None
        for year in cal.waves:
            if w_prev is None:
                mean = 200.0 * np.exp(0.3 * z)
            else:
                mean = np.exp(4.8 + 0.002 * w_prev - 2e-6 * w_prev**2 + 0.3 * z)
            var = np.exp(2.0 * np.log(mean) - 1.5 + 0.2 * z)
            draw = float(rng.gamma(mean**2 / var, var / mean))
            rows.append(
                {
                    "person_id": pid,
                    "year": year,
                    "household_id": f"{hh}-{year}",
                    "food_exp_pc_month": draw,
                    "z": z,
                    "tfp_cost_pc_real": 180.0,
                    "adjusted_weight": 1.0,
                }
            )
            w_prev = draw
    return pd.DataFrame(rows), cal


SPEC = DesignSpec(
    response="food_exp_pc_month",
    lag_polynomial=2,
    covariates=(Covariate("z"),),
    fixed_effects=(),
    weight_column="adjusted_weight",
)


def test_moments_output_shape_and_exclusions():
    panel, cal = _toy_panel()
    est = estimate_moments(panel, SPEC, cal)
    # first wave of each person lacks a lag
    assert est.exclusions["no_adjacent_lag"] == 220
    assert len(est.table) == len(panel) - 220
    assert (est.table["mean"] > 0).all()
    assert (est.table["variance"] > 0).all()
    assert est.mean_model.converged
    assert est.variance_model is not None and est.variance_model.converged


def test_moments_recover_generating_process_loosely():
    panel, cal = _toy_panel(n_persons=1200, n_waves=8, seed=3)
    est = estimate_moments(panel, SPEC, cal)
    coefs = est.mean_model.coefficients
    assert coefs["z"] == pytest.approx(0.3, abs=0.08)
    vcoefs = est.variance_model.coefficients
    assert vcoefs["z"] == pytest.approx(0.2 + 2 * 0.3, abs=0.4)


def test_constant_response_floors_variance():
    cal = unit_calendar(4, start=2000)
    rows = []
    for pid in range(30):
        for year in cal.waves:
            rows.append(
                {
                    "person_id": pid,
                    "year": year,
                    "household_id": f"h{pid}-{year}",
                    "food_exp_pc_month": 200.0,
                    "z": 0.5,
                    "tfp_cost_pc_real": 150.0,
                    "adjusted_weight": 1.0,
                }
            )
    panel = pd.DataFrame(rows)
    est = estimate_moments(panel, SPEC, cal)
    assert est.degenerate_variance
    assert est.variance_model is None
    assert est.n_floored == len(est.table)
    # floor is max(1e-6, 1e-8 * mean^2) = 4e-4 at mean 200
    assert est.table["variance"].to_numpy() == pytest.approx(4e-4, rel=1e-6)
    assert est.table["variance_floored"].all()
    # certainty above the diet cost, near-zero below it
    pfs = compute_pfs(est.table, panel)
    assert (pfs["pfs"] > 0.9999).all()


def test_pfs_join_and_columns():
    panel, cal = _toy_panel(n_persons=40, n_waves=4)
    est = estimate_moments(panel, SPEC, cal)
    pfs = compute_pfs(est.table, panel)
    assert tuple(pfs.columns) == (
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
    assert len(pfs) == len(est.table)
    assert pfs["pfs"].between(0.0, 1.0).all()
    # spot-check one row against the standalone survival path
    row = pfs.iloc[5]
    assert row["pfs"] == pytest.approx(
        survival_from_moments(row["tfp_cost"], row["mean"], row["variance"]),
        abs=0.0,
    )
    src = panel.set_index(["person_id", "year"]).loc[
        (row["person_id"], row["year"])
    ]
    assert row["nme"] == pytest.approx(
        float(src["food_exp_pc_month"]) / 180.0, rel=1e-12
    )


def test_household_members_share_pfs():
    # two co-residents with identical household data get identical estimates
    cal = unit_calendar(4, start=2000)
    rows = []
    rng = np.random.default_rng(8)
    for hh in range(60):
        z = float(rng.uniform())
        draws = rng.gamma(4.0, 50.0, size=4) + 50.0
        for pid_off in (0, 1):
            for k, year in enumerate(cal.waves):
                rows.append(
                    {
                        "person_id": hh * 2 + pid_off,
                        "year": year,
                        "household_id": f"h{hh}-{year}",
                        "food_exp_pc_month": float(draws[k]),
                        "z": z,
                        "tfp_cost_pc_real": 160.0,
                        "adjusted_weight": 0.5,
                    }
                )
    panel = pd.DataFrame(rows)
    est = estimate_moments(panel, SPEC, cal)
    pfs = compute_pfs(est.table, panel)
    wide = pfs.pivot_table(index="household_id", columns=pfs["person_id"] % 2, values="pfs")
    assert np.allclose(wide[0], wide[1], atol=0.0, rtol=0.0)


def test_tiny_threshold_gives_certainty():
    assert survival_from_moments(1e-12, 300.0, 22500.0) == pytest.approx(1.0, abs=1e-9)


def test_missing_tfp_is_a_join_error():
    panel, cal = _toy_panel(n_persons=10, n_waves=3)
    est = estimate_moments(panel, SPEC, cal)
    broken = panel.copy()
    broken.loc[broken.index[5:], "tfp_cost_pc_real"] = np.nan
    with pytest.raises(JoinError):
        compute_pfs(est.table, broken)


def test_huge_shape_near_mean_raises_numeric():
    # floored variances can push the gamma shape into series-stall territory
    with pytest.raises(NumericError):
        survival_from_moments(299.99, 300.0, 1e-6)
