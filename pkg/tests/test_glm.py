import math

import numpy as np
import pandas as pd
import pytest
from scipy.optimize import minimize

from pfspanel.errors import DataError, DomainError, JoinError
from pfspanel.glm import (
    Covariate,
    DesignSpec,
    build_design,
    fit_ols,
    fit_poisson_qmle,
    predict,
    within_transform,
)
from pfspanel.waves import default_calendar, unit_calendar


def nm_qmle(X, y, w):
    """Direct quasi-likelihood maximization, sharing no code with IRLS."""

    def negll(b):
        eta = np.clip(X @ b, -700, 700)
        return -np.sum(w * (y * eta - np.exp(eta)))

    res = minimize(
        negll,
        np.zeros(X.shape[1]),
        method="Nelder-Mead",
        options=dict(xatol=1e-12, fatol=1e-13, maxiter=100_000, maxfev=100_000),
    )
    res = minimize(
        negll,
        res.x,
        method="Nelder-Mead",
        options=dict(xatol=1e-13, fatol=1e-14, maxiter=100_000, maxfev=100_000),
    )
    return res.x


# ---------------------------------------------------------------- poisson


def test_intercept_only_log_of_mean():
    X = np.ones((3, 1))
    y = np.array([1.0, 2.0, 3.0])
    model = fit_poisson_qmle(X, y, columns=("intercept",))
    assert model.converged
    assert model.coefficients["intercept"] == pytest.approx(math.log(2.0), abs=1e-10)


def test_intercept_only_weighted():
    X = np.ones((3, 1))
    y = np.array([1.0, 2.0, 3.0])
    w = np.array([1.0, 1.0, 2.0])
    model = fit_poisson_qmle(X, y, w, columns=("intercept",))
    assert model.coefficients["intercept"] == pytest.approx(math.log(2.25), abs=1e-10)


def test_exact_loglinear_data():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    X = np.column_stack([np.ones(4), x])
    y = np.exp(0.5 * x)
    model = fit_poisson_qmle(X, y, columns=("intercept", "x"))
    assert model.coefficients["x"] == pytest.approx(0.5, abs=1e-8)
    assert model.coefficients["intercept"] == pytest.approx(0.0, abs=1e-8)
    assert model.deviance == pytest.approx(0.0, abs=1e-10)


def test_quasi_score_equation_holds():
    rng = np.random.default_rng(42)
    n = 60
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(size=n)])
    beta = np.array([0.3, 0.4, -0.6])
    y = rng.poisson(np.exp(X @ beta)).astype(float)
    w = rng.uniform(0.5, 2.0, size=n)
    model = fit_poisson_qmle(X, y, w, columns=("c", "a", "b"))
    mu = predict(model, X, ("c", "a", "b"))
    score = X.T @ (w * (y - mu))
    assert np.max(np.abs(score)) < 1e-8


def test_weight_scaling_changes_nothing():
    rng = np.random.default_rng(1)
    n = 40
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = rng.poisson(np.exp(0.2 + 0.3 * X[:, 1])).astype(float)
    w = rng.uniform(0.5, 2.0, size=n)
    m1 = fit_poisson_qmle(X, y, w)
    m2 = fit_poisson_qmle(X, y, 3.7 * w)
    for k in m1.coefficients:
        assert m1.coefficients[k] == pytest.approx(m2.coefficients[k], abs=1e-9)


def test_zero_weight_rows_ignored():
    X = np.ones((4, 1))
    y = np.array([1.0, 2.0, 3.0, 1000.0])
    w = np.array([1.0, 1.0, 1.0, 0.0])
    model = fit_poisson_qmle(X, y, w)
    assert model.coefficients["x0"] == pytest.approx(math.log(2.0), abs=1e-10)


def test_collinear_column_dropped_and_reported():
    rng = np.random.default_rng(9)
    n = 50
    female = (rng.uniform(size=n) < 0.5).astype(float)
    X = np.column_stack([np.ones(n), female, 1.0 - female, rng.normal(size=n)])
    y = rng.poisson(np.exp(0.1 + 0.2 * female)).astype(float) + 0.1
    model = fit_poisson_qmle(X, y, columns=("intercept", "female", "male", "z"))
    assert len(model.dropped) == 1
    assert set(model.dropped) <= {"intercept", "female", "male"}
    mu = predict(model, X, ("intercept", "female", "male", "z"))
    score = X[:, [0, 1, 3]].T @ (y - mu)
    assert np.max(np.abs(score)) < 1e-7


def test_negative_response_rejected():
    with pytest.raises(DomainError):
        fit_poisson_qmle(np.ones((2, 1)), np.array([1.0, -0.5]))


def test_matches_direct_search_small_instances():
    rng = np.random.default_rng(123)
    for _ in range(8):
        n = int(rng.integers(10, 50))
        p = int(rng.integers(1, 3))
        X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p)])
        beta = rng.uniform(-0.8, 0.8, size=p + 1)
        y = rng.gamma(shape=3.0, scale=np.exp(X @ beta) / 3.0)
        w = rng.uniform(0.5, 2.0, size=n)
        model = fit_poisson_qmle(X, y, w)
        direct = nm_qmle(X, y, w)
        mine = model.coef_vector(model.columns)
        assert np.max(np.abs(mine - direct)) < 1e-6


# -------------------------------------------------------------------- ols


def test_ols_exact_line():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    X = np.column_stack([np.ones(4), x])
    y = 1.0 + 2.0 * x
    model = fit_ols(X, y, columns=("intercept", "x"))
    assert model.coefficients["intercept"] == pytest.approx(1.0, abs=1e-12)
    assert model.coefficients["x"] == pytest.approx(2.0, abs=1e-12)
    assert model.r_squared == pytest.approx(1.0, abs=1e-12)


def test_ols_orthogonal_regressor_gets_zero():
    x = np.array([-1.0, 0.0, 1.0])
    X = np.column_stack([np.ones(3), x])
    y = np.array([2.0, 5.0, 2.0])  # symmetric around x=0
    model = fit_ols(X, y, columns=("intercept", "x"))
    assert model.coefficients["x"] == pytest.approx(0.0, abs=1e-12)


def test_ols_constant_response_r2_zero():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    y = np.full(5, 3.0)
    model = fit_ols(X, y, columns=("intercept", "x"))
    assert model.coefficients["x"] == pytest.approx(0.0, abs=1e-12)
    assert model.r_squared == 0.0


def test_ols_weighted_mean_reproduction():
    rng = np.random.default_rng(2)
    n = 30
    y = rng.normal(size=n)
    w = rng.uniform(0.1, 5.0, size=n)
    model = fit_ols(np.ones((n, 1)), y, w)
    assert model.coefficients["x0"] == pytest.approx(
        np.average(y, weights=w), rel=1e-10
    )


# ------------------------------------------------------------------ within


def test_within_transform_examples():
    df = pd.DataFrame({"person_id": [1, 1], "v": [1.0, 3.0], "w": [1.0, 1.0]})
    out = within_transform(df, ["v"], weight_col="w")
    assert list(out["v"]) == [-1.0, 1.0]

    df = pd.DataFrame({"person_id": [1, 1], "v": [1.0, 4.0], "w": [1.0, 2.0]})
    out = within_transform(df, ["v"], weight_col="w")
    assert list(out["v"]) == pytest.approx([-2.0, 1.0])


def test_within_constant_column_becomes_zero():
    df = pd.DataFrame(
        {"person_id": [1, 1, 2, 2], "v": [5.0, 5.0, 7.0, 7.0], "w": [1.0] * 4}
    )
    out = within_transform(df, ["v"], weight_col="w")
    assert np.allclose(out["v"], 0.0)


# ------------------------------------------------------------------ design


def _panel_df(rows):
    return pd.DataFrame(
        rows,
        columns=["person_id", "year", "food", "inc", "state", "adjusted_weight"],
    )


def test_design_lags_respect_calendar():
    cal = default_calendar()
    df = _panel_df(
        [
            (1, 1995, 100.0, 1.0, "MI", 1.0),
            (1, 1996, 110.0, 1.0, "MI", 1.0),
            (2, 1987, 90.0, 1.0, "MI", 1.0),
            (2, 1992, 95.0, 1.0, "MI", 1.0),
            (3, 1997, 80.0, 1.0, "MI", 1.0),
            (3, 1999, 85.0, 1.0, "MI", 1.0),
        ]
    )
    spec = DesignSpec(
        response="food",
        lag_polynomial=2,
        covariates=(Covariate("inc"),),
        fixed_effects=(),
        weight_column="adjusted_weight",
    )
    design = build_design(df, spec, cal)
    kept = df.loc[design.index]
    assert set(zip(kept["person_id"], kept["year"])) == {(1, 1996), (3, 1999)}
    # person 2's 1992 row straddles the hole: no usable lag
    assert design.exclusions["no_adjacent_lag"] == 4
    i = design.columns.index("lag_food")
    j = design.columns.index("lag_food_pow2")
    row = design.X[list(design.index).index(kept.index[0])]
    assert row[i] == pytest.approx(100.0)
    assert row[j] == pytest.approx(10000.0)


def test_design_column_order_and_dummies():
    cal = unit_calendar(3, start=2000)
    df = pd.DataFrame(
        {
            "person_id": [1, 1, 1, 2, 2, 2],
            "year": [2000, 2001, 2002] * 2,
            "food": [10.0, 11.0, 12.0, 9.0, 8.0, 7.0],
            "edu": ["hs", "hs", "hs", "college", "college", "college"],
            "state": ["MI", "MI", "MI", "OH", "OH", "OH"],
            "adjusted_weight": [1.0] * 6,
        }
    )
    spec = DesignSpec(
        response="food",
        lag_polynomial=1,
        covariates=(Covariate("edu", "categorical", reference="hs"),),
        fixed_effects=("state", "year"),
        weight_column="adjusted_weight",
    )
    design = build_design(df, spec, cal)
    # only 2001/2002 survive the lag exclusion; first level is the reference
    assert design.columns == (
        "intercept",
        "lag_food",
        "edu[college]",
        "state[OH]",
        "year[2002]",
    )
    assert design.n_rows == 4  # first wave of each person has no lag


def test_design_missing_covariate_rows_counted():
    cal = unit_calendar(3, start=2000)
    df = pd.DataFrame(
        {
            "person_id": [1, 1, 1],
            "year": [2000, 2001, 2002],
            "food": [10.0, 11.0, 12.0],
            "inc": [1.0, None, 2.0],
            "adjusted_weight": [1.0] * 3,
        }
    )
    spec = DesignSpec(
        response="food",
        lag_polynomial=1,
        covariates=(Covariate("inc"),),
        fixed_effects=(),
    )
    design = build_design(df, spec, cal)
    assert design.n_rows == 1
    assert design.exclusions["missing_covariate"] == 1
    assert design.exclusions["no_adjacent_lag"] == 1


def test_design_duplicate_person_year_rejected():
    cal = unit_calendar(2)
    df = pd.DataFrame(
        {
            "person_id": [1, 1],
            "year": [2000, 2000],
            "food": [1.0, 2.0],
            "adjusted_weight": [1.0, 1.0],
        }
    )
    spec = DesignSpec(response="food", lag_polynomial=0, fixed_effects=())
    with pytest.raises(DataError):
        build_design(df, spec, cal)


def test_predict_requires_matching_columns():
    X = np.ones((3, 1))
    model = fit_poisson_qmle(X, np.array([1.0, 2.0, 3.0]), columns=("intercept",))
    with pytest.raises(JoinError):
        predict(model, X, ("other",))


def test_categorical_requires_reference():
    with pytest.raises(Exception):
        Covariate("edu", "categorical", reference=None)
