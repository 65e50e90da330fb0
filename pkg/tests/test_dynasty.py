"""Sample-selection rules on a small hand-built household scenario."""

import numpy as np
import pandas as pd
import pytest

from pfspanel.dynasty import DynastyResult, build_dynasty, representativeness
from pfspanel.errors import DataError, IntegrityError, SchemaError


def mk(person_id, year, household_id, role, sample_flag, weight, state="NY", **extra):
    row = {
        "person_id": str(person_id),
        "year": int(year),
        "household_id": str(household_id),
        "role": role,
        "sample_flag": sample_flag,
        "individual_weight": weight,
        "state": state,
    }
    row.update(extra)
    return row


def scenario():
    rows = [
        # household A: two qualifying adults plus a nonsample member
        mk(1, 1977, "A", "RP", "original_1968", 30.0),
        mk(2, 1977, "A", "SP", "original_1968", 50.0),
        mk(170, 1977, "A", "OTHER", "nonsample", 0.0),
        mk(1, 1978, "A", "RP", "original_1968", 30.0),
        mk(2, 1978, "A", "SP", "original_1968", 50.0),
        # household B: head steps down in 1979, child 6 takes over
        mk(8, 1977, "B", "RP", "original_1968", 40.0),
        mk(6, 1977, "B", "CH", "lineal_descendant", 10.0),
        mk(37, 1977, "B", "CH", "original_1968", 10.0),
        mk(30, 1977, "B", "OTHER", "lineal_descendant", 5.0),
        mk(3, 1977, "B", "CH", "lineal_descendant", 12.0),
        mk(8, 1978, "B", "RP", "original_1968", 40.0),
        mk(6, 1978, "B", "CH", "lineal_descendant", 10.0),
        mk(6, 1979, "B", "RP", "lineal_descendant", 20.0),
        mk(8, 1979, "B", "OTHER", "original_1968", 40.0),
        # person 3 splits off and heads household C
        mk(3, 1980, "C", "RP", "lineal_descendant", 14.0),
        # person 100 only appears after the window closes
        mk(100, 1983, "D", "RP", "original_1968", 25.0),
    ]
    return pd.DataFrame(rows)


WINDOW = (1977, 1981)


def test_inclusion_and_exclusion_reasons():
    res = build_dynasty(scenario(), window=WINDOW)
    assert res.included_persons == ("1", "2", "3", "6", "8")
    reasons = res.roster.set_index("person_id")["reason"].to_dict()
    assert reasons["170"] == "nonsample"
    assert reasons["37"] == "never_rp_or_sp"
    assert reasons["30"] == "never_rp_or_sp"
    assert reasons["100"] == "not_surveyed_in_window"
    assert set(res.roster["person_id"]) == set(scenario()["person_id"].unique())


def test_childhood_years_of_included_persons_count():
    res = build_dynasty(scenario(), window=WINDOW)
    p3 = res.panel[res.panel["person_id"] == "3"]
    assert sorted(p3["year"]) == [1977, 1980]
    assert list(p3["role"]) == ["CH", "RP"]


def test_adjusted_weight_splits_among_included_coresidents():
    res = build_dynasty(scenario(), window=WINDOW)
    t = res.panel.set_index(["person_id", "year"])
    # household A 1977: nonsample member does not count in the divisor
    assert t.loc[("1", 1977), "adjusted_weight"] == pytest.approx(15.0)
    assert t.loc[("2", 1977), "adjusted_weight"] == pytest.approx(25.0)
    # household B 1977 has three study members (8, 6, 3)
    assert t.loc[("8", 1977), "adjusted_weight"] == pytest.approx(40.0 / 3)
    assert t.loc[("6", 1977), "adjusted_weight"] == pytest.approx(10.0 / 3)
    assert t.loc[("3", 1977), "adjusted_weight"] == pytest.approx(4.0)
    # split-off household C has a single member
    assert t.loc[("3", 1980), "adjusted_weight"] == pytest.approx(14.0)
    # per household-year, adjusted times member count restores the original
    for (_, _), grp in res.panel.groupby(["household_id", "year"]):
        n = len(grp)
        back = grp["adjusted_weight"] * n
        assert np.allclose(back, grp["individual_weight"])


def test_rp_change_flag():
    res = build_dynasty(scenario(), window=WINDOW)
    t = res.panel.set_index(["person_id", "year"])
    assert bool(t.loc[("6", 1977), "rp_changed"]) is False
    assert bool(t.loc[("6", 1978), "rp_changed"]) is False
    assert bool(t.loc[("6", 1979), "rp_changed"]) is True
    assert bool(t.loc[("8", 1979), "rp_changed"]) is True
    assert not t.loc["1"]["rp_changed"].any()


def test_geography_row_drops_and_reentry():
    rows = [
        mk(1, 1977, "A", "RP", "original_1968", 10.0, state="NY"),
        mk(1, 1978, "A", "RP", "original_1968", 10.0, state="HI"),
        mk(1, 1979, "A", "RP", "original_1968", 10.0, state="NY"),
    ]
    res = build_dynasty(pd.DataFrame(rows), window=WINDOW)
    assert sorted(res.panel["year"]) == [1977, 1979]
    assert len(res.dropped) == 1
    assert res.dropped.iloc[0]["year"] == 1978
    assert res.dropped.iloc[0]["reason"] == "outside_continental"


def test_unknown_state_raises():
    rows = [mk(1, 1977, "A", "RP", "original_1968", 10.0, state="XX")]
    with pytest.raises(DataError):
        build_dynasty(pd.DataFrame(rows), window=WINDOW)
    rows = [mk(1, 1977, "A", "RP", "original_1968", 10.0, state=None)]
    with pytest.raises(DataError):
        build_dynasty(pd.DataFrame(rows), window=WINDOW)


def test_selection_monotone_in_window():
    small = build_dynasty(scenario(), window=(1977, 1979))
    big = build_dynasty(scenario(), window=WINDOW)
    assert set(small.included_persons) <= set(big.included_persons)
    # person 3 first heads a household in 1980
    assert "3" not in small.included_persons
    assert "3" in big.included_persons


def test_conflicting_sample_flags_raise():
    rows = [
        mk(1, 1977, "A", "RP", "original_1968", 10.0),
        mk(1, 1978, "A", "RP", "nonsample", 10.0),
    ]
    with pytest.raises(IntegrityError):
        build_dynasty(pd.DataFrame(rows), window=WINDOW)


def test_missing_sample_flag_raises():
    rows = [mk(1, 1977, "A", "RP", None, 10.0)]
    with pytest.raises(DataError):
        build_dynasty(pd.DataFrame(rows), window=WINDOW)


def test_missing_weight_on_study_row_raises():
    rows = [mk(1, 1977, "A", "RP", "original_1968", None)]
    with pytest.raises(DataError):
        build_dynasty(pd.DataFrame(rows), window=WINDOW)


def test_supplemental_samples_excluded():
    rows = [
        mk(1, 1977, "A", "RP", "latino_supplement", 10.0),
        mk(2, 1977, "B", "RP", "immigrant_refresher", 10.0),
        mk(3, 1977, "C", "RP", "original_1968", 10.0),
    ]
    res = build_dynasty(pd.DataFrame(rows), window=WINDOW)
    reasons = res.roster.set_index("person_id")["reason"].to_dict()
    assert reasons["1"] == "supplemental_sample"
    assert reasons["2"] == "supplemental_sample"
    assert res.included_persons == ("3",)


def test_duplicate_rp_in_household_year_raises():
    rows = [
        mk(1, 1977, "A", "RP", "original_1968", 10.0),
        mk(2, 1977, "A", "RP", "original_1968", 10.0),
    ]
    with pytest.raises(IntegrityError):
        build_dynasty(pd.DataFrame(rows), window=WINDOW)


def test_missing_required_column_raises():
    with pytest.raises(SchemaError):
        build_dynasty(pd.DataFrame({"person_id": ["1"]}), window=WINDOW)


def test_representativeness_weighted_shares():
    full = pd.DataFrame(
        [
            mk(1, 1977, "A", "RP", "original_1968", 1.0, indiv_sex="female"),
            mk(2, 1977, "B", "RP", "nonsample", 2.0, indiv_sex="male"),
            mk(3, 1977, "C", "RP", "original_1968", 3.0, indiv_sex="male"),
        ]
    )
    res = build_dynasty(full, window=WINDOW)
    rep = representativeness(full, res.panel, dimensions=("indiv_sex",))
    r = rep.set_index("level")
    # study sample is persons 1 and 3 with weights 1 and 3
    assert r.loc["female", "share_study"] == pytest.approx(0.25)
    assert r.loc["male", "share_study"] == pytest.approx(0.75)
    assert r.loc["female", "share_full"] == pytest.approx(1.0 / 6.0)
    total = rep.groupby("dimension")[["share_full", "share_study"]].sum()
    assert np.allclose(total.to_numpy(), 1.0)


def test_result_is_dataclass_with_sorted_panel():
    res = build_dynasty(scenario(), window=WINDOW)
    assert isinstance(res, DynastyResult)
    keys = list(zip(res.panel["person_id"], res.panel["year"]))
    assert keys == sorted(keys)
