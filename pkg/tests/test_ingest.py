"""Harmonization tests with hand-computed expected values."""

import numpy as np
import pandas as pd
import pytest

from pfspanel.errors import (
    DataError,
    HarmonizationError,
    IntegrityError,
    RangeError,
    SchemaError,
)
from pfspanel.ingest import (
    RECALL_TO_MONTHLY,
    CpiTable,
    education_category,
    harmonize_table,
    parse_panel_csv,
    region_of_state,
)

_DEFAULTS = {
    "person_id": "1",
    "year": "1995",
    "household_id": "10",
    "role": "RP",
    "interview_month": "3",
    "individual_weight": "1.0",
    "state": "NY",
    "sample_flag": "original_1968",
    "snap_raw": "no",
    "snap_benefit_raw": "",
    "benefit_recall": "",
    "food_home_delivered_annual": "",
    "food_out_annual": "",
    "food_home_amount": "300",
    "food_home_recall": "month",
    "food_extra_amount": "",
    "food_extra_recall": "",
    "food_delivered_amount": "0",
    "food_delivered_recall": "month",
    "food_out_amount": "60",
    "food_out_recall": "month",
    "family_size": "3",
    "n_children": "1",
    "rp_age": "40",
    "rp_sex": "female",
    "rp_race": "white",
    "rp_marital": "married",
    "rp_education_grades": "12",
    "rp_college_degree": "no",
    "rp_employment": "working",
    "rp_disability": "none",
    "indiv_sex": "female",
    "indiv_age": "40",
    "indiv_race": "white",
    "indiv_education_grades": "12",
    "indiv_college_degree": "no",
    "income_annual": "36000",
    "tfp_cost_pc": "150",
    "fsss_raw": "",
    "fsss_status": "",
}


def raw_row(**overrides):
    row = dict(_DEFAULTS)
    row.update({k: str(v) for k, v in overrides.items()})
    return row


def pre94_row(**overrides):
    base = raw_row(
        year=1985,
        snap_raw="0",
        food_home_delivered_annual=2400,
        food_out_annual=600,
        food_home_amount="",
        food_home_recall="",
        food_delivered_amount="",
        food_delivered_recall="",
        food_out_amount="",
        food_out_recall="",
    )
    base.update({k: str(v) for k, v in overrides.items()})
    return base


def r3_row(**overrides):
    base = raw_row(year=2003, snap_raw="000000000000")
    base.update({k: str(v) for k, v in overrides.items()})
    return base


def flat_cpi(base=100.0, default=100.0, overrides=None):
    rows = []
    for y in range(1977, 2020):
        for m in range(1, 13):
            idx = base if y == 2019 else default
            if overrides and (y, m) in overrides:
                idx = overrides[(y, m)]
            rows.append({"year": y, "month": m, "index": idx})
    return CpiTable(pd.DataFrame(rows))


def run(rows, cpi=None):
    parsed = parse_panel_csv(pd.DataFrame(rows))
    return harmonize_table(parsed, cpi or flat_cpi())


def test_recall_factors_exact():
    assert RECALL_TO_MONTHLY == {
        "week": 52.0 / 12.0,
        "two_week": 26.0 / 12.0,
        "month": 1.0,
        "year": 1.0 / 12.0,
    }


def test_weekly_benefit_recall_frozen():
    res = run(
        [
            raw_row(
                snap_raw="yes",
                snap_benefit_raw=60,
                benefit_recall="week",
                food_extra_amount=40,
                food_extra_recall="month",
            )
        ]
    )
    row = res.table.iloc[0]
    assert row["snap_status"] == True  # noqa: E712
    assert row["snap_benefit_month"] == pytest.approx(260.0, rel=1e-12)
    assert row["benefit_imputed"] == False  # noqa: E712
    # participant at-home spending = benefit + extra beyond it
    assert row["food_exp_pc_month"] == pytest.approx((260.0 + 40 + 0 + 60) / 3, rel=1e-12)


def test_pre94_food_frozen():
    res = run(
        [pre94_row(snap_raw="1", snap_benefit_raw=50, benefit_recall="month",
                   family_size=2)]
    )
    row = res.table.iloc[0]
    assert row["snap_status"] == True  # noqa: E712
    # (2400/12 + 600/12 + 50) / 2
    assert row["food_exp_pc_month"] == pytest.approx(150.0, rel=1e-12)


def test_post94_nonparticipant_frozen():
    res = run([raw_row()])
    row = res.table.iloc[0]
    assert row["snap_status"] == False  # noqa: E712
    assert pd.isna(row["snap_benefit_month"])
    assert row["food_exp_pc_month"] == pytest.approx((300 + 0 + 60) / 3, rel=1e-12)
    assert row["income_pc"] == pytest.approx(12000.0, rel=1e-12)
    assert row["tfp_cost_pc_real"] == pytest.approx(150.0, rel=1e-12)


def test_deflation_frozen():
    cpi = flat_cpi(base=230.0)
    assert cpi.deflate(100.0, 1985) == pytest.approx(230.0, rel=1e-12)
    # base period is the identity
    assert cpi.deflate(100.0, 2019, 1) == pytest.approx(100.0, rel=1e-12)
    cpi2 = flat_cpi(base=230.0, overrides={(1995, 3): 115.0})
    assert cpi2.index_for(1995, 3) == 115.0
    # months without their own entry use the annual average
    assert cpi2.index_for(1995, None) == pytest.approx((11 * 100 + 115) / 12)
    res = run([pre94_row(snap_raw="1", snap_benefit_raw=50, benefit_recall="month",
                         family_size=2)], cpi=flat_cpi(base=230.0))
    assert res.table.iloc[0]["food_exp_pc_month"] == pytest.approx(345.0, rel=1e-12)


def test_cpi_validation():
    with pytest.raises(RangeError):
        flat_cpi().index_for(1950)
    small = pd.DataFrame(
        [{"year": 1990, "month": m, "index": 100.0} for m in range(1, 13)]
    )
    with pytest.raises(SchemaError):
        CpiTable(small)
    dup = pd.DataFrame(
        [
            {"year": 2019, "month": 1, "index": 230.0},
            {"year": 2019, "month": 1, "index": 231.0},
        ]
    )
    with pytest.raises(IntegrityError):
        CpiTable(dup)
    bad = pd.DataFrame([{"year": 2019, "month": 1, "index": 0.0}])
    with pytest.raises(DataError):
        CpiTable(bad)


def test_snap_regimes():
    res = run(
        [
            pre94_row(person_id=1, snap_raw="2"),
            pre94_row(person_id=2, snap_raw="0"),
            pre94_row(person_id=3, snap_raw=""),
            raw_row(person_id=4, snap_raw="yes", snap_benefit_raw=100,
                    benefit_recall="month"),
            raw_row(person_id=5, snap_raw="dont_know"),
            raw_row(person_id=6, year=2011, snap_raw="yes",
                    snap_benefit_raw=200, benefit_recall="month"),
            # April interview looks at the March flag (third position)
            r3_row(person_id=7, interview_month=4, snap_raw="001000000000",
                   snap_benefit_raw=90, benefit_recall="month"),
            r3_row(person_id=8, interview_month=4, snap_raw="110111111111"),
            # January wraps around to December of the prior calendar year
            r3_row(person_id=9, interview_month=1, snap_raw="000000000001",
                   snap_benefit_raw=80, benefit_recall="month"),
        ]
    )
    got = dict(zip(res.table["person_id"], res.table["snap_status"]))
    assert got == {
        "1": True, "2": False, "3": False, "4": True, "5": False,
        "6": True, "7": True, "8": False, "9": True,
    }


def test_r3_requires_interview_month_and_flags():
    with pytest.raises(HarmonizationError):
        run([r3_row(interview_month="")])
    with pytest.raises(HarmonizationError):
        run([r3_row(snap_raw="0100")])


def test_refused_benefit_imputes_year_mean():
    res = run(
        [
            raw_row(person_id=1, snap_raw="yes", snap_benefit_raw="refused",
                    benefit_recall="week"),
            raw_row(person_id=2, snap_raw="yes", snap_benefit_raw=100,
                    benefit_recall="month"),
            raw_row(person_id=3, snap_raw="yes", snap_benefit_raw=60,
                    benefit_recall="week"),
        ]
    )
    # refusal tokens are data, not parse warnings
    assert not any(w["column"] == "snap_benefit_raw" for w in res.warnings)
    t = res.table.set_index("person_id")
    mean = (100.0 + 260.0) / 2
    assert t.loc["1", "snap_benefit_month"] == pytest.approx(mean, rel=1e-12)
    assert bool(t.loc["1", "benefit_imputed"]) is True
    assert bool(t.loc["2", "benefit_imputed"]) is False


def test_component_recall_imputation():
    res = run(
        [
            r3_row(person_id=1, food_home_amount=500, food_home_recall="dk"),
            r3_row(person_id=2, food_home_amount=420, food_home_recall="month"),
            r3_row(person_id=3, food_home_amount=60, food_home_recall="week"),
        ]
    )
    t = res.table.set_index("person_id")
    imputed_home = (420.0 + 60.0 * 52 / 12) / 2
    assert t.loc["1", "food_exp_pc_month"] == pytest.approx(
        (imputed_home + 0 + 60) / 3, rel=1e-12
    )


def test_race_first_collected_imputation():
    res = run(
        [
            r3_row(person_id=7, year=1999, interview_month=3, indiv_race=""),
            r3_row(person_id=7, year=2001, interview_month=3, indiv_race="black"),
            r3_row(person_id=7, year=2003, interview_month=3, indiv_race=""),
            r3_row(person_id=8, year=1999, interview_month=3, indiv_race=""),
        ]
    )
    t = res.table.set_index(["person_id", "year"])
    assert t.loc[("7", 1999), "indiv_race_binary"] == "nonwhite"
    assert t.loc[("7", 2001), "indiv_race_binary"] == "nonwhite"
    assert t.loc[("7", 2003), "indiv_race_binary"] == "nonwhite"
    assert pd.isna(t.loc[("8", 1999), "indiv_race_binary"])


def test_education_coding_and_child_rule():
    assert education_category(11, "no") == "less_hs"
    assert education_category(12, "no") == "hs"
    assert education_category(14, "no") == "some_college"
    assert education_category(16, "yes") == "college"
    assert education_category(None, "yes") == "college"
    assert education_category(None, None) is None
    res = run(
        [
            raw_row(person_id=1, role="CH", indiv_age=10, indiv_education_grades=3,
                    indiv_college_degree="no", rp_education_grades=16,
                    rp_college_degree="yes"),
            raw_row(person_id=2, role="SP", indiv_age=30, indiv_education_grades=14,
                    indiv_college_degree="no"),
            raw_row(person_id=3, role="CH", indiv_age="", indiv_education_grades="",
                    rp_education_grades=12, rp_college_degree="no"),
        ]
    )
    t = res.table.set_index("person_id")
    assert t.loc["1", "indiv_education_cat"] == "college"
    assert t.loc["2", "indiv_education_cat"] == "some_college"
    assert t.loc["3", "indiv_education_cat"] == "hs"


def test_region_mapping():
    assert region_of_state("NY") == "northeast"
    assert region_of_state("VA") == "mid_atlantic"
    assert region_of_state("KY") == "south"
    assert region_of_state("MO") == "midwest"
    assert region_of_state("CA") == "west"
    assert region_of_state("AK") is None
    assert region_of_state("XX") is None
    assert region_of_state(None) is None


def test_row_conservation_and_exclusion_reasons():
    rows = [
        raw_row(person_id=1),
        raw_row(person_id=2, family_size=""),
        pre94_row(person_id=3, food_home_delivered_annual="", food_out_annual=""),
        raw_row(person_id=4, food_home_amount="", food_delivered_amount="",
                food_out_amount=""),
        raw_row(person_id=5),
    ]
    res = run(rows)
    assert len(res.table) + len(res.exclusions) == 5
    reasons = res.exclusions.set_index("person_id")["reason"].to_dict()
    assert reasons == {"2": "missing_family_size", "3": "unusable_food",
                       "4": "unusable_food"}


def test_duplicate_person_year_raises():
    with pytest.raises(IntegrityError):
        run([raw_row(), raw_row()])


def test_malformed_numeric_warns_and_missing():
    res = run([raw_row(rp_age="abc")])
    assert any(
        w["column"] == "rp_age" and "malformed" in w["message"] for w in res.warnings
    )
    assert pd.isna(res.table.iloc[0]["rp_age"])


def test_children_exceeding_family_size_cleared():
    res = run([raw_row(n_children=5, family_size=3)])
    assert pd.isna(res.table.iloc[0]["n_children"])
    assert pd.isna(res.table.iloc[0]["child_ratio"])
    assert any(w["column"] == "n_children" for w in res.warnings)


def test_harmonized_input_rejected():
    res = run([raw_row()])
    with pytest.raises(SchemaError) as err:
        parse_panel_csv(res.table.astype(str))
    assert "snap_raw" in str(err.value)


def test_schema_mapping_applies():
    rows = [raw_row()]
    df = pd.DataFrame(rows).rename(columns={"person_id": "pid"})
    parsed = parse_panel_csv(df, schema={"person_id": "pid"})
    assert parsed.records[0].person_id == "1"
    with pytest.raises(SchemaError):
        parse_panel_csv(df)


def test_negative_amounts_raise():
    with pytest.raises(DataError):
        run([raw_row(snap_raw="yes", snap_benefit_raw=-5, benefit_recall="week")])
    with pytest.raises(DataError):
        run([pre94_row(food_home_delivered_annual=-1)])
    with pytest.raises(DataError):
        run([raw_row(food_out_amount=-2)])


def test_participant_spending_floor_property():
    rng = np.random.default_rng(42)
    rows = []
    for i in range(60):
        recall = rng.choice(["week", "two_week", "month", "year"])
        extra = rng.choice(["", str(round(float(rng.uniform(0, 200)), 2))])
        out = rng.choice(["", str(round(float(rng.uniform(0, 120)), 2))])
        rows.append(
            raw_row(
                person_id=i,
                snap_raw="yes",
                snap_benefit_raw=round(float(rng.uniform(10, 400)), 2),
                benefit_recall=recall,
                food_extra_amount=extra,
                food_extra_recall="month" if extra else "",
                food_out_amount=out,
                food_out_recall="month" if out else "",
                family_size=int(rng.integers(1, 6)),
            )
        )
    res = run(rows)
    assert len(res.table) == 60
    t = res.table
    floor = t["snap_benefit_month"] / t["family_size"]
    assert (t["food_exp_pc_month"] >= floor - 1e-9).all()


def test_harmonized_column_order_fixed():
    res = run([raw_row()])
    from pfspanel.ingest import HARMONIZED_COLUMNS

    assert tuple(res.table.columns) == HARMONIZED_COLUMNS
