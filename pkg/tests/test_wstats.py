import numpy as np
import pytest

from pfspanel.errors import DataError
from pfspanel.wstats import (
    box_stats,
    weighted_mean,
    weighted_quantile,
    weighted_share,
    weighted_var,
)


def test_midpoint_at_boundary():
    v = [1.0, 2.0, 3.0, 4.0]
    w = [1.0, 1.0, 1.0, 1.0]
    assert weighted_quantile(v, w, 0.50) == pytest.approx(2.5)
    assert weighted_quantile(v, w, 0.25) == pytest.approx(1.5)
    assert weighted_quantile(v, w, 0.75) == pytest.approx(3.5)


def test_value_when_target_inside_mass():
    v = [0.2, 0.4, 0.6, 0.8]
    w = [1.0, 1.0, 1.0, 1.0]
    # 0.3 falls strictly inside the second value's mass interval
    assert weighted_quantile(v, w, 0.30) == pytest.approx(0.4)
    # 0.25 lands exactly on the boundary after the first value
    assert weighted_quantile(v, w, 0.25) == pytest.approx(0.3)


def test_extreme_targets():
    v = [5.0, 7.0, 9.0]
    w = [1.0, 2.0, 3.0]
    assert weighted_quantile(v, w, 0.0) == 5.0
    assert weighted_quantile(v, w, 1.0) == 9.0


def test_duplicate_values_pool_their_mass():
    v = [1.0, 1.0, 2.0]
    w = [0.25, 0.25, 0.5]
    # cumulative mass reaches exactly 0.5 at value 1 -> midpoint with 2
    assert weighted_quantile(v, w, 0.5) == pytest.approx(1.5)


def test_weight_scale_invariance():
    rng = np.random.default_rng(7)
    v = rng.normal(size=40)
    w = rng.uniform(0.1, 3.0, size=40)
    for q in (0.1, 0.25, 0.5, 0.9):
        a = weighted_quantile(v, w, q)
        b = weighted_quantile(v, w * 17.0, q)
        assert a == pytest.approx(b, abs=0.0)


def test_mean_share_var():
    assert weighted_mean([1.0, 3.0], [1.0, 1.0]) == 2.0
    assert weighted_share([True, False], [1.0, 3.0]) == 0.25
    assert weighted_var([1.0, 3.0], [1.0, 1.0]) == 1.0


def test_box_stats_simple():
    stats = box_stats([1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 1.0, 1.0])
    assert stats["median"] == pytest.approx(2.5)
    assert stats["q1"] == pytest.approx(1.5)
    assert stats["q3"] == pytest.approx(3.5)
    # fences are [-1.5, 6.5]: everything inside
    assert stats["whisker_low"] == 1.0
    assert stats["whisker_high"] == 4.0
    assert stats["n_outliers"] == 0


def test_box_stats_counts_outliers():
    vals = [1.0, 2.0, 3.0, 4.0, 50.0]
    stats = box_stats(vals, np.ones(5))
    assert stats["n_outliers"] == 1
    assert stats["whisker_high"] < 50.0


def test_rejects_bad_input():
    with pytest.raises(DataError):
        weighted_quantile([], [], 0.5)
    with pytest.raises(DataError):
        weighted_quantile([1.0], [-1.0], 0.5)
    with pytest.raises(DataError):
        weighted_quantile([1.0, 2.0], [0.0, 0.0], 0.5)
    with pytest.raises(DataError):
        weighted_mean([np.nan], [1.0])
