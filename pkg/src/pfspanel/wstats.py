"""Weighted summary statistics shared by the calibration and report code.

The quantile convention used throughout: with values sorted and weights
normalized to 1, the q-quantile is

* the midpoint of the two adjacent distinct values when the target q lands
  exactly on the cumulative weight boundary between them, and
* the value whose mass interval strictly contains q otherwise.

With four equally weighted values {1, 2, 3, 4} this puts the median at 2.5
and the quartiles at 1.5 and 3.5.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

# relative slack when deciding that a target sits exactly on a cumulative
# weight boundary; well above float accumulation error, well below any
# realistic single observation's weight share
_BOUNDARY_RTOL = 1e-9


def _clean(values, weights) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.ndim != 1:
        raise DataError("values and weights must be 1-D arrays of equal length")
    if v.size == 0:
        raise DataError("cannot summarize an empty sample")
    if np.any(~np.isfinite(v)) or np.any(~np.isfinite(w)):
        raise DataError("values and weights must be finite")
    if np.any(w < 0):
        raise DataError("weights must be non-negative")
    if w.sum() <= 0:
        raise DataError("total weight must be positive")
    return v, w


def distinct_mass(values, weights) -> tuple[np.ndarray, np.ndarray]:
    """Distinct sorted values and their total normalized weight shares."""
    v, w = _clean(values, weights)
    uniq, inverse = np.unique(v, return_inverse=True)
    mass = np.bincount(inverse, weights=w, minlength=uniq.size)
    return uniq, mass / mass.sum()


def weighted_quantile(values, weights, q: float) -> float:
    """Quantile under the midpoint-at-boundary convention described above."""
    uniq, share = distinct_mass(values, weights)
    if q <= _BOUNDARY_RTOL:
        return float(uniq[0])
    if q >= 1.0 - _BOUNDARY_RTOL:
        return float(uniq[-1])
    cum = np.cumsum(share)
    k = int(np.searchsorted(cum, q - _BOUNDARY_RTOL))
    if abs(cum[k] - q) <= _BOUNDARY_RTOL:
        if k + 1 < uniq.size:
            return float(0.5 * (uniq[k] + uniq[k + 1]))
        return float(uniq[-1])
    return float(uniq[k])


def weighted_mean(values, weights) -> float:
    v, w = _clean(values, weights)
    return float(np.average(v, weights=w))


def weighted_var(values, weights) -> float:
    """Weight-share variance (no small-sample correction)."""
    v, w = _clean(values, weights)
    m = np.average(v, weights=w)
    return float(np.average((v - m) ** 2, weights=w))


def weighted_share(flags, weights) -> float:
    """Weighted share of truthy flags."""
    f = np.asarray(flags, dtype=bool).astype(float)
    return weighted_mean(f, weights)


def box_stats(values, weights) -> dict[str, float]:
    """Weighted five-number summary with 1.5 * IQR whiskers.

    Whiskers snap to the most extreme observed values inside the fences;
    observations beyond the fences are only counted, never returned.
    """
    v, w = _clean(values, weights)
    q1 = weighted_quantile(v, w, 0.25)
    med = weighted_quantile(v, w, 0.50)
    q3 = weighted_quantile(v, w, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    if inside.size == 0:
        # degenerate: everything flagged; fall back to the quartiles
        whisker_lo, whisker_hi = q1, q3
    else:
        whisker_lo = float(inside.min())
        whisker_hi = float(inside.max())
    return {
        "q1": q1,
        "median": med,
        "q3": q3,
        "whisker_low": whisker_lo,
        "whisker_high": whisker_hi,
        "n_outliers": int(np.count_nonzero((v < lo_fence) | (v > hi_fence))),
        "total_weight": float(w.sum()),
        "n": int(v.size),
    }
