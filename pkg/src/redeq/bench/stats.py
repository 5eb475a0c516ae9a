"""Quantiles and Wilcoxon signed-rank tests for benchmark reports."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

EXACT_MAX_N = 25
SIGNIFICANCE = 0.01


def quantile(values, q: float) -> float:
    """Linear interpolation between order statistics; tolerates ``inf``."""
    v = np.sort(np.asarray(values, dtype=float))
    v = v[~np.isnan(v)]
    if v.size == 0:
        return math.nan
    pos = q * (v.size - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    frac = pos - lo
    if frac == 0 or v[lo] == v[hi]:
        return float(v[lo])
    return float(v[lo] + frac * (v[hi] - v[lo]))


def wilcoxon_p(a, b) -> float:
    """Two-sided signed-rank p-value for paired samples ``a`` and ``b``.

    Pairs with a non-finite member or a zero difference are dropped; the
    exact null distribution is used up to 25 remaining pairs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ok = np.isfinite(a) & np.isfinite(b)
    d = a[ok] - b[ok]
    d = d[d != 0]
    if d.size == 0:
        return 1.0
    method = "exact" if d.size <= EXACT_MAX_N else "approx"
    return float(stats.wilcoxon(d, method=method).pvalue)
