"""Paired significance and effect size for per-repetition RMSEs."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX_N = 12
MEDIUM_DELTA = 0.33
LARGE_DELTA = 0.474


def _signed_ranks(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise ValueError("wilcoxon needs two equal-length, non-empty samples")
    d = a - b
    d = d[d != 0]
    return d, rankdata(np.abs(d))


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> float:
    """Two-sided p-value of the Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes get midranks. Up to
    ``exact_max_n`` non-zero pairs the null distribution of the positive-rank
    sum is enumerated exactly (on doubled ranks, so midranks stay integral);
    above that a normal approximation with tie correction is used.
    """
    d, ranks = _signed_ranks(a, b)
    n = len(d)
    if n == 0:
        return 1.0
    t_plus = ranks[d > 0].sum()
    if n <= exact_max_n:
        r2 = np.rint(2 * ranks).astype(int)
        total = int(r2.sum())
        # counts[s] = number of sign assignments whose doubled positive-rank sum is s
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in r2:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[:-r] if r else counts
            counts = counts + shifted
        probs = counts / 2.0**n
        t2 = int(round(2 * t_plus))
        lower = probs[: t2 + 1].sum()
        upper = probs[t2:].sum()
        return float(min(1.0, 2.0 * min(lower, upper)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    if var <= 0:
        return 1.0
    z = (t_plus - mean) / np.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(abs(z))))


def cliffs_delta(a, b) -> float:
    """(#{a_i > b_j} - #{a_i < b_j}) / (|a| |b|)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cliffs_delta needs two non-empty samples")
    b_sorted = np.sort(b)
    below = np.searchsorted(b_sorted, a, side="left")
    above = len(b) - np.searchsorted(b_sorted, a, side="right")
    return float((below.sum() - above.sum()) / (len(a) * len(b)))


def effect_marker(delta: float | None, medium: float = MEDIUM_DELTA, large: float = LARGE_DELTA) -> str:
    if delta is None:
        return ""
    mag = abs(delta)
    if mag >= large:
        return "L"
    if mag >= medium:
        return "M"
    return ""


def markers(p: float | None, delta: float | None, alpha: float = 0.05, medium: float = MEDIUM_DELTA,
            large: float = LARGE_DELTA) -> str:
    """"*" when p < alpha, then "M"/"L" for medium/large effect sizes."""
    star = "*" if p is not None and p < alpha else ""
    return star + effect_marker(delta, medium, large)


def improvement_pct(reference_mean: float, candidate_mean: float) -> float:
    """Relative RMSE reduction of the candidate against the reference, in percent."""
    if reference_mean == 0:
        return 0.0 if candidate_mean == 0 else float("-inf")
    return (reference_mean - candidate_mean) / reference_mean * 100.0
