"""Evaluation metrics: rank correlation, ICIR, drawdown, IR, returns.

Degenerate cases (constant inputs, zero variance) return None rather than
raising, and aggregations skip None entries.  Standard deviations are the
sample (n-1) kind throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DailyEvaluation:
    date: str
    rank_ic: float | None
    n_stocks: int


def average_ranks(v) -> np.ndarray:
    """1-based ranks, ties receiving the average of their positions."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    n = v.shape[0]
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    new_grp = np.empty(n, dtype=bool)
    new_grp[0] = True
    new_grp[1:] = sv[1:] != sv[:-1]
    grp = np.cumsum(new_grp) - 1
    counts = np.bincount(grp)
    starts = np.cumsum(counts) - counts
    avg = starts + (counts - 1) / 2.0 + 1.0
    ranks = np.empty(n)
    ranks[order] = avg[grp]
    return ranks


def spearman(x, y) -> float | None:
    """Spearman rho: Pearson correlation of average ranks.

    Returns None when either input is constant (correlation undefined).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("spearman needs n >= 2")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = (dx * dx).sum()
    syy = (dy * dy).sum()
    if sxx == 0.0 or syy == 0.0:
        return None
    # single sqrt so perfect concordance lands on exactly +/-1.0
    return float((dx * dy).sum() / np.sqrt(sxx * syy))


def rank_icir(daily: list) -> float | None:
    """mean(daily RankIC) / sample std; None-valued days are excluded."""
    vals = np.array([d.rank_ic for d in daily if d.rank_ic is not None])
    if vals.shape[0] < 2:
        raise ValueError(f"rank_icir needs >= 2 valid days, got {vals.shape[0]}")
    sd = vals.std(ddof=1)
    if sd == 0.0:
        return None
    return float(vals.mean() / sd)


def mean_rank_ic(daily: list) -> float | None:
    vals = [d.rank_ic for d in daily if d.rank_ic is not None]
    if not vals:
        return None
    return float(np.mean(vals))


def max_drawdown(equity) -> tuple:
    """(absolute drawdown, relative drawdown in percent).

    Absolute: max over time of running-peak minus current value.  Relative:
    that same drop divided by the running peak where it occurs, as percent.
    """
    p = np.asarray(equity, dtype=np.float64).reshape(-1)
    if p.shape[0] == 0:
        raise ValueError("empty equity series")
    peak = np.maximum.accumulate(p)
    dd = peak - p
    t = int(np.argmax(dd))
    absolute = float(dd[t])
    relative = 0.0 if absolute == 0.0 else float(100.0 * dd[t] / peak[t])
    return absolute, relative


def information_ratio(portfolio_returns, benchmark_returns) -> float | None:
    """mean(excess) / sample std(excess); None when the std is zero."""
    p = np.asarray(portfolio_returns, dtype=np.float64).reshape(-1)
    b = np.asarray(benchmark_returns, dtype=np.float64).reshape(-1)
    if p.shape != b.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {b.shape}")
    if p.shape[0] < 2:
        raise ValueError("information_ratio needs >= 2 observations")
    ex = p - b
    sd = ex.std(ddof=1)
    if sd == 0.0:
        return None
    return float(ex.mean() / sd)


def accumulated_return(equity) -> float:
    """(final/initial - 1) * 100."""
    p = np.asarray(equity, dtype=np.float64).reshape(-1)
    if p.shape[0] == 0:
        raise ValueError("empty equity series")
    if p[0] == 0.0:
        raise ValueError("initial equity is zero")
    return float((p[-1] / p[0] - 1.0) * 100.0)
