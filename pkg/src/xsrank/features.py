"""Intraday factor formulas computed per stock per day.

All factors are built from one day's bars: interval returns are
close-to-close within the day, prices are the close series.  Undefined
cases (zero realized variance, zero denominators) return None.

The flow-in ratio denominator calls for an open-interest series, which
equities do not have; when no OI series is supplied the volume series is
substituted and the substitution is flagged on the output row.  Index
conventions for that formula are ambiguous as printed in its source; the
reading implemented here is: for a single day with intervals j = 1..N,

    numerator   = sum_j Volume_j * Close_j * |Close_j - Close_{j-1}| / Amount_total
    denominator = sum_j |OI_j - OI_{j-1}| * Close_j

with Amount_total the day's total traded currency amount.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FactorRow:
    date: str
    stock_id: str
    rvar: float
    rskew: float | None
    rkurt: float | None
    downside_beta: float | None
    flow_in_ratio: float | None
    trend_strength: float | None
    oi_substituted: bool = True

FACTOR_NAMES = ("rvar", "rskew", "rkurt", "downside_beta",
                "flow_in_ratio", "trend_strength")


def _vec(r) -> np.ndarray:
    v = np.asarray(r, dtype=np.float64).reshape(-1)
    if v.shape[0] < 1:
        raise ValueError("need at least one interval return")
    return v


def realized_variance(intraday_returns) -> float:
    r = _vec(intraday_returns)
    return float(np.sum(r * r))


def realized_skewness(intraday_returns) -> float | None:
    r = _vec(intraday_returns)
    rvar = np.sum(r * r)
    if rvar == 0.0:
        return None
    n = r.shape[0]
    return float(np.sqrt(n) * np.sum(r ** 3) / rvar ** 1.5)


def realized_kurtosis(intraday_returns) -> float | None:
    r = _vec(intraday_returns)
    rvar = np.sum(r * r)
    if rvar == 0.0:
        return None
    n = r.shape[0]
    return float(n * np.sum(r ** 4) / rvar ** 2)


def downside_beta(intraday_returns) -> float | None:
    """Share of realized variance contributed by negative intervals."""
    r = _vec(intraday_returns)
    rvar = np.sum(r * r)
    if rvar == 0.0:
        return None
    return float(np.sum(r * r * (r < 0)) / rvar)


def flow_in_ratio(volume, close, amount, oi=None) -> float | None:
    volume = _vec(volume)
    close = _vec(close)
    amount = _vec(amount)
    if not (volume.shape == close.shape == amount.shape):
        raise ValueError("volume, close, amount must have equal length")
    if volume.shape[0] < 2:
        raise ValueError("flow_in_ratio needs at least 2 intervals")
    oi_series = _vec(oi) if oi is not None else volume
    if oi_series.shape != volume.shape:
        raise ValueError("oi series length mismatch")
    total_amount = np.sum(amount)
    if total_amount == 0.0:
        return None
    num = np.sum(volume[1:] * close[1:] * np.abs(np.diff(close))) / total_amount
    den = np.sum(np.abs(np.diff(oi_series)) * close[1:])
    if den == 0.0:
        return None
    return float(num / den)


def trend_strength(prices) -> float | None:
    """Net move over total path length, in [-1, 1]; None on a flat path."""
    p = _vec(prices)
    if p.shape[0] < 2:
        raise ValueError("trend_strength needs at least 2 prices")
    path = np.sum(np.abs(np.diff(p)))
    if path == 0.0:
        return None
    return float((p[-1] - p[0]) / path)


def factor_row(panel, oi=None) -> FactorRow:
    """All factors for one panel's as-of date from its last day of bars."""
    from . import marketdata as md

    if panel.timestamps is None:
        raise ValueError(f"{panel.stock_id}: timestamps required to locate "
                         f"the as-of date's bars")
    days = np.array([t[:10] for t in panel.timestamps])
    rows = days == panel.as_of_date
    if not rows.any():
        raise ValueError(f"{panel.stock_id}: no bars on {panel.as_of_date}")
    close = panel.hf[rows, md.HF_FIELDS.index("close")]
    volume = panel.hf[rows, md.HF_FIELDS.index("volume")]
    vwap = panel.hf[rows, md.HF_FIELDS.index("vwap")]
    amount = volume * vwap
    prev = close[:-1]
    r = np.where(prev != 0.0, np.diff(close) / np.where(prev != 0.0, prev, 1.0), 0.0)
    return FactorRow(
        date=panel.as_of_date,
        stock_id=panel.stock_id,
        rvar=realized_variance(r),
        rskew=realized_skewness(r),
        rkurt=realized_kurtosis(r),
        downside_beta=downside_beta(r),
        flow_in_ratio=flow_in_ratio(volume, close, amount, oi),
        trend_strength=trend_strength(close),
        oi_substituted=oi is None,
    )


def factor_rows(cross_section) -> list:
    return [factor_row(p) for p in cross_section.panels]
