"""Hand-built market objects for tests that do not need the full generator."""

import numpy as np

from xsrank.marketdata import CrossSection, MultiFreqPanel

LF4 = ("size", "trend", "volatility", "turnover")


def make_panel(stock_id, date="2020-01-10", t=6, seed=0, lf=None, dates=None):
    """A valid single-stock panel with t bars spread over `dates` (default 1)."""
    rng = np.random.default_rng(seed)
    close = 100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.01, size=t)))
    openp = np.empty(t)
    openp[0] = 100.0
    openp[1:] = close[:-1]
    high = np.maximum(openp, close) * (1.0 + np.abs(rng.normal(0, 0.002, size=t)))
    low = np.minimum(openp, close) * (1.0 - np.abs(rng.normal(0, 0.002, size=t)))
    volume = rng.uniform(1e5, 2e5, size=t)
    vwap = (openp + high + low + close) / 4.0
    hf = np.column_stack([openp, high, low, close, volume, vwap])
    if lf is None:
        lf = rng.normal(size=len(LF4))
    if dates is None:
        dates = [date]
    per_day = t // len(dates)
    stamps = [f"{dates[i // per_day]}T{9 + (i % per_day):02d}:30"
              for i in range(t)]
    return MultiFreqPanel(stock_id, hf, np.asarray(lf, dtype=float),
                          dates[-1], np.array(stamps))


def make_cross_section(n, date="2020-01-10", t=6, seed=0, returns=None):
    rng = np.random.default_rng(seed + 1000)
    panels = [make_panel(f"S{i:03d}", date, t, seed * 997 + i) for i in range(n)]
    if returns is None:
        returns = rng.normal(0.0, 0.02, size=n)
    return CrossSection(date, panels, np.asarray(returns, dtype=float), LF4)
