"""Deterministic sorted-portfolio backtest.

Scores formed at the close of day T are executed at the open of day T+1:
targets are top/bottom decile equal-weight legs, trades are capped at a
fraction of the execution bar's volume, executed prices are worsened by a
quadratic impact in the filled share of that cap, and commission is charged
on traded notional.  Equity is marked at execution-day open prices, and the
accounting identity cash + sum(holdings * mark) = equity is verified every
day.

Fractional shares are allowed (weights are exactly realizable when volume
permits).  Unfilled residual orders are dropped, not carried.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import marketdata
from . import metrics


@dataclass
class ExecutionConfig:
    commission_rate: float = 0.0002
    volume_limit: float = 0.0025
    impact_coeff: float = 0.01
    initial_capital: float = 1e6
    mode: str = "long-short"            # or "long-only"
    decile: float = 0.10
    commission_mode: str = "proportional"   # or "per_share"
    reinvest_short_proceeds: bool = True

    def validate(self) -> None:
        for name in ("commission_rate", "volume_limit", "impact_coeff", "decile"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.initial_capital <= 0:
            raise ValueError("initial_capital must be positive")
        if self.mode not in ("long-short", "long-only"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.commission_mode not in ("proportional", "per_share"):
            raise ValueError(f"unknown commission_mode {self.commission_mode!r}")


@dataclass
class Fill:
    date: str
    stock_id: str
    shares: float
    price: float
    fee: float
    dropped_shares: float = 0.0


@dataclass
class BacktestLedger:
    cash: float
    holdings: dict = field(default_factory=dict)     # stock_id -> signed shares
    marks: dict = field(default_factory=dict)        # last known price
    fills: list = field(default_factory=list)
    equity_curve: list = field(default_factory=list) # (date, equity, cash)
    warnings: list = field(default_factory=list)
    tie_days: int = 0

    def equity(self) -> float:
        return self.cash + sum(sh * self.marks[s] for s, sh in self.holdings.items())


def build_portfolio(scores, stock_ids, config: ExecutionConfig) -> tuple:
    """Equal-weight decile legs; ties broken by ascending stock_id.

    Returns (weights dict, tie_flag).  tie_flag is set when the score at a
    selection boundary equals the score just outside it, meaning membership
    was decided by the id tie-break.
    """
    config.validate()
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.shape[0] != len(stock_ids) or scores.shape[0] < 2:
        raise ValueError(f"need >= 2 scored stocks, got {scores.shape[0]} "
                         f"scores for {len(stock_ids)} ids")
    n = scores.shape[0]
    n_leg = max(1, int(np.floor(n * config.decile)))
    order = sorted(range(n), key=lambda i: (-scores[i], stock_ids[i]))
    longs = order[:n_leg]
    shorts = order[-n_leg:] if config.mode == "long-short" else []
    tie = scores[order[n_leg - 1]] == scores[order[n_leg]] if n_leg < n else False
    if shorts:
        tie = tie or scores[order[-n_leg]] == scores[order[-n_leg - 1]]
    leg_scale = 1.0
    if config.mode == "long-short" and not config.reinvest_short_proceeds:
        leg_scale = 0.5
    weights = {}
    for i in longs:
        weights[stock_ids[i]] = leg_scale / n_leg
    for i in shorts:
        weights[stock_ids[i]] = -leg_scale / n_leg
    return weights, tie


def execute_day(ledger: BacktestLedger, targets: dict, open_bar: dict,
                config: ExecutionConfig, date: str) -> BacktestLedger:
    """Trade toward target weights at this day's open bars.

    `open_bar` maps stock_id -> (open price, bar volume).  Held stocks with
    no bar keep their last mark and their pending trade is skipped.
    """
    for sid in sorted(open_bar):
        ledger.marks[sid] = open_bar[sid][0]
    for sid in ledger.holdings:
        if sid not in ledger.marks:
            raise ValueError(f"{date}: no price ever seen for held {sid}")
        if sid not in open_bar:
            ledger.warnings.append(f"{date}: missing bar for held {sid}; "
                                   f"marked at last price, trade skipped")
    equity_before = ledger.equity()

    wanted = dict(targets)
    for sid in ledger.holdings:
        wanted.setdefault(sid, 0.0)
    for sid in sorted(wanted):
        if sid not in open_bar:
            if sid in targets and sid not in ledger.holdings:
                ledger.warnings.append(f"{date}: missing bar for target {sid}; "
                                       f"order skipped")
            continue
        price, volume = open_bar[sid]
        target_shares = wanted[sid] * equity_before / price
        delta = target_shares - ledger.holdings.get(sid, 0.0)
        if delta == 0.0:
            continue
        cap = config.volume_limit * volume
        fill = float(np.clip(delta, -cap, cap))
        dropped = delta - fill
        if dropped != 0.0:
            ledger.warnings.append(f"{date}: {sid} order {delta:.4f} shares "
                                   f"capped at {fill:.4f}")
        if fill == 0.0:
            continue
        ratio = abs(fill) / cap if cap > 0 else 0.0
        impact = config.impact_coeff * ratio * ratio
        exec_price = price * (1.0 + impact) if fill > 0 else price * (1.0 - impact)
        notional = fill * exec_price
        if config.commission_mode == "proportional":
            fee = config.commission_rate * abs(notional)
        else:
            fee = config.commission_rate * abs(fill)
        ledger.cash -= notional + fee
        new_pos = ledger.holdings.get(sid, 0.0) + fill
        if new_pos == 0.0:
            ledger.holdings.pop(sid, None)
        else:
            ledger.holdings[sid] = new_pos
        ledger.fills.append(Fill(date, sid, fill, exec_price, fee, dropped))

    equity = ledger.equity()
    check = ledger.cash + sum(sh * ledger.marks[s]
                              for s, sh in sorted(ledger.holdings.items()))
    if abs(check - equity) > 1e-6 * max(1.0, abs(equity)):
        raise RuntimeError(f"{date}: accounting identity violated "
                           f"({check} vs {equity})")
    ledger.equity_curve.append((date, equity, ledger.cash))
    return ledger


def run_backtest(scores_by_day: dict, market: list,
                 config: ExecutionConfig) -> tuple:
    """Execute daily scores against market data; returns (ledger, summary).

    `scores_by_day` maps scoring date -> {stock_id: score}; each is executed
    at the next available market date's open.  `market` is a list of
    CrossSections supplying execution bars and the equal-weight benchmark.
    """
    config.validate()
    market = sorted(market, key=lambda cs: cs.date)
    dates = [cs.date for cs in market]
    ledger = BacktestLedger(cash=config.initial_capital)
    bench_points = []    # per execution day: dict sid -> open
    for d in sorted(scores_by_day):
        nxt = None
        for i, md_date in enumerate(dates):
            if md_date > d:
                nxt = i
                break
        if nxt is None:
            ledger.warnings.append(f"{d}: no market date after scoring date; "
                                   f"scores not executed")
            continue
        cs = market[nxt]
        day_scores = scores_by_day[d]
        ids = sorted(day_scores)
        weights, tie = build_portfolio([day_scores[s] for s in ids], ids, config)
        if tie:
            ledger.tie_days += 1
        bars = marketdata.open_bars(cs)
        execute_day(ledger, weights, bars, config, cs.date)
        bench_points.append({s: p for s, (p, _) in bars.items()})

    equity = [config.initial_capital] + [e for _, e, _ in ledger.equity_curve]
    port_ret = np.diff(equity) / equity[:-1] if len(equity) > 1 else np.array([])
    bench_ret = []
    for prev, cur in zip(bench_points[:-1], bench_points[1:]):
        common = sorted(set(prev) & set(cur))
        bench_ret.append(np.mean([cur[s] / prev[s] - 1.0 for s in common])
                         if common else 0.0)
    bench_ret = np.array([0.0] + bench_ret) if bench_points else np.array([])

    mdd_abs, mdd_pct = metrics.max_drawdown(equity)
    turnover = []
    for day, (_, eq, _) in zip(_fills_by_day(ledger), ledger.equity_curve):
        turnover.append(sum(abs(f.shares) * f.price for f in day) / eq)
    summary = {
        "accumulated_return_pct": metrics.accumulated_return(equity),
        "information_ratio": (metrics.information_ratio(port_ret, bench_ret)
                              if len(port_ret) >= 2 else None),
        "mdd_abs": mdd_abs,
        "mdd_pct": mdd_pct,
        "mean_turnover": float(np.mean(turnover)) if turnover else 0.0,
        "final_equity": equity[-1],
        "days": len(ledger.equity_curve),
        "tie_days": ledger.tie_days,
    }
    return ledger, summary


def _fills_by_day(ledger: BacktestLedger) -> list:
    by_day: dict = {}
    for f in ledger.fills:
        by_day.setdefault(f.date, []).append(f)
    return [by_day.get(d, []) for d, _, _ in ledger.equity_curve]
