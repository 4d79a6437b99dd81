"""Market data: panel types, normalization, filtering, synthesis, CSV I/O.

A MultiFreqPanel holds one stock's inputs as of one date: a high-frequency
bar matrix covering the trailing `hf_days` trading days, plus a vector of
daily low-frequency fields.  A CrossSection is one date's set of panels with
aligned realized forward returns, where the forward return convention is
open(T+1) to open(T+2): scores are formed at the close of day T, positions
are entered at the next open and held to the open after that.

The synthetic generator stands in for proprietary exchange data.  Returns
are a noisy monotone (linear) function of a per-stock latent score that is
itself embedded in the bars, so tests can measure how much of the planted
structure a model recovers.  Ground-truth scores are returned alongside the
cross-sections.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

HF_FIELDS = ("open", "high", "low", "close", "volume", "vwap")
_OPEN, _HIGH, _LOW, _CLOSE, _VOLUME, _VWAP = range(6)
_PRICE_COLS = (_OPEN, _HIGH, _LOW, _CLOSE, _VWAP)


@dataclass(eq=False, slots=True)
class MultiFreqPanel:
    """One stock's inputs as of one date: hf bars (T, 6) and lf vector (b,)."""

    stock_id: str
    hf: np.ndarray
    lf: np.ndarray
    as_of_date: str
    timestamps: np.ndarray | None = None

    def validate(self) -> None:
        if self.hf.ndim != 2 or self.hf.shape[1] != len(HF_FIELDS):
            raise ValueError(f"{self.stock_id}: hf shape {self.hf.shape} "
                             f"incompatible with fields {HF_FIELDS}")
        if self.lf.ndim != 1:
            raise ValueError(f"{self.stock_id}: lf must be a vector")
        if not np.all(np.isfinite(self.hf)) or not np.all(np.isfinite(self.lf)):
            raise ValueError(f"{self.stock_id}@{self.as_of_date}: non-finite values")
        o, h, lo, c = (self.hf[:, i] for i in (_OPEN, _HIGH, _LOW, _CLOSE))
        if np.any(h < np.maximum(o, c)) or np.any(lo > np.minimum(o, c)):
            raise ValueError(f"{self.stock_id}@{self.as_of_date}: bar price bounds violated")
        if np.any(self.hf[:, _VOLUME] < 0):
            raise ValueError(f"{self.stock_id}@{self.as_of_date}: negative volume")


@dataclass(eq=False, slots=True)
class CrossSection:
    """One date's panels with aligned realized forward returns."""

    date: str
    panels: list
    returns: np.ndarray
    lf_fields: tuple = ()

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=np.float64)
        if len(self.panels) != self.returns.shape[0]:
            raise ValueError(f"{self.date}: {len(self.panels)} panels vs "
                             f"{self.returns.shape[0]} returns")
        if len(self.panels) < 2:
            raise ValueError(f"{self.date}: cross-section needs at least 2 stocks")
        ids = [p.stock_id for p in self.panels]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.date}: duplicate stock ids")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError(f"{self.date}: non-finite returns")

    @property
    def n(self) -> int:
        return len(self.panels)

    def stock_ids(self) -> list:
        return [p.stock_id for p in self.panels]

    def subset(self, idx) -> "CrossSection":
        idx = np.asarray(idx)
        return CrossSection(self.date, [self.panels[i] for i in idx],
                            self.returns[idx], self.lf_fields)


def same_cross_section(a: CrossSection, b: CrossSection) -> bool:
    """Field-by-field equality, used by the CSV round-trip checks."""
    if a.date != b.date or a.lf_fields != b.lf_fields or a.n != b.n:
        return False
    if not np.array_equal(a.returns, b.returns):
        return False
    for pa, pb in zip(a.panels, b.panels):
        if pa.stock_id != pb.stock_id or pa.as_of_date != pb.as_of_date:
            return False
        if not np.array_equal(pa.hf, pb.hf) or not np.array_equal(pa.lf, pb.lf):
            return False
        if pa.timestamps is not None and pb.timestamps is not None:
            if list(pa.timestamps) != list(pb.timestamps):
                return False
    return True


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormalizationState:
    """Per-stock standardization stats for hf, global min-max for lf.

    hf_std entries equal to 0.0 mark fields constant for that stock over the
    fit window; apply_normalizer maps those to zeros.  lf fields constant
    across the whole fit window are dropped (lf_keep mask).
    """

    hf_mean: dict
    hf_std: dict
    lf_min: np.ndarray
    lf_max: np.ndarray
    lf_keep: np.ndarray
    lf_fields: tuple
    fitted_on: tuple
    warnings: list = field(default_factory=list)

    def kept_lf_fields(self) -> tuple:
        return tuple(f for f, k in zip(self.lf_fields, self.lf_keep) if k)


def fit_normalizer(train: list) -> NormalizationState:
    """Compute normalization statistics on the training window only."""
    if not train:
        raise ValueError("fit_normalizer: empty training data")
    a = len(HF_FIELDS)
    count: dict = {}
    s1: dict = {}
    s2: dict = {}
    vmin: dict = {}
    vmax: dict = {}
    lf_fields = train[0].lf_fields
    b = len(lf_fields)
    lf_min = np.full(b, np.inf)
    lf_max = np.full(b, -np.inf)
    for cs in train:
        if cs.lf_fields != lf_fields:
            raise ValueError(f"{cs.date}: lf fields {cs.lf_fields} != {lf_fields}")
        for p in cs.panels:
            sid = p.stock_id
            if sid not in count:
                count[sid] = 0
                s1[sid] = np.zeros(a)
                s2[sid] = np.zeros(a)
                vmin[sid] = np.full(a, np.inf)
                vmax[sid] = np.full(a, -np.inf)
            count[sid] += p.hf.shape[0]
            s1[sid] += p.hf.sum(axis=0)
            s2[sid] += (p.hf * p.hf).sum(axis=0)
            np.minimum(vmin[sid], p.hf.min(axis=0), out=vmin[sid])
            np.maximum(vmax[sid], p.hf.max(axis=0), out=vmax[sid])
        np.minimum(lf_min, np.min([p.lf for p in cs.panels], axis=0), out=lf_min)
        np.maximum(lf_max, np.max([p.lf for p in cs.panels], axis=0), out=lf_max)

    warnings_: list = []
    hf_mean = {}
    hf_std = {}
    for sid, n in count.items():
        mean = s1[sid] / n
        if n > 1:
            var = np.maximum(s2[sid] - n * mean * mean, 0.0) / (n - 1)
        else:
            var = np.zeros(a)
        std = np.sqrt(var)
        const = vmin[sid] == vmax[sid]
        std[const] = 0.0
        hf_mean[sid] = mean
        hf_std[sid] = std
        for j in np.flatnonzero(const):
            warnings_.append(f"hf field '{HF_FIELDS[j]}' constant for stock "
                             f"{sid}; standardized output set to zero")

    lf_keep = lf_min < lf_max
    for j in np.flatnonzero(~lf_keep):
        warnings_.append(f"lf field '{lf_fields[j]}' constant across training "
                         f"data; dropped")
    dates = sorted(cs.date for cs in train)
    return NormalizationState(hf_mean, hf_std, lf_min[lf_keep].copy(),
                              lf_max[lf_keep].copy(), lf_keep, lf_fields,
                              (dates[0], dates[-1]), warnings_)


def apply_normalizer(state: NormalizationState, cs: CrossSection) -> CrossSection:
    """Standardize hf per stock; min-max scale lf then clamp to [0, 1]."""
    if cs.lf_fields != state.lf_fields:
        raise ValueError(f"{cs.date}: unknown lf fields {cs.lf_fields}, "
                         f"normalizer fitted on {state.lf_fields}")
    span = state.lf_max - state.lf_min
    out = []
    for p in cs.panels:
        if p.stock_id not in state.hf_mean:
            raise ValueError(f"stock {p.stock_id} not seen during normalizer fit")
        mean, std = state.hf_mean[p.stock_id], state.hf_std[p.stock_id]
        hf = np.where(std > 0, (p.hf - mean) / np.where(std > 0, std, 1.0), 0.0)
        lf = np.clip((p.lf[state.lf_keep] - state.lf_min) / span, 0.0, 1.0)
        out.append(MultiFreqPanel(p.stock_id, hf, lf, p.as_of_date, p.timestamps))
    return CrossSection(cs.date, out, cs.returns.copy(), state.kept_lf_fields())


def filter_tradable(cs: CrossSection) -> CrossSection:
    """Drop stocks with zero total volume over the panel window."""
    keep = [i for i, p in enumerate(cs.panels) if p.hf[:, _VOLUME].sum() > 0]
    if len(keep) == cs.n:
        return cs
    if len(keep) < 2:
        raise ValueError(f"{cs.date}: fewer than 2 tradable stocks remain")
    return cs.subset(keep)


# ---------------------------------------------------------------------------
# synthetic market


LF_FIELDS = ("size", "trend", "volatility", "turnover")


@dataclass
class SyntheticConfig:
    """Settings for the latent-factor market generator.

    Three AR(1) latents per stock (trend, volatility, liquidity) are combined
    with `latent_weights` into a score; the realized forward return is
    return_scale * score + heavy-tailed noise.  The trend latent drives
    intraday drift, the volatility latent scales bar-level noise, and the
    liquidity latent scales volume, so all three are observable in the bars.
    Noisy copies of the latents also appear as lf fields.
    """

    n_stocks: int = 200
    n_days: int = 120
    bars_per_day: int = 13
    bar_minutes: int = 30
    hf_days: int = 10
    latent_phi: float = 0.9
    latent_weights: tuple = (0.7, 0.2, 0.1)
    drift_scale: float = 0.01
    base_vol: float = 0.015
    vol_scale: float = 0.35
    liq_scale: float = 0.6
    return_scale: float = 0.02
    return_noise: float = 0.018
    noise_df: float = 3.0
    base_price: float = 100.0
    base_volume: float = 1e6
    lf_noise: float = 1.0
    start_date: str = "2020-01-06"

    def validate(self) -> None:
        if self.n_stocks < 2:
            raise ValueError("n_stocks must be >= 2")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        if self.bars_per_day < 2 or self.hf_days < 1 or self.bar_minutes < 1:
            raise ValueError("bars_per_day >= 2, hf_days >= 1, bar_minutes >= 1 required")
        if not (0.0 <= self.latent_phi < 1.0):
            raise ValueError("latent_phi must lie in [0, 1)")
        if len(self.latent_weights) != 3:
            raise ValueError("latent_weights must have 3 entries")
        if self.return_scale <= 0 or self.base_price <= 0 or self.base_volume <= 0:
            raise ValueError("return_scale, base_price, base_volume must be positive")
        for name in ("drift_scale", "base_vol", "vol_scale", "liq_scale",
                     "return_noise", "lf_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.noise_df <= 0:
            raise ValueError("noise_df must be positive")


@dataclass(eq=False)
class SyntheticMarket:
    """Generated cross-sections plus the planted ground truth."""

    cross_sections: list
    truth_scores: np.ndarray     # (n_days, n_stocks), aligned with panel order
    dates: list
    stock_ids: list
    config: SyntheticConfig
    seed: int


def _bar_times(cfg: SyntheticConfig) -> list:
    start = 9 * 60 + 30
    out = []
    for j in range(cfg.bars_per_day):
        m = start + j * cfg.bar_minutes
        out.append(f"T{m // 60:02d}:{m % 60:02d}:00")
    return out


def generate_synthetic_market(config: SyntheticConfig, seed: int) -> SyntheticMarket:
    """Build a reproducible synthetic market from a latent-factor model.

    The same seed always produces bit-identical output.  Forward returns
    satisfy y[d] = open[d+2]/open[d+1] - 1 on the generated open series
    exactly, so a backtest on these prices realizes the same returns that
    training and evaluation see.
    """
    config.validate()
    cfg = config
    rng = np.random.default_rng(seed)
    N, D, B, H = cfg.n_stocks, cfg.n_days, cfg.bars_per_day, cfg.hf_days
    bar_days = H - 1 + D
    n_dates = bar_days + 2
    dates = list(np.datetime_as_string(
        np.busday_offset(cfg.start_date, np.arange(n_dates), roll="forward")))

    phi = cfg.latent_phi
    innov = np.sqrt(1.0 - phi * phi)
    z = np.empty((3, N, bar_days))
    z[:, :, 0] = rng.standard_normal((3, N))
    shocks = rng.standard_normal((3, N, bar_days - 1)) if bar_days > 1 else None
    for t in range(1, bar_days):
        z[:, :, t] = phi * z[:, :, t - 1] + innov * shocks[:, :, t - 1]

    w = np.asarray(cfg.latent_weights, dtype=np.float64)
    score = np.tensordot(w, z, axes=1)                      # (N, bar_days)
    noise = cfg.return_noise * rng.standard_t(cfg.noise_df, (N, bar_days))
    yc = np.clip(cfg.return_scale * score + noise, -0.5, 0.5)

    base_p = cfg.base_price * rng.lognormal(0.0, 0.5, N)
    r = np.empty((N, n_dates - 1))
    r[:, 0] = np.clip(0.01 * rng.standard_normal(N), -0.4, 0.4)
    r[:, 1:] = yc
    opens = np.empty((N, n_dates))
    opens[:, 0] = base_p
    opens[:, 1:] = base_p[:, None] * np.cumprod(1.0 + r, axis=1)

    mu = cfg.drift_scale * z[0]
    sig = cfg.base_vol * np.exp(cfg.vol_scale * z[1])
    lr = (mu[:, :, None] / B
          + sig[:, :, None] / np.sqrt(B) * rng.standard_normal((N, bar_days, B)))
    bars = np.empty((N, bar_days, B, len(HF_FIELDS)))
    bars[..., _CLOSE] = opens[:, :bar_days, None] * np.exp(np.cumsum(lr, axis=2))
    bars[..., _OPEN] = np.concatenate(
        [opens[:, :bar_days, None], bars[:, :, :-1, _CLOSE]], axis=2)
    oc_hi = np.maximum(bars[..., _OPEN], bars[..., _CLOSE])
    oc_lo = np.minimum(bars[..., _OPEN], bars[..., _CLOSE])
    bars[..., _HIGH] = oc_hi * (1.0 + 0.002 * np.abs(rng.standard_normal((N, bar_days, B))))
    bars[..., _LOW] = oc_lo * (1.0 - 0.002 * np.abs(rng.standard_normal((N, bar_days, B))))
    bars[..., _VWAP] = (bars[..., _OPEN] + bars[..., _HIGH]
                        + bars[..., _LOW] + bars[..., _CLOSE]) / 4.0
    base_v = cfg.base_volume * rng.lognormal(0.0, 0.8, N)
    pos = np.linspace(-1.0, 1.0, B)
    profile = 0.7 + 0.9 * pos * pos                          # U-shaped, mean ~1
    bars[..., _VOLUME] = (base_v[:, None, None]
                          * np.exp(cfg.liq_scale * z[2])[:, :, None]
                          * np.exp(0.3 * rng.standard_normal((N, bar_days, B)))
                          * profile[None, None, :])

    cs_idx = np.arange(H - 1, H - 1 + D)
    lf = np.empty((D, N, len(LF_FIELDS)))
    lf[:, :, 0] = np.log(base_v)[None, :]
    for j in range(3):
        lf[:, :, j + 1] = (z[j][:, cs_idx].T
                           + cfg.lf_noise * rng.standard_normal((D, N)))

    stock_ids = [f"S{i:0{max(4, len(str(N - 1)))}d}" for i in range(N)]
    times = _bar_times(cfg)
    day_stamps = [np.array([d + t for t in times]) for d in dates[:bar_days]]

    cross_sections = []
    for d in range(D):
        c = H - 1 + d
        stamps = np.concatenate(day_stamps[c - H + 1:c + 1])
        panels = []
        for i in range(N):
            hf = bars[i, c - H + 1:c + 1].reshape(H * B, len(HF_FIELDS))
            panels.append(MultiFreqPanel(stock_ids[i], hf, lf[d, i],
                                         dates[c], stamps))
        cross_sections.append(CrossSection(dates[c], panels, yc[:, c], LF_FIELDS))

    truth = score[:, cs_idx].T.copy()
    return SyntheticMarket(cross_sections, truth, [dates[c] for c in cs_idx],
                           stock_ids, cfg, seed)


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(cross_sections: list, out_dir: str) -> None:
    """Write hf/lf/returns CSV trees; load_csv reads the same layout.

    hf/<date>/<stock_id>.csv holds that date's bars only; the loader
    reassembles trailing windows.  lf and returns files exist per
    cross-section date.
    """
    hf_rows: dict = {}
    for cs in sorted(cross_sections, key=lambda c: c.date):
        for p in cs.panels:
            if p.timestamps is None:
                raise ValueError(f"panel {p.stock_id}@{p.as_of_date} lacks "
                                 f"timestamps; cannot place bars into dates")
            days = np.array([t[:10] for t in p.timestamps])
            for d in dict.fromkeys(days):
                key = (d, p.stock_id)
                if key in hf_rows:
                    continue
                mask = days == d
                hf_rows[key] = list(zip(np.asarray(p.timestamps)[mask],
                                        p.hf[mask]))

    for (d, sid), rows in hf_rows.items():
        path = os.path.join(out_dir, "hf", d)
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, f"{sid}.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(("timestamp",) + HF_FIELDS)
            for ts, vals in rows:
                wr.writerow([ts] + [_fmt(v) for v in vals])

    os.makedirs(os.path.join(out_dir, "lf"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "returns"), exist_ok=True)
    for cs in cross_sections:
        with open(os.path.join(out_dir, "lf", f"{cs.date}.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(("stock_id",) + tuple(cs.lf_fields))
            for p in cs.panels:
                wr.writerow([p.stock_id] + [_fmt(v) for v in p.lf])
        with open(os.path.join(out_dir, "returns", f"{cs.date}.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(("stock_id", "forward_return"))
            for p, y in zip(cs.panels, cs.returns):
                wr.writerow([p.stock_id, _fmt(y)])


def _read_table(path: str, required: tuple) -> tuple:
    """Read a CSV into (header, rows of str); validate required columns."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ValueError(f"{path}: missing mandatory columns {missing}")
        rows = []
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} "
                                 f"fields, got {len(row)}")
            rows.append((lineno, row))
    return header, rows


def _parse_float(path: str, lineno: int, col: str, text: str) -> float:
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: bad {col} value {text!r}") from None


def _load_bars(path: str) -> tuple:
    """One day's bars for one stock: (timestamps, values (B, 6)), sorted."""
    header, rows = _read_table(path, ("timestamp",) + HF_FIELDS)
    pos = {c: header.index(c) for c in ("timestamp",) + HF_FIELDS}
    if not rows:
        raise ValueError(f"{path}: no bar rows")
    stamps = []
    vals = np.empty((len(rows), len(HF_FIELDS)))
    for r, (lineno, row) in enumerate(rows):
        stamps.append(row[pos["timestamp"]])
        for j, c in enumerate(HF_FIELDS):
            vals[r, j] = _parse_float(path, lineno, c, row[pos[c]])
    order = np.argsort(np.array(stamps, dtype="datetime64[s]"), kind="stable")
    return np.array(stamps)[order], vals[order]


def _fill_gaps(vals: np.ndarray) -> np.ndarray:
    """Forward-fill price columns; zero-fill volume and leading gaps."""
    out = vals.copy()
    nan_vol = np.isnan(out[:, _VOLUME])
    out[nan_vol, _VOLUME] = 0.0
    for j in _PRICE_COLS:
        col = out[:, j]
        holes = np.isnan(col)
        if not holes.any():
            continue
        idx = np.where(holes, 0, np.arange(col.shape[0]))
        np.maximum.accumulate(idx, out=idx)
        col[:] = col[idx]
        col[np.isnan(col)] = 0.0
    return out


def load_csv(root: str, hf_days: int = 10) -> list:
    """Assemble CrossSections from the documented CSV tree.

    A cross-section is emitted for every date that has a returns file and at
    least `hf_days` dates of bar history (its own date included).  A stock
    joins a date's cross-section when it has bars for every window date plus
    lf and returns rows.
    """
    hf_root = os.path.join(root, "hf")
    if not os.path.isdir(hf_root):
        raise ValueError(f"{root}: missing hf/ directory")
    dates = sorted(d for d in os.listdir(hf_root)
                   if os.path.isdir(os.path.join(hf_root, d)))
    if not dates:
        raise ValueError(f"{root}: no date directories under hf/")

    stocks_by_date = {d: {f[:-4] for f in os.listdir(os.path.join(hf_root, d))
                          if f.endswith(".csv")} for d in dates}
    bar_cache: dict = {}

    def bars_for(date: str, sid: str) -> tuple:
        key = (date, sid)
        if key not in bar_cache:
            stamps, vals = _load_bars(os.path.join(hf_root, date, f"{sid}.csv"))
            bar_cache[key] = (stamps, _fill_gaps(vals))
        return bar_cache[key]

    lf_fields: tuple | None = None
    out = []
    for i, date in enumerate(dates):
        ret_path = os.path.join(root, "returns", f"{date}.csv")
        if i < hf_days - 1 or not os.path.isfile(ret_path):
            continue
        lf_path = os.path.join(root, "lf", f"{date}.csv")
        if not os.path.isfile(lf_path):
            raise ValueError(f"{lf_path}: missing lf file for return date {date}")
        header, rows = _read_table(lf_path, ("stock_id",))
        fields = tuple(c for c in header if c != "stock_id")
        if lf_fields is None:
            lf_fields = fields
        elif fields != lf_fields:
            raise ValueError(f"{lf_path}: lf fields {fields} != {lf_fields}")
        sid_pos = header.index("stock_id")
        lf_map = {}
        for lineno, row in rows:
            vec = np.array([_parse_float(lf_path, lineno, c, row[header.index(c)])
                            for c in fields])
            lf_map[row[sid_pos]] = vec
        _, ret_rows = _read_table(ret_path, ("stock_id", "forward_return"))
        ret_map = {row[0]: _parse_float(ret_path, lineno, "forward_return", row[1])
                   for lineno, row in ret_rows}

        window = dates[i - hf_days + 1:i + 1]
        members = set(ret_map) & set(lf_map)
        for d in window:
            members &= stocks_by_date[d]
        members = sorted(members)
        if len(members) < 2:
            raise ValueError(f"{date}: fewer than 2 stocks with complete data")

        panels = []
        for sid in members:
            parts = [bars_for(d, sid) for d in window]
            stamps = np.concatenate([p[0] for p in parts])
            hf = np.concatenate([p[1] for p in parts], axis=0)
            panel = MultiFreqPanel(sid, hf, lf_map[sid], date, stamps)
            panel.validate()
            panels.append(panel)
        returns = np.array([ret_map[s] for s in members])
        out.append(CrossSection(date, panels, returns, lf_fields))
    if not out:
        raise ValueError(f"{root}: no complete cross-sections "
                         f"(need {hf_days} days of bars plus returns files)")
    return out


def save_normalizer(path: str, state: NormalizationState) -> None:
    """Persist normalization statistics (atomic write)."""
    import json

    ids = sorted(state.hf_mean)
    meta = {
        "stock_ids": ids,
        "lf_fields": list(state.lf_fields),
        "lf_keep": [bool(k) for k in state.lf_keep],
        "fitted_on": list(state.fitted_on),
        "warnings": state.warnings,
    }
    mean = np.stack([state.hf_mean[s] for s in ids]) if ids else np.zeros((0, 6))
    std = np.stack([state.hf_std[s] for s in ids]) if ids else np.zeros((0, 6))
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), hf_mean=mean,
                 hf_std=std, lf_min=state.lf_min, lf_max=state.lf_max)
    os.replace(tmp, path)


def load_normalizer(path: str) -> NormalizationState:
    import json

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        mean, std = z["hf_mean"], z["hf_std"]
        lf_min, lf_max = z["lf_min"], z["lf_max"]
    ids = meta["stock_ids"]
    return NormalizationState(
        hf_mean={s: mean[i] for i, s in enumerate(ids)},
        hf_std={s: std[i] for i, s in enumerate(ids)},
        lf_min=lf_min, lf_max=lf_max,
        lf_keep=np.array(meta["lf_keep"], dtype=bool),
        lf_fields=tuple(meta["lf_fields"]),
        fitted_on=tuple(meta["fitted_on"]),
        warnings=list(meta["warnings"]))


def open_bars(cs: CrossSection) -> dict:
    """First bar of the as-of date per stock: stock_id -> (open, volume).

    This is the execution bar for a portfolio formed at the previous close.
    """
    out = {}
    for p in cs.panels:
        if p.timestamps is None:
            raise ValueError(f"{p.stock_id}@{cs.date}: timestamps required")
        days = np.array([t[:10] for t in p.timestamps])
        rows = np.flatnonzero(days == cs.date)
        if rows.size == 0:
            raise ValueError(f"{p.stock_id}@{cs.date}: no bars on as-of date")
        r = rows[0]
        out[p.stock_id] = (float(p.hf[r, _OPEN]), float(p.hf[r, _VOLUME]))
    return out
