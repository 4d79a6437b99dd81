import numpy as np
import pytest

from xsrank import features as ft
from xsrank import marketdata as md

from factories import make_panel


def test_realized_variance():
    assert ft.realized_variance([0.0, 0.0, 0.0]) == 0.0
    assert ft.realized_variance([0.01, -0.01]) == pytest.approx(0.0002, rel=1e-12)
    rng = np.random.default_rng(3)
    r = rng.normal(0, 0.01, size=13)
    assert ft.realized_variance(r) == pytest.approx(sum(x * x for x in r), rel=1e-14)


def test_realized_skewness():
    # the odd sum cancels; numpy's pow leaves sub-ulp dust, nothing more
    assert abs(ft.realized_skewness([0.01, -0.01])) < 1e-15
    assert ft.realized_skewness([0.02]) == pytest.approx(1.0, rel=1e-12)
    assert ft.realized_skewness([-0.02]) == pytest.approx(-1.0, rel=1e-12)
    assert ft.realized_skewness([0.0, 0.0]) is None
    rng = np.random.default_rng(5)
    r = rng.normal(0, 0.01, size=13)
    n = len(r)
    want = np.sqrt(n) * sum(x ** 3 for x in r) / sum(x * x for x in r) ** 1.5
    assert ft.realized_skewness(r) == pytest.approx(want, rel=1e-12)


def test_realized_kurtosis():
    assert ft.realized_kurtosis([0.02]) == pytest.approx(1.0, rel=1e-12)
    assert ft.realized_kurtosis([0.01, 0.01]) == pytest.approx(1.0, rel=1e-12)
    assert ft.realized_kurtosis([0.0]) is None
    rng = np.random.default_rng(7)
    r = rng.normal(0, 0.01, size=13)
    n = len(r)
    want = n * sum(x ** 4 for x in r) / sum(x * x for x in r) ** 2
    assert ft.realized_kurtosis(r) == pytest.approx(want, rel=1e-12)
    assert ft.realized_kurtosis(r) >= 1.0  # power-mean inequality floor


def test_scale_invariance_of_shape_factors():
    rng = np.random.default_rng(9)
    r = rng.normal(0, 0.01, size=10)
    for c in (2.0, 0.5, 7.3):
        assert ft.realized_skewness(c * r) == pytest.approx(
            ft.realized_skewness(r), rel=1e-10)
        assert ft.realized_kurtosis(c * r) == pytest.approx(
            ft.realized_kurtosis(r), rel=1e-10)


def test_downside_beta():
    assert ft.downside_beta([-0.01, -0.02]) == 1.0
    assert ft.downside_beta([0.01, 0.02]) == 0.0
    assert ft.downside_beta([0.0, 0.0]) is None
    rng = np.random.default_rng(11)
    r = rng.normal(0, 0.01, size=13)
    beta = ft.downside_beta(r)
    assert 0.0 <= beta <= 1.0
    upside = np.sum(r * r * (r > 0)) / np.sum(r * r)
    assert beta + upside == pytest.approx(1.0, abs=1e-15)


def test_trend_strength():
    assert ft.trend_strength([1.0, 2.0, 3.0]) == 1.0
    assert ft.trend_strength([3.0, 2.0, 1.0]) == -1.0
    assert ft.trend_strength([1.0, 2.0, 1.0]) == 0.0
    assert ft.trend_strength([1.0, 3.0, 2.0]) == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert ft.trend_strength([5.0, 5.0, 5.0]) is None
    assert ft.trend_strength([1.0, 3.0, 2.0]) == ft.trend_strength([2.0, 6.0, 4.0])
    with pytest.raises(ValueError):
        ft.trend_strength([1.0])


def test_flow_in_ratio_hand_case():
    volume = [10.0, 20.0]
    close = [2.0, 3.0]
    amount = [30.0, 40.0]
    # numerator: 20 * 3 * |3-2| / 70; denominator substitutes volume for OI:
    # |20-10| * 3 = 30
    want = (60.0 / 70.0) / 30.0
    assert ft.flow_in_ratio(volume, close, amount) == pytest.approx(want, rel=1e-15)
    with_oi = ft.flow_in_ratio(volume, close, amount, oi=[5.0, 9.0])
    assert with_oi == pytest.approx((60.0 / 70.0) / 12.0, rel=1e-15)


def test_flow_in_ratio_undefined_cases():
    assert ft.flow_in_ratio([1.0, 1.0], [2.0, 3.0], [0.0, 0.0]) is None
    # constant OI gives a zero denominator
    assert ft.flow_in_ratio([1.0, 1.0], [2.0, 3.0], [1.0, 1.0],
                            oi=[4.0, 4.0]) is None
    with pytest.raises(ValueError):
        ft.flow_in_ratio([1.0], [2.0], [3.0])
    with pytest.raises(ValueError):
        ft.flow_in_ratio([1.0, 2.0], [2.0, 3.0], [1.0, 1.0], oi=[1.0])


def test_factor_row_uses_only_as_of_day_bars():
    p = make_panel("A", t=8, dates=["2020-01-09", "2020-01-10"], seed=13)
    row = ft.factor_row(p)
    assert row.date == "2020-01-10"
    assert row.stock_id == "A"
    assert row.oi_substituted
    close_col = md.HF_FIELDS.index("close")
    vol_col = md.HF_FIELDS.index("volume")
    vwap_col = md.HF_FIELDS.index("vwap")
    day = p.hf[4:]                      # last 4 bars belong to the as-of date
    r = np.diff(day[:, close_col]) / day[:-1, close_col]
    assert row.rvar == pytest.approx(ft.realized_variance(r), rel=1e-12)
    assert row.trend_strength == pytest.approx(
        ft.trend_strength(day[:, close_col]), rel=1e-12)
    want_fir = ft.flow_in_ratio(day[:, vol_col], day[:, close_col],
                                day[:, vol_col] * day[:, vwap_col])
    assert row.flow_in_ratio == pytest.approx(want_fir, rel=1e-12)
    with_oi = ft.factor_row(p, oi=np.arange(4.0))
    assert not with_oi.oi_substituted


def test_factor_row_requires_timestamps():
    p = make_panel("A")
    p.timestamps = None
    with pytest.raises(ValueError):
        ft.factor_row(p)
    q = make_panel("B")
    q.as_of_date = "1999-01-01"
    with pytest.raises(ValueError):
        ft.factor_row(q)


def test_factor_rows_on_synthetic_market_respect_invariants():
    cfg = md.SyntheticConfig(n_stocks=8, n_days=4, bars_per_day=6, hf_days=3)
    mkt = md.generate_synthetic_market(cfg, seed=17)
    for cs in mkt.cross_sections:
        rows = ft.factor_rows(cs)
        assert [r.stock_id for r in rows] == cs.stock_ids()
        for row in rows:
            assert row.rvar >= 0.0
            if row.rkurt is not None:
                assert row.rkurt >= 1.0
            if row.downside_beta is not None:
                assert 0.0 <= row.downside_beta <= 1.0
            if row.trend_strength is not None:
                assert -1.0 <= row.trend_strength <= 1.0
