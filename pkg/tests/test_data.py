"""Panel loading, universe selection, and the synthetic generator."""

import numpy as np
import pytest

from quantfolio.data import (
    MarketSeries,
    ReturnsPanel,
    SyntheticSpec,
    generate_synthetic_panel,
    load_market_series,
    load_returns_panel,
    returns_at,
    select_universe,
)
from quantfolio.errors import (
    ConfigValidationError,
    DataValidationError,
    InsufficientDataError,
    InsufficientUniverseError,
)
from quantfolio.months import format_month, parse_month


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadReturnsPanel:
    def test_three_rows(self, tmp_path):
        path = write(tmp_path, "r.csv",
                     "date,asset_id,excess_return,market_cap\n"
                     "2020-01,AAPL,0.02,100\n"
                     "2020-01,MSFT,-0.01,90\n"
                     "2020-02,AAPL,0.01,101\n")
        panel = load_returns_panel(path)
        assert panel.n_assets == 2
        assert list(panel.observations()) == [
            (parse_month("2020-01"), "AAPL", 0.02, 100.0),
            (parse_month("2020-01"), "MSFT", -0.01, 90.0),
            (parse_month("2020-02"), "AAPL", 0.01, 101.0),
        ]

    def test_duplicate_key(self, tmp_path):
        path = write(tmp_path, "r.csv",
                     "date,asset_id,excess_return,market_cap\n"
                     "2020-01,AAPL,0.02,100\n"
                     "2020-01,AAPL,0.03,100\n")
        with pytest.raises(DataValidationError, match=r"2020-01, AAPL"):
            load_returns_panel(path)

    def test_negative_cap(self, tmp_path):
        path = write(tmp_path, "r.csv",
                     "date,asset_id,excess_return,market_cap\n"
                     "2020-01,AAPL,0.02,-5\n")
        with pytest.raises(DataValidationError, match="market_cap"):
            load_returns_panel(path)

    def test_gap_within_span(self, tmp_path):
        path = write(tmp_path, "r.csv",
                     "date,asset_id,excess_return,market_cap\n"
                     "2020-01,AAPL,0.02,100\n"
                     "2020-03,AAPL,0.01,100\n")
        with pytest.raises(DataValidationError, match="missing month 2020-02"):
            load_returns_panel(path)

    def test_malformed_value_reports_line(self, tmp_path):
        path = write(tmp_path, "r.csv",
                     "date,asset_id,excess_return,market_cap\n"
                     "2020-01,AAPL,0.02,100\n"
                     "2020-02,AAPL,oops,100\n")
        with pytest.raises(DataValidationError, match="line 3"):
            load_returns_panel(path)

    def test_bad_header(self, tmp_path):
        path = write(tmp_path, "r.csv", "a,b\n1,2\n")
        with pytest.raises(DataValidationError, match="header"):
            load_returns_panel(path)

    def test_round_trip(self, tmp_path):
        spec = SyntheticSpec(n_assets=7, n_months=14, seed=5)
        panel, _, _ = generate_synthetic_panel(spec)
        out = tmp_path / "echo.csv"
        panel.to_csv(out)
        assert load_returns_panel(out) == panel


class TestLoadMarketSeries:
    def test_contiguous(self, tmp_path):
        rows = "".join(f"2020-{m:02d},0.0{m}\n" for m in range(1, 13))
        path = write(tmp_path, "m.csv", "date,market_excess_return\n" + rows)
        series = load_market_series(path)
        assert series.n_months == 12
        assert series.values[2] == 0.03

    def test_gap(self, tmp_path):
        path = write(tmp_path, "m.csv",
                     "date,market_excess_return\n2020-01,0.01\n2020-03,0.02\n")
        with pytest.raises(DataValidationError, match="2020-02"):
            load_market_series(path)

    def test_duplicate_date(self, tmp_path):
        path = write(tmp_path, "m.csv",
                     "date,market_excess_return\n2020-01,0.01\n2020-01,0.02\n")
        with pytest.raises(DataValidationError, match="duplicate"):
            load_market_series(path)

    def test_empty_file(self, tmp_path):
        path = write(tmp_path, "m.csv", "")
        with pytest.raises(DataValidationError, match="empty"):
            load_market_series(path)

    def test_header_only(self, tmp_path):
        path = write(tmp_path, "m.csv", "date,market_excess_return\n")
        with pytest.raises(DataValidationError, match="no data rows"):
            load_market_series(path)

    def test_window(self):
        series = MarketSeries(parse_month("2020-01"), np.arange(6) / 100)
        win = series.window(parse_month("2020-02"), parse_month("2020-05"))
        assert np.array_equal(win, np.array([0.01, 0.02, 0.03]))
        with pytest.raises(InsufficientDataError):
            series.window(parse_month("2019-12"), parse_month("2020-02"))


def panel_from_matrix(start, ids, rets, caps):
    return ReturnsPanel(parse_month(start), ids, np.asarray(rets, float),
                        np.asarray(caps, float))


class TestSelectUniverse:
    def make_panel(self, n_assets=5, n_months=10, start="2020-01", seed=0):
        rng = np.random.default_rng(seed)
        rets = rng.normal(0, 0.05, (n_months, n_assets))
        caps = rng.uniform(10, 100, (n_months, n_assets))
        ids = tuple(f"A{i}" for i in range(n_assets))
        return panel_from_matrix(start, ids, rets, caps)

    def test_descending_cap_order(self):
        panel = self.make_panel()
        date = panel.start_month + 6
        snap = select_universe(panel, date, 6, 3)
        caps_prev = panel.caps[5]  # month before `date`
        order = np.argsort(-caps_prev, kind="stable")[:3]
        assert snap.asset_ids == tuple(panel.asset_ids[j] for j in order)
        assert np.all(np.diff(snap.caps) <= 0)
        assert snap.window.shape == (3, 6)

    def test_cap_tie_breaks_lexicographic(self):
        rets = np.zeros((5, 3)) + 0.01
        caps = np.full((5, 3), 7.0)
        panel = panel_from_matrix("2020-01", ("B", "A", "C"), rets, caps)
        snap = select_universe(panel, panel.start_month + 4, 4, 3)
        assert snap.asset_ids == ("A", "B", "C")

    def test_incomplete_history_excluded(self):
        rng = np.random.default_rng(1)
        rets = rng.normal(0, 0.05, (10, 3))
        caps = rng.uniform(10, 100, (10, 3))
        rets[2, 1] = np.nan  # hole inside asset 1's window
        caps[2, 1] = np.nan
        panel = panel_from_matrix("2020-01", ("A", "B", "C"), rets, caps)
        snap = select_universe(panel, panel.start_month + 8, 8, 2)
        assert "B" not in snap.asset_ids

    def test_insufficient_universe(self):
        panel = self.make_panel(n_assets=4)
        with pytest.raises(InsufficientUniverseError) as exc:
            select_universe(panel, panel.start_month + 6, 6, 5)
        assert exc.value.eligible == 4

    def test_no_look_ahead(self):
        panel = self.make_panel(n_assets=6, n_months=12, seed=3)
        date = panel.start_month + 8
        snap = select_universe(panel, date, 8, 4)
        rets = panel.returns.copy()
        caps = panel.caps.copy()
        rets[8:] = 99.0  # mangle everything at and after `date`
        caps[8:] = 1e-9
        mutated = ReturnsPanel(panel.start_month, panel.asset_ids, rets, caps)
        snap2 = select_universe(mutated, date, 8, 4)
        assert snap.asset_ids == snap2.asset_ids
        assert np.array_equal(snap.window, snap2.window)
        assert np.array_equal(snap.caps, snap2.caps)

    def test_window_needs_history(self):
        panel = self.make_panel(n_months=5)
        with pytest.raises(InsufficientDataError):
            select_universe(panel, panel.start_month + 3, 6, 2)

    def test_returns_at(self):
        panel = self.make_panel()
        vals = returns_at(panel, panel.start_month + 2, ("A3", "A0"))
        assert vals[0] == panel.returns[2, 3]
        assert vals[1] == panel.returns[2, 0]


class TestSyntheticGenerator:
    def test_deterministic(self):
        spec = SyntheticSpec(n_assets=10, n_months=24, seed=42)
        p1, m1, t1 = generate_synthetic_panel(spec)
        p2, m2, t2 = generate_synthetic_panel(spec)
        assert p1 == p2
        assert np.array_equal(m1.values, m2.values)
        assert np.array_equal(t1.beta, t2.beta)

    def test_degenerate_specs(self):
        with pytest.raises(ConfigValidationError):
            generate_synthetic_panel(SyntheticSpec(n_assets=1, n_months=24))
        with pytest.raises(ConfigValidationError):
            generate_synthetic_panel(SyntheticSpec(n_assets=5, n_months=1))

    def test_near_perfect_market_correlation(self):
        # beta fixed at one, negligible noise: sample slope must sit at one
        spec = SyntheticSpec(n_assets=4, n_months=600, seed=9,
                             beta_range=(1.0, 1.0),
                             idio_vol_range=(0.0001, 0.0001))
        panel, market, _ = generate_synthetic_panel(spec)
        m = market.values
        mc = m - m.mean()
        for j in range(panel.n_assets):
            r = panel.returns[:, j]
            beta_hat = (r - r.mean()) @ mc / (mc @ mc)
            assert abs(beta_hat - 1.0) < 0.05

    def test_ols_recovers_ground_truth(self):
        spec = SyntheticSpec(n_assets=12, n_months=600, seed=17)
        panel, market, truth = generate_synthetic_panel(spec)
        m = market.values
        mc = m - m.mean()
        ssm = mc @ mc
        for j in range(panel.n_assets):
            r = panel.returns[:, j]
            beta_hat = (r - r.mean()) @ mc / ssm
            resid = (r - r.mean()) - beta_hat * mc
            se = np.sqrt(resid @ resid / (len(m) - 2) / ssm)
            assert abs(beta_hat - truth.beta[j]) <= 3.0 * se

    def test_caps_constant_per_asset(self):
        panel, _, _ = generate_synthetic_panel(
            SyntheticSpec(n_assets=6, n_months=10, seed=1))
        assert np.all(panel.caps == panel.caps[0])

    def test_month_formatting(self):
        assert format_month(parse_month("1999-12")) == "1999-12"
        with pytest.raises(ValueError):
            parse_month("1999-13")
        with pytest.raises(ValueError):
            parse_month("december 1999")
