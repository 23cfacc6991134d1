"""Estimators, shrinkage maps, and the structured covariance algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantfolio.data import UniverseSnapshot
from quantfolio.errors import EngineError
from quantfolio.riskmodels import (
    ConstantCorrelationModel,
    FactorModel,
    ShrunkSampleModel,
    cov_matvec,
    estimate_constant_correlation,
    estimate_shrunk_sample,
    estimate_single_factor,
    materialize,
    model_volatilities,
    shrink_beta,
    shrink_log_variances,
)


def snapshot_from_window(window):
    window = np.asarray(window, dtype=np.float64)
    n = window.shape[0]
    return UniverseSnapshot(date=600, asset_ids=tuple(f"A{i}" for i in range(n)),
                            window=window, caps=np.ones(n))


def random_snapshot(rng, n, t):
    mkt = rng.normal(0, 0.045, t)
    window = (rng.uniform(0.5, 1.5, n)[:, None] * mkt[None, :]
              + rng.normal(0, 0.08, (n, t)))
    return snapshot_from_window(window), mkt


class TestShrinkBeta:
    def test_fixed_point(self):
        assert abs(shrink_beta(1.0) - 1.0) < 1e-12

    def test_zero(self):
        assert abs(shrink_beta(0.0) - 1.0 / 3.0) < 1e-12

    def test_one_point_six(self):
        assert abs(shrink_beta(1.6) - 1.4) < 1e-12

    @given(st.floats(-50, 50))
    def test_affine_slope_two_thirds(self, t):
        assert shrink_beta(1.0 + t) - 1.0 == pytest.approx((2.0 / 3.0) * t,
                                                           abs=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(EngineError):
            shrink_beta(float("nan"))
        with pytest.raises(EngineError):
            shrink_beta(np.inf)

    def test_vectorized(self):
        out = shrink_beta(np.array([0.0, 1.0, 1.6]))
        assert np.allclose(out, [1.0 / 3.0, 1.0, 1.4], atol=1e-12)


class TestShrinkLogVariances:
    def test_constant_is_identity(self):
        out = shrink_log_variances(np.full(5, 0.37))
        assert out == pytest.approx(np.full(5, 0.37), rel=1e-14)

    def test_single_element(self):
        assert shrink_log_variances([0.2]) == pytest.approx([0.2], rel=1e-14)

    def test_arithmetic_oracle(self):
        x = np.array([0.1, 0.1, 0.8])
        mean_log = np.log(x).mean()
        expected = np.exp((2.0 / 3.0) * np.log(x) + mean_log / 3.0)
        assert shrink_log_variances(x) == pytest.approx(expected, rel=1e-14)
        # shrinkage preserves the mean of the logs
        out = shrink_log_variances(x)
        assert np.log(out).mean() == pytest.approx(mean_log, abs=1e-12)

    @given(st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=40))
    @settings(max_examples=200)
    def test_mean_log_preserved_and_monotone(self, values):
        x = np.asarray(values)
        out = shrink_log_variances(x)
        assert np.log(out).mean() == pytest.approx(np.log(x).mean(),
                                                   abs=1e-9)
        order = np.argsort(x, kind="stable")
        assert np.all(np.diff(out[order]) >= -1e-15)

    def test_volatility_variance_consistency(self):
        # shrinking vols then squaring equals shrinking the variances
        vols = np.array([0.05, 0.11, 0.4])
        via_vols = shrink_log_variances(vols) ** 2
        via_vars = shrink_log_variances(vols ** 2)
        assert via_vols == pytest.approx(via_vars, rel=1e-13)

    def test_rejects_non_positive(self):
        with pytest.raises(EngineError):
            shrink_log_variances([0.1, 0.0])


class TestEstimateSingleFactor:
    def test_hand_solved_normal_equations(self):
        mkt = np.array([0.01, -0.01, 0.02, 0.005, -0.02, 0.015])
        window = np.array([
            [0.012, -0.008, 0.024, 0.004, -0.022, 0.018],
            [-0.004, 0.011, -0.013, 0.002, 0.015, -0.009],
        ])
        model = estimate_single_factor(snapshot_from_window(window), mkt)
        t = mkt.size
        for i in range(2):
            # normal equations solved from scratch
            sm, sr = mkt.sum(), window[i].sum()
            smm, smr = (mkt * mkt).sum(), (mkt * window[i]).sum()
            beta_hat = (smr - sm * sr / t) / (smm - sm * sm / t)
            alpha_hat = sr / t - beta_hat * sm / t
            resid = window[i] - alpha_hat - beta_hat * mkt
            omega2 = resid @ resid / (t - 2)
            assert model.b[i] == pytest.approx(shrink_beta(beta_hat),
                                               abs=1e-12)
            expected_d = shrink_log_variances(
                np.maximum(np.array([omega2_for(window[j], mkt)
                                     for j in range(2)]), 1e-10))
            assert model.d[i] == pytest.approx(expected_d[i], rel=1e-12)
        assert model.sigma_f2 == pytest.approx(mkt.var(ddof=1), rel=1e-14)

    def test_perfect_fit_floors_variance(self):
        mkt = np.array([0.01, -0.02, 0.03, 0.0, 0.01, -0.015])
        window = np.vstack([mkt, mkt])
        model = estimate_single_factor(snapshot_from_window(window), mkt)
        assert model.b == pytest.approx([1.0, 1.0], abs=1e-12)
        assert model.d == pytest.approx([1e-10, 1e-10], rel=1e-9)

    def test_synthetic_beta_one(self):
        rng = np.random.default_rng(7)
        t = 600
        mkt = rng.normal(0, 0.045, t)
        window = mkt[None, :] + rng.normal(0, 0.01, (5, t))
        model = estimate_single_factor(snapshot_from_window(window), mkt)
        assert np.all(np.abs(model.b - 1.0) < 0.05)

    def test_zero_market_variance(self):
        window = np.random.default_rng(0).normal(0, 0.05, (3, 12))
        with pytest.raises(EngineError, match="zero variance"):
            estimate_single_factor(snapshot_from_window(window),
                                   np.zeros(12))


def omega2_for(series, mkt):
    t = mkt.size
    mc = mkt - mkt.mean()
    beta = (series - series.mean()) @ mc / (mc @ mc)
    resid = (series - series.mean()) - beta * mc
    return resid @ resid / (t - 2)


class TestEstimateConstantCorrelation:
    def test_identical_windows_clamped(self):
        base = np.array([0.01, -0.02, 0.035, -0.01, 0.02, 0.005])
        model = estimate_constant_correlation(
            snapshot_from_window(np.vstack([base, base])))
        assert model.rho == 1.0 - 1e-6

    def test_pairwise_mean_oracle(self):
        rng = np.random.default_rng(3)
        window = rng.normal(0, 0.06, (4, 40))
        model = estimate_constant_correlation(snapshot_from_window(window))
        corrs = []
        for i in range(4):
            for j in range(i + 1, 4):
                corrs.append(np.corrcoef(window[i], window[j])[0, 1])
        assert model.rho == pytest.approx(np.mean(corrs), abs=1e-12)

    def test_uncorrelated_rho_near_zero(self):
        rng = np.random.default_rng(11)
        t = 2000
        window = rng.normal(0, 0.05, (10, t))
        model = estimate_constant_correlation(snapshot_from_window(window))
        assert abs(model.rho) <= 3.0 / np.sqrt(t)

    def test_sigma_is_shrunk_sample_vol(self):
        rng = np.random.default_rng(5)
        window = rng.normal(0, 0.07, (3, 30))
        model = estimate_constant_correlation(snapshot_from_window(window))
        vols = np.sqrt(window.var(axis=1, ddof=1))
        assert model.sigma == pytest.approx(shrink_log_variances(vols),
                                            rel=1e-13)

    def test_needs_two_assets(self):
        with pytest.raises(EngineError):
            estimate_constant_correlation(
                snapshot_from_window(np.random.default_rng(0)
                                     .normal(0, 0.05, (1, 12))))


class TestEstimateShrunkSample:
    def sample_cov_oracle(self, window):
        n, t = window.shape
        s = np.zeros((n, n))
        means = window.mean(axis=1)
        for i in range(n):
            for j in range(n):
                s[i, j] = ((window[i] - means[i])
                           @ (window[j] - means[j])) / (t - 1)
        return s

    def test_delta_zero_is_sample_covariance(self):
        rng = np.random.default_rng(2)
        window = rng.normal(0, 0.06, (3, 24))
        model = estimate_shrunk_sample(snapshot_from_window(window), delta=0.0)
        assert model.v == pytest.approx(self.sample_cov_oracle(window),
                                        rel=1e-12)

    def test_delta_one_is_target(self):
        rng = np.random.default_rng(4)
        window = rng.normal(0, 0.06, (3, 24))
        model = estimate_shrunk_sample(snapshot_from_window(window), delta=1.0)
        s = self.sample_cov_oracle(window)
        vols = np.sqrt(np.diag(s))
        corr = s / np.outer(vols, vols)
        rho_bar = (corr.sum() - 3.0) / 6.0
        target = rho_bar * np.outer(vols, vols)
        np.fill_diagonal(target, np.diag(s))
        assert model.v == pytest.approx(target, rel=1e-12)

    def test_one_third_blend_hand_computed(self):
        rng = np.random.default_rng(6)
        window = rng.normal(0, 0.06, (3, 24))
        s = self.sample_cov_oracle(window)
        vols = np.sqrt(np.diag(s))
        corr = s / np.outer(vols, vols)
        rho_bar = (corr.sum() - 3.0) / 6.0
        f = rho_bar * np.outer(vols, vols)
        np.fill_diagonal(f, np.diag(s))
        expected = f / 3.0 + 2.0 * s / 3.0
        model = estimate_shrunk_sample(snapshot_from_window(window))
        assert model.delta == pytest.approx(1.0 / 3.0)
        assert model.v == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(8)
        window = rng.normal(0, 0.06, (4, 30))
        v1 = estimate_shrunk_sample(snapshot_from_window(window)).v
        v2 = estimate_shrunk_sample(snapshot_from_window(3.0 * window)).v
        assert v2 == pytest.approx(9.0 * v1, rel=1e-12)

    def test_delta_validated(self):
        window = np.random.default_rng(0).normal(0, 0.05, (3, 12))
        with pytest.raises(EngineError, match="delta"):
            estimate_shrunk_sample(snapshot_from_window(window), delta=1.5)

    def test_psd_repair_clips_eigenvalues(self):
        rng = np.random.default_rng(10)
        window = rng.normal(0, 0.05, (12, 6))  # rank-deficient: T < n
        raw = estimate_shrunk_sample(snapshot_from_window(window), delta=0.0)
        w_raw = np.linalg.eigvalsh(raw.v)
        assert w_raw.min() >= -1e-8 * w_raw.max()
        assert not raw.psd_repaired
        repaired = estimate_shrunk_sample(snapshot_from_window(window),
                                          delta=0.0, psd_repair=True)
        w_rep = np.linalg.eigvalsh(repaired.v)
        assert w_rep.min() >= 0.0
        assert repaired.psd_repaired


def random_models(rng, count, max_n=200):
    for _ in range(count):
        n = int(rng.integers(2, max_n + 1))
        ids = tuple(f"A{i}" for i in range(n))
        kind = rng.integers(0, 3)
        if kind == 0:
            yield FactorModel(ids, float(rng.uniform(0.0005, 0.01)),
                              rng.uniform(-0.5, 2.0, n),
                              rng.uniform(1e-4, 0.05, n))
        elif kind == 1:
            lo = -1.0 / (n - 1) + 1e-6
            yield ConstantCorrelationModel(
                ids, float(rng.uniform(lo, 1 - 1e-6)),
                rng.uniform(0.01, 0.5, n))
        else:
            a = rng.normal(0, 0.05, (n, n))
            yield ShrunkSampleModel(ids, a @ a.T + 1e-4 * np.eye(n),
                                    1.0 / 3.0, False)


class TestCovMatvecAndMaterialize:
    def test_zero_vector(self):
        model = FactorModel(("A", "B"), 0.002, np.array([1.0, 0.8]),
                            np.array([0.01, 0.02]))
        assert np.array_equal(cov_matvec(model, np.zeros(2)), np.zeros(2))

    def test_zero_loadings_pure_diagonal(self):
        model = FactorModel(("A", "B", "C"), 0.002, np.zeros(3),
                            np.array([0.01, 0.02, 0.03]))
        x = np.array([1.0, -2.0, 0.5])
        assert cov_matvec(model, x) == pytest.approx(model.d * x, rel=1e-15)

    def test_matvec_matches_materialization(self):
        rng = np.random.default_rng(14)
        for model in random_models(rng, 30, max_n=60):
            x = rng.normal(0, 1, model.n)
            dense = materialize(model) @ x
            fast = cov_matvec(model, x)
            scale = max(np.abs(dense).max(), 1e-30)
            assert np.abs(fast - dense).max() / scale <= 1e-10

    def test_cc_diagonal_exact(self):
        rng = np.random.default_rng(15)
        sigma = rng.uniform(0.02, 0.4, 17)
        model = ConstantCorrelationModel(tuple(f"A{i}" for i in range(17)),
                                         0.31, sigma)
        v = materialize(model)
        assert np.array_equal(np.diag(v), sigma * sigma)
        off = 0.31 * np.outer(sigma, sigma)
        mask = ~np.eye(17, dtype=bool)
        assert v[mask] == pytest.approx(off[mask], rel=1e-15)

    def test_cc_rho_zero_is_diagonal(self):
        sigma = np.array([0.1, 0.2])
        model = ConstantCorrelationModel(("A", "B"), 0.0, sigma)
        assert materialize(model) == pytest.approx(np.diag(sigma ** 2))

    def test_cc_rho_near_one_is_rank_one(self):
        sigma = np.array([0.1, 0.2, 0.3])
        model = ConstantCorrelationModel(("A", "B", "C"), 1.0 - 1e-6, sigma)
        v = materialize(model)
        assert v == pytest.approx(np.outer(sigma, sigma), rel=1e-5)

    def test_factor_materialize_naive_sum(self):
        rng = np.random.default_rng(16)
        b = rng.uniform(0.5, 1.5, 6)
        d = rng.uniform(0.001, 0.02, 6)
        model = FactorModel(tuple("ABCDEF"), 0.002, b, d)
        expected = 0.002 * np.outer(b, b)
        expected[np.diag_indices(6)] += d
        assert materialize(model) == pytest.approx(expected, rel=1e-15)

    def test_factor_eigenvalue_floor(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            n = int(rng.integers(3, 150))
            model = FactorModel(tuple(f"A{i}" for i in range(n)),
                                float(rng.uniform(0.001, 0.01)),
                                rng.uniform(0.2, 1.8, n),
                                rng.uniform(1e-4, 0.03, n))
            lam = np.linalg.eigvalsh(materialize(model))
            assert lam.min() >= model.d.min() * (1 - 1e-9)

    def test_dense_cap_guard(self):
        model = FactorModel(("A", "B"), 0.002, np.ones(2),
                            np.full(2, 0.01))
        with pytest.raises(EngineError, match="dense cap"):
            materialize(model, dense_cap=1)

    def test_dimension_mismatch(self):
        model = FactorModel(("A", "B"), 0.002, np.ones(2), np.full(2, 0.01))
        with pytest.raises(EngineError):
            cov_matvec(model, np.zeros(3))

    def test_model_volatilities(self):
        model = FactorModel(("A", "B"), 0.002, np.array([1.0, 0.5]),
                            np.array([0.01, 0.02]))
        expected = np.sqrt(0.002 * np.array([1.0, 0.25])
                           + np.array([0.01, 0.02]))
        assert model_volatilities(model) == pytest.approx(expected,
                                                          rel=1e-14)


class TestDeterminism:
    def test_estimators_are_pure(self):
        rng = np.random.default_rng(19)
        snap, mkt = random_snapshot(rng, 8, 36)
        a = estimate_single_factor(snap, mkt)
        b = estimate_single_factor(snap, mkt)
        assert np.array_equal(a.b, b.b) and np.array_equal(a.d, b.d)
        c1 = estimate_constant_correlation(snap)
        c2 = estimate_constant_correlation(snap)
        assert c1.rho == c2.rho and np.array_equal(c1.sigma, c2.sigma)
        s1 = estimate_shrunk_sample(snap)
        s2 = estimate_shrunk_sample(snap)
        assert np.array_equal(s1.v, s2.v)
