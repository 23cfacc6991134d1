"""Covariance models estimated from a trailing return window.

Three model families, all built from a UniverseSnapshot:

* ``FactorModel``       V = sigma_f2 * b b' + diag(d), betas regressed on
  the market window and pulled 1/3 of the way to 1, idiosyncratic log
  volatilities pulled 1/3 of the way to their cross-sectional mean.
* ``ConstantCorrelationModel``   V = rho * s s' + (1 - rho) * diag(s)^2,
  rho the average pairwise sample correlation, s the log-shrunk sample
  volatilities.
* ``ShrunkSampleModel``  V = delta * F + (1 - delta) * S, the sample
  covariance blended toward a constant-correlation target built from S's
  own diagonal.

The first two are rank-one-plus-diagonal, so products with a vector cost
O(n); ``cov_matvec`` exploits that and ``materialize`` spells out the dense
matrix for small-n checks. Estimators are pure functions and the returned
models are immutable, so they can be shared freely across threads.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EngineError

VARIANCE_FLOOR = 1e-10
RHO_MARGIN = 1e-6
DENSE_CAP = 4096


@dataclass(frozen=True)
class FactorModel:
    """Single-factor covariance: V = sigma_f2 * b b' + diag(d)."""

    asset_ids: tuple
    sigma_f2: float
    b: np.ndarray
    d: np.ndarray

    kind = "factor"

    def __post_init__(self):
        if not self.sigma_f2 > 0:
            raise EngineError("factor model requires sigma_f2 > 0")
        if not np.all(self.d > 0):
            raise EngineError("factor model requires all idiosyncratic "
                              "variances > 0")
        if len(self.asset_ids) != self.b.size or self.b.size != self.d.size:
            raise EngineError("factor model dimensions do not match asset ids")
        self.b.setflags(write=False)
        self.d.setflags(write=False)

    @property
    def n(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class ConstantCorrelationModel:
    """Constant-correlation covariance: V = rho*s s' + (1-rho)*diag(s)^2."""

    asset_ids: tuple
    rho: float
    sigma: np.ndarray

    kind = "constant_correlation"

    def __post_init__(self):
        n = self.sigma.size
        if len(self.asset_ids) != n:
            raise EngineError("constant-correlation dimensions do not match "
                              "asset ids")
        if not np.all(self.sigma > 0):
            raise EngineError("constant-correlation model requires positive "
                              "volatilities")
        if not -1.0 / (n - 1) < self.rho < 1.0:
            raise EngineError(
                f"rho={self.rho} outside the positive-definite range "
                f"(-1/{n - 1}, 1)")
        self.sigma.setflags(write=False)

    @property
    def n(self) -> int:
        return self.sigma.size


@dataclass(frozen=True)
class ShrunkSampleModel:
    """Dense shrunk sample covariance with optional eigenvalue repair."""

    asset_ids: tuple
    v: np.ndarray
    delta: float
    psd_repaired: bool

    kind = "shrunk_sample"

    def __post_init__(self):
        if self.v.shape != (len(self.asset_ids),) * 2:
            raise EngineError("shrunk model matrix shape does not match "
                              "asset ids")
        self.v.setflags(write=False)

    @property
    def n(self) -> int:
        return self.v.shape[0]


# A risk model is any of the three variants above.
RiskModel = FactorModel | ConstantCorrelationModel | ShrunkSampleModel


def shrink_beta(beta_hat):
    """Pull a raw beta one third of the way toward 1.

    Affine map (2/3)*beta + 1/3; accepts a scalar or an array.
    """
    arr = np.asarray(beta_hat, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise EngineError(f"beta must be finite, got {beta_hat}")
    out = arr * (2.0 / 3.0) + 1.0 / 3.0
    return float(out) if np.isscalar(beta_hat) else out


def shrink_log_variances(values):
    """Pull log values one third of the way toward their mean.

    Works identically for volatilities and variances (the map commutes
    with squaring), and preserves the cross-sectional mean log exactly.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0 or not np.all(arr > 0):
        raise EngineError("log shrinkage requires a non-empty positive vector")
    logs = np.log(arr)
    return np.exp(logs * (2.0 / 3.0) + logs.mean() * (1.0 / 3.0))


def estimate_single_factor(snapshot, market_window) -> FactorModel:
    """Regress each asset's window on the market and shrink the estimates.

    OLS includes an intercept; residual variance uses denominator T-2 and
    is floored at VARIANCE_FLOOR before the log shrinkage.
    """
    x = np.asarray(snapshot.window, dtype=np.float64)
    m = np.asarray(market_window, dtype=np.float64)
    n, t = x.shape
    if m.size != t:
        raise EngineError(f"market window length {m.size} != asset window {t}")
    if t < 3:
        raise EngineError("factor estimation needs at least 3 months")
    mc = m - m.mean()
    ssm = mc @ mc
    if ssm <= 0:
        raise EngineError("market window has zero variance")
    sigma_f2 = ssm / (t - 1)
    xc = x - x.mean(axis=1, keepdims=True)
    beta_hat = (xc @ mc) / ssm
    resid = xc - beta_hat[:, None] * mc[None, :]
    omega2_hat = np.maximum((resid * resid).sum(axis=1) / (t - 2),
                            VARIANCE_FLOOR)
    return FactorModel(asset_ids=snapshot.asset_ids,
                       sigma_f2=float(sigma_f2),
                       b=shrink_beta(beta_hat),
                       d=shrink_log_variances(omega2_hat))


def estimate_constant_correlation(snapshot) -> ConstantCorrelationModel:
    """Average pairwise correlation plus log-shrunk sample volatilities.

    rho is the unweighted mean of the n(n-1)/2 distinct off-diagonal sample
    correlations, clamped inside the positive-definite range.
    """
    x = np.asarray(snapshot.window, dtype=np.float64)
    n, t = x.shape
    if n < 2:
        raise EngineError("constant-correlation estimation needs n >= 2")
    if t < 3:
        raise EngineError("constant-correlation estimation needs >= 3 months")
    xc = x - x.mean(axis=1, keepdims=True)
    cov = (xc @ xc.T) / (t - 1)
    var = np.maximum(np.diag(cov).copy(), VARIANCE_FLOOR)
    vols = np.sqrt(var)
    corr = cov / np.outer(vols, vols)
    rho = (corr.sum() - np.trace(corr)) / (n * (n - 1))
    rho = float(np.clip(rho, -1.0 / (n - 1) + RHO_MARGIN, 1.0 - RHO_MARGIN))
    return ConstantCorrelationModel(asset_ids=snapshot.asset_ids, rho=rho,
                                    sigma=shrink_log_variances(vols))


def estimate_shrunk_sample(snapshot, delta=None,
                           psd_repair: bool = False) -> ShrunkSampleModel:
    """Blend the sample covariance toward a constant-correlation target.

    The target keeps S's diagonal and replaces off-diagonals with
    rho_bar * s_i * s_j, rho_bar the average sample correlation. Default
    intensity is 1/3. With ``psd_repair`` the result's eigenvalues are
    clipped from below at 1e-8 times the largest.
    """
    if delta is None:
        delta = 1.0 / 3.0
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise EngineError(f"shrinkage delta must be in [0, 1], got {delta}")
    x = np.asarray(snapshot.window, dtype=np.float64)
    n, t = x.shape
    if t < 2:
        raise EngineError("sample covariance needs at least 2 months")
    xc = x - x.mean(axis=1, keepdims=True)
    s = (xc @ xc.T) / (t - 1)
    s = 0.5 * (s + s.T)
    var = np.maximum(np.diag(s).copy(), VARIANCE_FLOOR)
    vols = np.sqrt(var)
    corr = s / np.outer(vols, vols)
    rho_bar = (corr.sum() - np.trace(corr)) / (n * (n - 1))
    target = rho_bar * np.outer(vols, vols)
    np.fill_diagonal(target, np.diag(s))
    v = delta * target + (1.0 - delta) * s
    if psd_repair:
        w, q = np.linalg.eigh(v)
        floor = 1e-8 * max(float(w[-1]), 0.0)
        v = (q * np.maximum(w, floor)) @ q.T
        v = 0.5 * (v + v.T)
    return ShrunkSampleModel(asset_ids=snapshot.asset_ids, v=v, delta=delta,
                             psd_repaired=bool(psd_repair))


def cov_matvec(model: RiskModel, x) -> np.ndarray:
    """V @ x using the model's structure: O(n) except for the dense model."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n,):
        raise EngineError(f"vector length {x.shape} does not match model "
                          f"dimension {model.n}")
    if isinstance(model, FactorModel):
        return model.sigma_f2 * model.b * (model.b @ x) + model.d * x
    if isinstance(model, ConstantCorrelationModel):
        s = model.sigma
        return model.rho * s * (s @ x) + (1.0 - model.rho) * (s * s) * x
    return model.v @ x


def model_variances(model: RiskModel) -> np.ndarray:
    """diag(V) without materializing."""
    if isinstance(model, FactorModel):
        return model.sigma_f2 * model.b * model.b + model.d
    if isinstance(model, ConstantCorrelationModel):
        return model.sigma * model.sigma
    return np.diag(model.v).copy()


def model_volatilities(model: RiskModel) -> np.ndarray:
    """sqrt(diag(V)); the vols the diversification ratio is built from."""
    return np.sqrt(model_variances(model))


def materialize(model: RiskModel, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """Explicit dense covariance matrix (guarded by ``dense_cap``)."""
    if model.n > dense_cap:
        raise EngineError(f"refusing to materialize {model.n}x{model.n} "
                          f"covariance (dense cap {dense_cap})")
    if isinstance(model, FactorModel):
        return model.sigma_f2 * np.outer(model.b, model.b) + np.diag(model.d)
    if isinstance(model, ConstantCorrelationModel):
        v = model.rho * np.outer(model.sigma, model.sigma)
        np.fill_diagonal(v, model.sigma * model.sigma)
        return v
    return model.v.copy()


def dump_covariance_csv(model: RiskModel, path, dense_cap: int = DENSE_CAP):
    """Debug dump: dense covariance, row-major, header = asset ids."""
    import pandas as pd

    v = materialize(model, dense_cap=dense_cap)
    pd.DataFrame(v, columns=list(model.asset_ids)).to_csv(path, index=False)
