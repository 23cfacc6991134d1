"""The five portfolio constructions compared by the backtest.

Value-weighted and equal-weighted come straight from the universe
snapshot. The three optimized portfolios share one covariance model V:

* minimum variance     min x'Vx on the capped simplex,
* maximum diversification  max (sigma'x) / sqrt(x'Vx), solved as a QP
  after the standard change of variables z = K x with K = 1'z,
* risk parity          the quadratic-minus-log program, normalized.

Optimized weights below 1e-6 are truncated to zero and the vector is
renormalized; that threshold also defines a "position" for the
average-positions metric.
"""

from dataclasses import dataclass

import numpy as np

from . import qpsolve
from .data import UniverseSnapshot
from .errors import (
    DegenerateSolutionError,
    EngineError,
    NotPositiveDefiniteError,
    StrategyError,
)
from .riskmodels import (
    ConstantCorrelationModel,
    FactorModel,
    RiskModel,
    ShrunkSampleModel,
    model_volatilities,
)

STRATEGY_KINDS = ("value_weighted", "equal_weighted", "min_variance",
                  "max_diversification", "risk_parity")

WEIGHT_TRUNCATION = 1e-6


@dataclass(frozen=True)
class StrategyConfig:
    """Tunables shared by the optimized strategies.

    ``weight_cap`` is the per-asset bound of the minimum-variance and
    maximum-diversification programs (risk parity carries its own bound
    ``rp_upper`` on the pre-normalization variables instead).
    """

    kind: str | None = None
    weight_cap: float = 0.05
    rp_upper: float = 5.0
    solver_tolerance: float = 1e-8
    solver_max_iterations: int = 50_000

    def __post_init__(self):
        if self.kind is not None and self.kind not in STRATEGY_KINDS:
            raise EngineError(f"unknown strategy kind {self.kind!r}")
        if not 0 < self.weight_cap <= 1:
            raise EngineError("weight_cap must be in (0, 1]")
        if not self.rp_upper > 0:
            raise EngineError("rp_upper must be positive")


@dataclass(frozen=True)
class PortfolioWeights:
    """Nonnegative weights over a universe snapshot, summing to one."""

    asset_ids: tuple
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if w.shape != (len(self.asset_ids),):
            raise EngineError("weight vector does not match asset ids")
        if w.min(initial=0.0) < 0.0:
            raise EngineError(f"negative weight {w.min()}")
        if abs(w.sum() - 1.0) > 1e-8:
            raise EngineError(f"weights sum to {w.sum()}, expected 1")
        w.setflags(write=False)

    @property
    def n_positions(self) -> int:
        return int(np.count_nonzero(self.w > WEIGHT_TRUNCATION))

    def effective_n(self) -> float:
        return float(1.0 / np.sum(self.w * self.w))


def _emit(asset_ids, w, truncate: bool) -> PortfolioWeights:
    w = np.asarray(w, dtype=np.float64).copy()
    if w.min(initial=0.0) < -1e-7:
        raise StrategyError(f"solver produced weight {w.min()} below zero")
    np.clip(w, 0.0, None, out=w)
    if truncate:
        w[w < WEIGHT_TRUNCATION] = 0.0
    total = w.sum()
    if total <= 0:
        raise DegenerateSolutionError("all weights truncated to zero")
    return PortfolioWeights(asset_ids=tuple(asset_ids), w=w / total)


def quad_term(model: RiskModel):
    """The model's covariance in the solver's quadratic-term spelling."""
    if isinstance(model, FactorModel):
        return qpsolve.StructuredQuad(model.d, ((model.sigma_f2, model.b),))
    if isinstance(model, ConstantCorrelationModel):
        s = model.sigma
        return qpsolve.StructuredQuad((1.0 - model.rho) * s * s,
                                      ((model.rho, s),))
    return qpsolve.DenseQuad(model.v)


def equal_weight(snapshot: UniverseSnapshot) -> PortfolioWeights:
    n = snapshot.n_assets
    return PortfolioWeights(asset_ids=snapshot.asset_ids,
                            w=np.full(n, 1.0 / n))


def value_weight(snapshot: UniverseSnapshot) -> PortfolioWeights:
    caps = snapshot.caps
    return PortfolioWeights(asset_ids=snapshot.asset_ids,
                            w=caps / caps.sum())


def min_variance(model: RiskModel, config: StrategyConfig) -> PortfolioWeights:
    """Long-only capped fully-invested minimum-variance weights."""
    n = model.n
    if n == 1:
        return PortfolioWeights(asset_ids=model.asset_ids, w=np.ones(1))
    problem = qpsolve.QpProblem(
        quadratic=quad_term(model),
        linear=np.zeros(n),
        eq=((np.ones(n), 1.0),),
        lower=0.0,
        upper=config.weight_cap,
    )
    sol = qpsolve.solve_qp(problem, tolerance=config.solver_tolerance,
                           max_iterations=config.solver_max_iterations)
    if sol.status != "optimal":
        raise StrategyError(
            f"min_variance on {model.kind} model: solver status "
            f"{sol.status} (kkt residual {sol.kkt_residual:.2e})")
    return _emit(model.asset_ids, sol.x, truncate=True)


def max_diversification(model: RiskModel, sigma,
                        config: StrategyConfig) -> PortfolioWeights:
    """Maximize sigma'x / sqrt(x'Vx) over the long-only capped simplex.

    Solved in the scaled variables z = K x (K = 1'z): minimize z'Vz with
    sigma'z = 1, z >= 0 and the cap rows z_i <= weight_cap * (1'z); the
    weights are z normalized by its sum.
    """
    n = model.n
    if n == 1:
        return PortfolioWeights(asset_ids=model.asset_ids, w=np.ones(1))
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (n,) or not np.all(sigma > 0):
        raise EngineError("max_diversification needs positive per-asset "
                          "volatilities")
    problem = qpsolve.QpProblem(
        quadratic=quad_term(model),
        linear=np.zeros(n),
        eq=((sigma, 1.0),),
        lower=0.0,
        upper=np.inf,
        sum_cap=config.weight_cap,
    )
    sol = qpsolve.solve_qp(problem, tolerance=config.solver_tolerance,
                           max_iterations=config.solver_max_iterations)
    if sol.status != "optimal":
        raise StrategyError(
            f"max_diversification on {model.kind} model: solver status "
            f"{sol.status} (kkt residual {sol.kkt_residual:.2e})")
    scale = float(sol.x.sum())
    if scale <= 1e-12:
        raise DegenerateSolutionError(
            "max_diversification scale factor collapsed to zero")
    return _emit(model.asset_ids, sol.x / scale, truncate=True)


def risk_parity(model: RiskModel, config: StrategyConfig) -> PortfolioWeights:
    """Equal-risk-contribution weights from the quadratic-minus-log program.

    Requires a positive-definite covariance; the shrunk sample model
    qualifies only with PSD repair enabled, otherwise the documented
    not-positive-definite failure is raised for the backtest to record.
    """
    if isinstance(model, ShrunkSampleModel) and not model.psd_repaired:
        raise NotPositiveDefiniteError(
            "risk parity requires a PSD-certified covariance and the "
            "shrunk sample model has repair disabled",
            model_kind=model.kind)
    n = model.n
    if n == 1:
        return PortfolioWeights(asset_ids=model.asset_ids, w=np.ones(1))
    y = qpsolve.solve_quad_log(quad_term(model), config.rp_upper,
                               tolerance=config.solver_tolerance,
                               model_kind=model.kind)
    return _emit(model.asset_ids, y / y.sum(), truncate=True)


def build_portfolio(kind: str, snapshot: UniverseSnapshot,
                    model: RiskModel | None,
                    config: StrategyConfig) -> PortfolioWeights:
    """Dispatch a strategy kind; model may be None for the benchmarks."""
    if kind == "value_weighted":
        return value_weight(snapshot)
    if kind == "equal_weighted":
        return equal_weight(snapshot)
    if model is None:
        raise EngineError(f"strategy {kind} requires a risk model")
    if kind == "min_variance":
        return min_variance(model, config)
    if kind == "max_diversification":
        return max_diversification(model, model_volatilities(model), config)
    if kind == "risk_parity":
        return risk_parity(model, config)
    raise EngineError(f"unknown strategy kind {kind!r}")
