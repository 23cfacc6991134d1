"""Rolling out-of-sample simulation and the six performance metrics.

Each rebalance month t inside a period selects the universe from the
trailing window (months t-W..t-1 only), estimates the requested risk
models, solves every strategy, and records the realized portfolio excess
return sum_i w_i * r_{i,t}. Rebalance dates are independent, so a run can
fan them out across a thread pool; results are assembled in date order and
are identical for any worker count.

The shrunk-sample x risk-parity cell is the documented unsupported
combination when PSD repair is off: it is marked failed up front and its
metrics row is emitted as NaN.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import MarketSeries, ReturnsPanel, returns_at, select_universe
from .errors import (
    EngineError,
    InsufficientDataError,
    SharpeUndefinedError,
)
from .months import as_month, format_month
from .riskmodels import (
    estimate_constant_correlation,
    estimate_shrunk_sample,
    estimate_single_factor,
)
from .strategies import (
    STRATEGY_KINDS,
    PortfolioWeights,
    StrategyConfig,
    WEIGHT_TRUNCATION,
    build_portfolio,
)

MODEL_KINDS = ("factor", "constant_correlation", "shrunk_sample")

METRIC_NAMES = ("avg_excess_return", "std_dev", "sharpe", "market_beta",
                "avg_positions", "effective_n")


@dataclass(frozen=True)
class PeriodSpec:
    """Half-open backtest window [start, end): a boundary month belongs to
    the later period, so adjacent periods never double-count."""

    name: str
    start: str
    end: str

    def __post_init__(self):
        if as_month(self.start) >= as_month(self.end):
            raise EngineError(f"period {self.name}: start {self.start} must "
                              f"precede end {self.end}")

    def months(self) -> range:
        return range(as_month(self.start), as_month(self.end))


# The paper's four crisis windows.
DEFAULT_PERIODS = (
    PeriodSpec("dotcom", "1990-01", "2000-03"),
    PeriodSpec("gfc", "2000-03", "2008-09"),
    PeriodSpec("covid", "2008-09", "2020-04"),
    PeriodSpec("postcovid", "2020-04", "2023-12"),
)


@dataclass(frozen=True)
class EngineConfig:
    window_len: int = 60
    universe_size: int = 1000
    weight_cap: float = 0.05
    rp_upper: float = 5.0
    shrink_delta: float = 1.0 / 3.0
    psd_repair: bool = False
    solver_tolerance: float = 1e-8
    solver_max_iterations: int = 50_000
    workers: int = 1

    def strategy_config(self) -> StrategyConfig:
        return StrategyConfig(weight_cap=self.weight_cap,
                              rp_upper=self.rp_upper,
                              solver_tolerance=self.solver_tolerance,
                              solver_max_iterations=self.solver_max_iterations)


@dataclass
class BacktestResult:
    period: PeriodSpec
    model_kind: str
    strategy_kind: str
    dates: list = field(default_factory=list)
    monthly_returns: np.ndarray = field(
        default_factory=lambda: np.zeros(0))
    weights_history: list = field(default_factory=list)
    failed: bool = False


@dataclass(frozen=True)
class MetricsRow:
    avg_excess_return: float
    std_dev: float
    sharpe: float
    market_beta: float
    avg_positions: float
    effective_n: float

    @classmethod
    def nan_row(cls) -> "MetricsRow":
        return cls(*(float("nan"),) * 6)

    def values(self) -> tuple:
        return (self.avg_excess_return, self.std_dev, self.sharpe,
                self.market_beta, self.avg_positions, self.effective_n)


def effective_n(weights: PortfolioWeights) -> float:
    """Inverse Herfindahl 1/sum(w^2): the equal-weighted stock count with
    the same stock-specific risk under homogeneous idiosyncratic variance."""
    return weights.effective_n()


def estimate_model(kind: str, snapshot, market_window, cfg: EngineConfig):
    if kind == "factor":
        return estimate_single_factor(snapshot, market_window)
    if kind == "constant_correlation":
        return estimate_constant_correlation(snapshot)
    if kind == "shrunk_sample":
        return estimate_shrunk_sample(snapshot, delta=cfg.shrink_delta,
                                      psd_repair=cfg.psd_repair)
    raise EngineError(f"unknown risk model kind {kind!r}")


def is_unsupported_combination(model_kind: str, strategy_kind: str,
                               cfg: EngineConfig) -> bool:
    """The PSD-failure cell the result tables report as NaN."""
    return (model_kind == "shrunk_sample" and strategy_kind == "risk_parity"
            and not cfg.psd_repair)


def _check_coverage(panel, market, period, cfg):
    first_needed = as_month(period.start) - cfg.window_len
    last_needed = as_month(period.end) - 1
    if panel.start_month > first_needed or panel.end_month < last_needed:
        raise InsufficientDataError(
            f"period {period.name} needs panel months "
            f"{format_month(first_needed)}..{format_month(last_needed)}, "
            f"panel covers {format_month(panel.start_month)}.."
            f"{format_month(panel.end_month)}")
    if not market.covers(first_needed, last_needed + 1):
        raise InsufficientDataError(
            f"period {period.name} needs market months "
            f"{format_month(first_needed)}..{format_month(last_needed)}")


def _rebalance_date(panel, market, date, model_kinds, strategy_kinds, cfg,
                    strat_cfg):
    """All model estimates and strategy weights for one rebalance month."""
    snapshot = select_universe(panel, date, cfg.window_len,
                               cfg.universe_size)
    market_window = market.window(date - cfg.window_len, date)
    realized = returns_at(panel, date, snapshot.asset_ids)
    realized = np.where(np.isnan(realized), 0.0, realized)

    models = {}
    for mk in model_kinds:
        needs_model = any(sk in ("min_variance", "max_diversification",
                                 "risk_parity")
                          and not is_unsupported_combination(mk, sk, cfg)
                          for sk in strategy_kinds)
        if needs_model:
            models[mk] = estimate_model(mk, snapshot, market_window, cfg)

    out = {}
    shared = {}  # value/equal weighted ignore the model; compute once
    for sk in strategy_kinds:
        if sk in ("value_weighted", "equal_weighted"):
            shared[sk] = build_portfolio(sk, snapshot, None, strat_cfg)
    for mk in model_kinds:
        for sk in strategy_kinds:
            if is_unsupported_combination(mk, sk, cfg):
                continue
            try:
                weights = shared[sk] if sk in shared else build_portfolio(
                    sk, snapshot, models[mk], strat_cfg)
            except EngineError as exc:
                raise EngineError(
                    f"{format_month(date)} {mk} x {sk}: {exc}") from exc
            ret = float(weights.w @ realized)
            out[(mk, sk)] = (weights, ret)
    return out


def run_period_matrix(panel: ReturnsPanel, market: MarketSeries,
                      period: PeriodSpec, model_kinds, strategy_kinds,
                      cfg: EngineConfig) -> dict:
    """BacktestResult for every (model, strategy) pair over one period."""
    for mk in model_kinds:
        if mk not in MODEL_KINDS:
            raise EngineError(f"unknown risk model kind {mk!r}")
    for sk in strategy_kinds:
        if sk not in STRATEGY_KINDS:
            raise EngineError(f"unknown strategy kind {sk!r}")
    _check_coverage(panel, market, period, cfg)
    strat_cfg = cfg.strategy_config()
    dates = list(period.months())

    def job(date):
        return _rebalance_date(panel, market, date, model_kinds,
                               strategy_kinds, cfg, strat_cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_date = list(pool.map(job, dates))
    else:
        per_date = [job(d) for d in dates]

    results = {}
    for mk in model_kinds:
        for sk in strategy_kinds:
            if is_unsupported_combination(mk, sk, cfg):
                results[(mk, sk)] = BacktestResult(
                    period=period, model_kind=mk, strategy_kind=sk,
                    failed=True)
                continue
            rets = np.array([per_date[i][(mk, sk)][1]
                             for i in range(len(dates))])
            weights = [per_date[i][(mk, sk)][0] for i in range(len(dates))]
            results[(mk, sk)] = BacktestResult(
                period=period, model_kind=mk, strategy_kind=sk,
                dates=dates, monthly_returns=rets, weights_history=weights)
    return results


def run_backtest(panel, market, period: PeriodSpec, model_kind: str,
                 strategy_kind: str, cfg: EngineConfig) -> BacktestResult:
    """One (model, strategy) pair over one period."""
    results = run_period_matrix(panel, market, period, (model_kind,),
                                (strategy_kind,), cfg)
    return results[(model_kind, strategy_kind)]


def compute_metrics(result: BacktestResult,
                    market: MarketSeries) -> MetricsRow:
    """Annualized mean/vol/Sharpe, market beta, positions, effective N."""
    if result.failed:
        return MetricsRow.nan_row()
    rets = result.monthly_returns
    m = rets.size
    if m < 12:
        raise InsufficientDataError(
            f"metrics need >= 12 monthly observations, got {m}")
    mean = rets.mean()
    sd = rets.std(ddof=1)
    if sd == 0.0:
        raise SharpeUndefinedError(
            "constant monthly returns: standard deviation is zero")
    avg = 12.0 * mean
    std_dev = float(np.sqrt(12.0) * sd)
    mkt = market.window(result.dates[0], result.dates[-1] + 1)
    mc = mkt - mkt.mean()
    beta = float((rets - mean) @ mc / (mc @ mc))
    avg_pos = float(np.mean([w.n_positions for w in result.weights_history]))
    eff = float(np.mean([w.effective_n() for w in result.weights_history]))
    return MetricsRow(avg_excess_return=float(avg), std_dev=std_dev,
                      sharpe=float(avg / std_dev), market_beta=beta,
                      avg_positions=avg_pos, effective_n=eff)


@dataclass
class MatrixResult:
    periods: tuple
    model_kinds: tuple
    strategy_kinds: tuple
    results: dict          # (period_name, model, strategy) -> BacktestResult
    metrics: dict          # (period_name, model, strategy) -> MetricsRow
    failed_cells: list     # documented NaN combinations encountered


def run_matrix(panel, market, periods, model_kinds, strategy_kinds,
               cfg: EngineConfig) -> MatrixResult:
    """The full period x model x strategy table set plus raw results."""
    results = {}
    metrics = {}
    failed = []
    for period in periods:
        per = run_period_matrix(panel, market, period, model_kinds,
                                strategy_kinds, cfg)
        for (mk, sk), res in per.items():
            key = (period.name, mk, sk)
            results[key] = res
            metrics[key] = compute_metrics(res, market)
            if res.failed:
                failed.append(key)
        _assert_benchmarks_model_free(per, model_kinds, strategy_kinds)
    return MatrixResult(periods=tuple(periods),
                        model_kinds=tuple(model_kinds),
                        strategy_kinds=tuple(strategy_kinds),
                        results=results, metrics=metrics,
                        failed_cells=failed)


def _assert_benchmarks_model_free(per, model_kinds, strategy_kinds):
    """Value/equal-weighted rows must be identical across models."""
    if len(model_kinds) < 2:
        return
    ref = model_kinds[0]
    for sk in ("value_weighted", "equal_weighted"):
        if sk not in strategy_kinds:
            continue
        base = per[(ref, sk)].monthly_returns
        for mk in model_kinds[1:]:
            if not np.array_equal(per[(mk, sk)].monthly_returns, base):
                raise EngineError(
                    f"{sk} returns differ between {ref} and {mk} models")


def _fmt(value: float) -> str:
    return "NaN" if np.isnan(value) else repr(float(value))


def write_metrics_csv(path, period_name, model_kind, metrics_by_strategy,
                      strategy_kinds):
    """One table: rows = metrics, columns = strategies (paper layout)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", *strategy_kinds])
        for i, metric in enumerate(METRIC_NAMES):
            row = [metric]
            for sk in strategy_kinds:
                row.append(_fmt(metrics_by_strategy[sk].values()[i]))
            w.writerow(row)


def cumulative_compounded(returns: np.ndarray) -> np.ndarray:
    return np.cumprod(1.0 + returns) - 1.0


def write_cumret_csv(path, period, model_kind, results_by_strategy,
                     strategy_kinds):
    """date column plus one cumulative compounded return column per
    strategy; failed strategies emit NaN."""
    dates = None
    series = {}
    for sk in strategy_kinds:
        res = results_by_strategy[sk]
        if res.failed:
            series[sk] = None
        else:
            series[sk] = cumulative_compounded(res.monthly_returns)
            dates = res.dates
    if dates is None:
        dates = list(period.months())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *strategy_kinds])
        for i, d in enumerate(dates):
            row = [format_month(d)]
            for sk in strategy_kinds:
                row.append("NaN" if series[sk] is None
                           else repr(float(series[sk][i])))
            w.writerow(row)
