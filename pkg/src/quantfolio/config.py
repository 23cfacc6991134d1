"""Run configuration: INI file parsing, validation, and canonical echo.

A run is described by one INI file with flat sections per module::

    [data]
    returns = panel.csv
    market = market.csv
    # or synthetic = true, parameters in [synthetic]

    [periods]
    dotcom = 1990-01..2000-03

    [engine]
    window_len = 60
    ...

    [output]
    directory = out

Every output of a run is reproducible from (config, data, seed), so the
resolved configuration is echoed to the output directory as a valid
config file; re-running it reproduces the run.
"""

import configparser
import os
from dataclasses import dataclass, field

from .backtest import DEFAULT_PERIODS, MODEL_KINDS, EngineConfig, PeriodSpec
from .data import SyntheticSpec
from .errors import ConfigValidationError
from .months import parse_month
from .strategies import STRATEGY_KINDS

ENV_OUTPUT_DIR = "QUANTFOLIO_OUT"


@dataclass
class RunConfig:
    returns_path: str | None = None
    market_path: str | None = None
    synthetic: SyntheticSpec | None = None
    periods: tuple = DEFAULT_PERIODS
    engine: EngineConfig = field(default_factory=EngineConfig)
    models: tuple = MODEL_KINDS
    strategies: tuple = STRATEGY_KINDS
    output_dir: str = "quantfolio_out"
    dump_covariance: bool = False


def _get(parser, section, key, default=None):
    if parser.has_option(section, key):
        return parser.get(section, key)
    return default


def _parse_typed(errors, parser, section, key, cast, default, check=None,
                 describe=""):
    raw = _get(parser, section, key)
    if raw is None:
        return default
    try:
        value = cast(raw)
    except (TypeError, ValueError):
        errors.append(f"{section}.{key}: cannot parse {raw!r}")
        return default
    if check is not None and not check(value):
        errors.append(f"{section}.{key}: {describe}, got {raw}")
        return default
    return value


def _parse_bool(raw):
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _parse_list(raw):
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def load_run_config(path) -> RunConfig:
    """Parse and validate; raises ConfigValidationError listing every
    problem found, not just the first."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigValidationError([f"config file not found: {path}"])
    errors = []
    cfg = RunConfig()

    synthetic = _parse_typed(errors, parser, "data", "synthetic",
                             _parse_bool, False)
    cfg.returns_path = _get(parser, "data", "returns")
    cfg.market_path = _get(parser, "data", "market")
    if synthetic:
        cfg.synthetic = _parse_synthetic(errors, parser)
    else:
        if not cfg.returns_path:
            errors.append("data.returns: required unless data.synthetic")
        elif not os.path.exists(cfg.returns_path):
            errors.append(f"data.returns: file not found "
                          f"{cfg.returns_path!r}")
        if not cfg.market_path:
            errors.append("data.market: required unless data.synthetic")
        elif not os.path.exists(cfg.market_path):
            errors.append(f"data.market: file not found {cfg.market_path!r}")

    cfg.periods = _parse_periods(errors, parser)

    window_len = _parse_typed(errors, parser, "engine", "window_len", int,
                              60, lambda v: v >= 3, "must be >= 3")
    universe_size = _parse_typed(errors, parser, "engine", "universe_size",
                                 int, 1000, lambda v: v >= 2, "must be >= 2")
    weight_cap = _parse_typed(errors, parser, "engine", "weight_cap", float,
                              0.05, lambda v: 0 < v <= 1,
                              "must be in (0, 1]")
    rp_upper = _parse_typed(errors, parser, "engine", "rp_upper", float, 5.0,
                            lambda v: v > 0, "must be > 0")
    shrink_delta = _parse_typed(errors, parser, "engine", "shrink_delta",
                                float, 1.0 / 3.0, lambda v: 0 <= v <= 1,
                                "must be in [0, 1]")
    psd_repair = _parse_typed(errors, parser, "engine", "psd_repair",
                              _parse_bool, False)
    tol = _parse_typed(errors, parser, "engine", "solver_tolerance", float,
                       1e-8, lambda v: v > 0, "must be > 0")
    max_iter = _parse_typed(errors, parser, "engine",
                            "solver_max_iterations", int, 50_000,
                            lambda v: v >= 100, "must be >= 100")
    workers = _parse_typed(errors, parser, "engine", "workers", int, 1,
                           lambda v: v >= 1, "must be >= 1")

    if universe_size is not None and weight_cap is not None and \
            weight_cap * universe_size < 1:
        errors.append("engine.weight_cap: cap times universe size is below "
                      "1; the capped programs would be infeasible")

    cfg.models = _parse_typed(errors, parser, "engine", "models",
                              _parse_list, MODEL_KINDS,
                              lambda v: v and all(m in MODEL_KINDS
                                                  for m in v),
                              f"must be a subset of {MODEL_KINDS}")
    cfg.strategies = _parse_typed(errors, parser, "engine", "strategies",
                                  _parse_list, STRATEGY_KINDS,
                                  lambda v: v and all(s in STRATEGY_KINDS
                                                      for s in v),
                                  f"must be a subset of {STRATEGY_KINDS}")

    cfg.engine = EngineConfig(window_len=window_len,
                              universe_size=universe_size,
                              weight_cap=weight_cap, rp_upper=rp_upper,
                              shrink_delta=shrink_delta,
                              psd_repair=psd_repair, solver_tolerance=tol,
                              solver_max_iterations=max_iter,
                              workers=workers)

    default_out = os.environ.get(ENV_OUTPUT_DIR, "quantfolio_out")
    cfg.output_dir = _get(parser, "output", "directory", default_out)
    cfg.dump_covariance = _parse_typed(errors, parser, "output",
                                       "dump_covariance", _parse_bool, False)

    if errors:
        raise ConfigValidationError(errors)
    return cfg


def _parse_synthetic(errors, parser) -> SyntheticSpec:
    def num(key, cast, default, check, describe):
        return _parse_typed(errors, parser, "synthetic", key, cast, default,
                            check, describe)

    spec = SyntheticSpec(
        n_assets=num("assets", int, 200, lambda v: v >= 2, "must be >= 2"),
        n_months=num("months", int, 480, lambda v: v >= 2, "must be >= 2"),
        sigma_f=num("sigma_f", float, 0.045, lambda v: v > 0, "must be > 0"),
        beta_range=(num("beta_low", float, 0.5, None, ""),
                    num("beta_high", float, 1.5, None, "")),
        idio_vol_range=(num("idio_low", float, 0.04, lambda v: v > 0,
                            "must be > 0"),
                        num("idio_high", float, 0.14, lambda v: v > 0,
                            "must be > 0")),
        cap_lognorm=(num("cap_mu", float, 0.0, None, ""),
                     num("cap_sigma", float, 1.0, lambda v: v >= 0,
                         "must be >= 0")),
        seed=num("seed", int, 0, lambda v: v >= 0, "must be >= 0"),
        start=_get(parser, "synthetic", "start", "1985-01"),
    )
    try:
        spec.validate()
    except ConfigValidationError as exc:
        errors.extend(exc.messages)
    return spec


def _parse_periods(errors, parser):
    if not parser.has_section("periods") or not parser.options("periods"):
        return DEFAULT_PERIODS
    periods = []
    for name in parser.options("periods"):
        raw = parser.get("periods", name)
        parts = raw.split("..")
        if len(parts) != 2:
            errors.append(f"periods.{name}: expected START..END, got {raw!r}")
            continue
        start, end = parts[0].strip(), parts[1].strip()
        try:
            parse_month(start)
            parse_month(end)
            periods.append(PeriodSpec(name, start, end))
        except Exception as exc:
            errors.append(f"periods.{name}: {exc}")
    if not periods and not errors:
        errors.append("periods: at least one period is required")
    return tuple(periods)


def resolved_ini(cfg: RunConfig) -> str:
    """Canonical INI echo of a resolved configuration (config round-trip)."""
    parser = configparser.ConfigParser()
    parser["data"] = {}
    if cfg.synthetic is not None:
        parser["data"]["synthetic"] = "true"
        spec = cfg.synthetic
        parser["synthetic"] = {
            "assets": str(spec.n_assets),
            "months": str(spec.n_months),
            "sigma_f": repr(spec.sigma_f),
            "beta_low": repr(spec.beta_range[0]),
            "beta_high": repr(spec.beta_range[1]),
            "idio_low": repr(spec.idio_vol_range[0]),
            "idio_high": repr(spec.idio_vol_range[1]),
            "cap_mu": repr(spec.cap_lognorm[0]),
            "cap_sigma": repr(spec.cap_lognorm[1]),
            "seed": str(spec.seed),
            "start": spec.start,
        }
    else:
        parser["data"]["returns"] = cfg.returns_path or ""
        parser["data"]["market"] = cfg.market_path or ""
    parser["periods"] = {p.name: f"{p.start}..{p.end}" for p in cfg.periods}
    eng = cfg.engine
    parser["engine"] = {
        "window_len": str(eng.window_len),
        "universe_size": str(eng.universe_size),
        "weight_cap": repr(eng.weight_cap),
        "rp_upper": repr(eng.rp_upper),
        "shrink_delta": repr(eng.shrink_delta),
        "psd_repair": "true" if eng.psd_repair else "false",
        "solver_tolerance": repr(eng.solver_tolerance),
        "solver_max_iterations": str(eng.solver_max_iterations),
        "workers": str(eng.workers),
        "models": ", ".join(cfg.models),
        "strategies": ", ".join(cfg.strategies),
    }
    parser["output"] = {
        "directory": cfg.output_dir,
        "dump_covariance": "true" if cfg.dump_covariance else "false",
    }
    import io

    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
