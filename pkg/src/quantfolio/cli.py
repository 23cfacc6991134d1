"""Command-line entry point.

Subcommands:

* ``run --config cfg.ini``    full backtest matrix; writes per-(period,
  model) metrics and cumulative-return CSVs, one SVG chart each, the
  resolved config echo, and a manifest.
* ``synth ...``               write a synthetic returns panel + market
  series + ground-truth CSVs.
* ``validate --returns R --market M [--config cfg.ini]``  coverage report
  without running a backtest.

Exit codes: 0 success (including the documented NaN cell), 2 invalid
configuration or flags, 3 data errors, 4 solver failures.
"""

import argparse
import hashlib
import io
import os
import sys
import time

import numpy as np

from . import __version__, backtest, charts
from .config import RunConfig, load_run_config, resolved_ini
from .data import (
    SyntheticSpec,
    generate_synthetic_panel,
    load_market_series,
    load_returns_panel,
    write_market_csv,
)
from .errors import (
    ConfigValidationError,
    DataValidationError,
    EngineError,
    InsufficientDataError,
    InsufficientUniverseError,
    SolverError,
    StrategyError,
)
from .months import as_month, format_month
from .riskmodels import dump_covariance_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


def _sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sha256_panel(panel) -> str:
    buf = io.StringIO()
    panel.to_csv(buf)
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def _load_inputs(cfg: RunConfig):
    if cfg.synthetic is not None:
        panel, market, _ = generate_synthetic_panel(cfg.synthetic)
        source = {"synthetic_seed": str(cfg.synthetic.seed),
                  "panel_sha256": _sha256_panel(panel)}
    else:
        panel = load_returns_panel(cfg.returns_path)
        market = load_market_series(cfg.market_path)
        source = {"returns_sha256": _sha256_file(cfg.returns_path),
                  "market_sha256": _sha256_file(cfg.market_path)}
    return panel, market, source


def cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    started = time.perf_counter()
    panel, market, source = _load_inputs(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)

    matrix = backtest.run_matrix(panel, market, cfg.periods, cfg.models,
                                 cfg.strategies, cfg.engine)

    outputs = []
    for period in cfg.periods:
        for mk in cfg.models:
            metrics = {sk: matrix.metrics[(period.name, mk, sk)]
                       for sk in cfg.strategies}
            results = {sk: matrix.results[(period.name, mk, sk)]
                       for sk in cfg.strategies}
            base = f"{period.name}_{mk}"
            mpath = os.path.join(cfg.output_dir, f"metrics_{base}.csv")
            backtest.write_metrics_csv(mpath, period.name, mk, metrics,
                                       cfg.strategies)
            cpath = os.path.join(cfg.output_dir, f"cumret_{base}.csv")
            backtest.write_cumret_csv(cpath, period, mk, results,
                                      cfg.strategies)
            spath = os.path.join(cfg.output_dir, f"cumret_{base}.svg")
            series = {sk: (None if results[sk].failed else
                           backtest.cumulative_compounded(
                               results[sk].monthly_returns))
                      for sk in cfg.strategies}
            dates = next((results[sk].dates for sk in cfg.strategies
                          if not results[sk].failed),
                         list(period.months()))
            charts.render_cumret_svg(
                spath, f"Portfolios Comparison - {mk} - {period.name}",
                dates, series)
            outputs.extend([mpath, cpath, spath])

    if cfg.dump_covariance:
        outputs.extend(_dump_covariances(cfg, panel, market))

    echo_path = os.path.join(cfg.output_dir, "resolved_config.ini")
    with open(echo_path, "w") as fh:
        fh.write(resolved_ini(cfg))
    outputs.append(echo_path)

    wall = time.perf_counter() - started
    _write_manifest(cfg, source, outputs, wall)

    for key in matrix.failed_cells:
        print(f"note: {key[0]} {key[1]} x {key[2]} is the documented "
              "non-PSD combination; metrics emitted as NaN")
    n_cells = len(cfg.periods) * len(cfg.models) * len(cfg.strategies)
    print(f"wrote {len(outputs) + 1} files to {cfg.output_dir} "
          f"({n_cells} table cells, {wall:.1f}s)")
    return EXIT_OK


def _dump_covariances(cfg, panel, market):
    """Debug dump: materialized covariance at each period's first
    rebalance, one CSV per (period, model)."""
    from .data import select_universe

    paths = []
    for period in cfg.periods:
        date = as_month(period.start)
        snapshot = select_universe(panel, date, cfg.engine.window_len,
                                   cfg.engine.universe_size)
        window = market.window(date - cfg.engine.window_len, date)
        for mk in cfg.models:
            model = backtest.estimate_model(mk, snapshot, window, cfg.engine)
            path = os.path.join(
                cfg.output_dir,
                f"cov_{period.name}_{mk}_{format_month(date)}.csv")
            dump_covariance_csv(model, path)
            paths.append(path)
    return paths


def _write_manifest(cfg, source, outputs, wall_seconds):
    import pandas
    import scipy

    lines = ["[run]"]
    lines.append(f"engine_version = {__version__}")
    lines.append(f"python = {sys.version.split()[0]}")
    lines.append(f"numpy = {np.__version__}")
    lines.append(f"scipy = {scipy.__version__}")
    lines.append(f"pandas = {pandas.__version__}")
    from .qpsolve import BACKEND_NAME

    lines.append(f"solver_backend = {BACKEND_NAME}")
    lines.append(f"wall_time_seconds = {wall_seconds:.3f}")
    lines.append("")
    lines.append("[inputs]")
    for key, value in source.items():
        lines.append(f"{key} = {value}")
    lines.append("")
    lines.append("[outputs]")
    for path in sorted(outputs):
        lines.append(f"{os.path.basename(path)} = {_sha256_file(path)}")
    lines.append("")
    path = os.path.join(cfg.output_dir, "manifest.ini")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_assets=args.assets, n_months=args.months, sigma_f=args.sigma_f,
        beta_range=(args.beta_low, args.beta_high),
        idio_vol_range=(args.idio_low, args.idio_high),
        cap_lognorm=(args.cap_mu, args.cap_sigma),
        seed=args.seed, start=args.start)
    spec.validate()
    panel, market, truth = generate_synthetic_panel(spec)
    os.makedirs(args.out, exist_ok=True)
    panel.to_csv(os.path.join(args.out, "returns.csv"))
    write_market_csv(market, os.path.join(args.out, "market.csv"))
    truth.to_csv(os.path.join(args.out, "ground_truth.csv"))
    print(f"wrote returns.csv, market.csv, ground_truth.csv to {args.out} "
          f"({spec.n_assets} assets x {spec.n_months} months, "
          f"seed {spec.seed})")
    return EXIT_OK


def cmd_validate(args) -> int:
    panel = load_returns_panel(args.returns)
    market = load_market_series(args.market)
    print(f"panel: {panel.n_assets} assets, months "
          f"{format_month(panel.start_month)}..{format_month(panel.end_month)}")
    print(f"market: months {format_month(market.start_month)}.."
          f"{format_month(market.end_month)}")
    counts = np.count_nonzero(~np.isnan(panel.returns), axis=1)
    print(f"assets per month: min {counts.min()}, median "
          f"{int(np.median(counts))}, max {counts.max()}")

    periods = backtest.DEFAULT_PERIODS
    window = 60
    universe = 1000
    if args.config:
        cfg = load_run_config(args.config)
        periods = cfg.periods
        window = cfg.engine.window_len
        universe = cfg.engine.universe_size
    for period in periods:
        first_needed = as_month(period.start) - window
        last_needed = as_month(period.end) - 1
        problems = []
        if panel.start_month > first_needed:
            problems.append(
                f"panel starts {format_month(panel.start_month)}, warmup "
                f"needs {format_month(first_needed)}")
        if panel.end_month < last_needed:
            problems.append(
                f"panel ends {format_month(panel.end_month)}, period needs "
                f"{format_month(last_needed)}")
        if not market.covers(first_needed, last_needed + 1):
            problems.append("market series does not cover the period")
        if problems:
            print(f"warning: period {period.name}: " + "; ".join(problems))
            continue
        eligible = []
        for date in (as_month(period.start), last_needed):
            r0 = date - window - panel.start_month
            block = panel.returns[r0:r0 + window]
            eligible.append(int((~np.isnan(block).any(axis=0)).sum()))
        status = "ok" if min(eligible) >= universe else \
            f"short of universe size {universe}"
        print(f"period {period.name}: eligible assets "
              f"{eligible[0]} (start) .. {eligible[1]} (end), {status}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantfolio",
        description="Risk-model portfolio construction and crisis-window "
                    "backtesting")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the backtest matrix")
    p_run.add_argument("--config", required=True,
                       help="INI run configuration")
    p_run.set_defaults(func=cmd_run)

    p_synth = sub.add_parser("synth", help="generate synthetic data CSVs")
    p_synth.add_argument("--assets", type=int, default=200)
    p_synth.add_argument("--months", type=int, default=480)
    p_synth.add_argument("--sigma-f", dest="sigma_f", type=float,
                         default=0.045)
    p_synth.add_argument("--beta-low", dest="beta_low", type=float,
                         default=0.5)
    p_synth.add_argument("--beta-high", dest="beta_high", type=float,
                         default=1.5)
    p_synth.add_argument("--idio-low", dest="idio_low", type=float,
                         default=0.04)
    p_synth.add_argument("--idio-high", dest="idio_high", type=float,
                         default=0.14)
    p_synth.add_argument("--cap-mu", dest="cap_mu", type=float, default=0.0)
    p_synth.add_argument("--cap-sigma", dest="cap_sigma", type=float,
                         default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--start", default="1985-01")
    p_synth.add_argument("--out", default=".")
    p_synth.set_defaults(func=cmd_synth)

    p_val = sub.add_parser("validate", help="data coverage report")
    p_val.add_argument("--returns", required=True)
    p_val.add_argument("--market", required=True)
    p_val.add_argument("--config", default=None)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigValidationError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataValidationError, InsufficientDataError,
            InsufficientUniverseError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, StrategyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
