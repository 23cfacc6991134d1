"""Return-panel ingestion, universe selection, and synthetic data generation.

Two CSV inputs feed the engine:

* a long-format returns panel ``date,asset_id,excess_return,market_cap``
  with one row per (month, asset), and
* a market series ``date,market_excess_return`` with one row per month.

Returns are monthly excess returns as decimal fractions; the risk-free
subtraction happens upstream. Panels are validated on load (no duplicate
keys, positive caps, per-asset monthly contiguity) and pivoted into dense
month-by-asset matrices so rolling-window universe selection is a cheap
slice. All pivoted arrays are frozen after construction and safe to share
across backtest workers.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    ConfigValidationError,
    DataValidationError,
    InsufficientDataError,
    InsufficientUniverseError,
)
from .months import as_month, format_month, parse_month

RETURNS_HEADER = ("date", "asset_id", "excess_return", "market_cap")
MARKET_HEADER = ("date", "market_excess_return")


def _read_csv(path, expected_header):
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataValidationError(f"file not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataValidationError(f"{path}: empty file, expected header "
                                  + ",".join(expected_header))
    if tuple(df.columns) != expected_header:
        raise DataValidationError(
            f"{path}: header must be {','.join(expected_header)}, "
            f"got {','.join(map(str, df.columns))}", line=1)
    if len(df) == 0:
        raise DataValidationError(f"{path}: no data rows")
    return df


def _parse_months(column):
    out = np.empty(len(column), dtype=np.int64)
    for i, text in enumerate(column):
        try:
            out[i] = parse_month(text)
        except ValueError as exc:
            raise DataValidationError(str(exc), line=i + 2)
    return out


def _parse_floats(column, name):
    values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise DataValidationError(
            f"{name} is not a finite number: {column.iloc[i]!r}", line=i + 2)
    return values


class ReturnsPanel:
    """Monthly excess returns and market caps pivoted to (month x asset).

    ``returns`` and ``caps`` have one row per month of the panel's overall
    date range and one column per asset (lexicographic id order); cells are
    NaN where an asset has no observation. Per-asset presence is contiguous
    by construction.
    """

    def __init__(self, start_month: int, asset_ids, returns, caps):
        self.start_month = int(start_month)
        self.asset_ids = tuple(asset_ids)
        self.returns = returns
        self.caps = caps
        self.returns.setflags(write=False)
        self.caps.setflags(write=False)

    @property
    def n_months(self) -> int:
        return self.returns.shape[0]

    @property
    def end_month(self) -> int:
        """Last month with data (inclusive)."""
        return self.start_month + self.n_months - 1

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    def month_row(self, month) -> int:
        m = as_month(month)
        if not self.start_month <= m <= self.end_month:
            raise InsufficientDataError(
                f"month {format_month(m)} outside panel range "
                f"{format_month(self.start_month)}..{format_month(self.end_month)}")
        return m - self.start_month

    @classmethod
    def from_observations(cls, months, asset_ids, returns, caps, lines=None):
        """Build and validate a panel from parallel observation arrays.

        ``lines`` maps observation index to source line number for error
        reporting; synthetic callers omit it.
        """
        months = np.asarray(months, dtype=np.int64)
        asset_ids = np.asarray(asset_ids, dtype=object)
        returns = np.asarray(returns, dtype=np.float64)
        caps = np.asarray(caps, dtype=np.float64)
        if months.size == 0:
            raise DataValidationError("no observations")

        def line_of(i):
            return None if lines is None else int(lines[i])

        bad_cap = np.flatnonzero(~(caps > 0))
        if bad_cap.size:
            i = int(bad_cap[0])
            raise DataValidationError(
                f"market_cap must be > 0, got {caps[i]} for "
                f"({format_month(months[i])}, {asset_ids[i]})", line=line_of(i))

        ids = sorted(set(asset_ids))
        col = {a: j for j, a in enumerate(ids)}
        start = int(months.min())
        n_rows = int(months.max()) - start + 1
        ret = np.full((n_rows, len(ids)), np.nan)
        cap = np.full((n_rows, len(ids)), np.nan)
        rows = months - start
        cols = np.array([col[a] for a in asset_ids], dtype=np.intp)
        key = rows * len(ids) + cols
        order = np.argsort(key, kind="stable")
        rep = np.flatnonzero(np.diff(key[order]) == 0)
        if rep.size:
            i = int(order[rep[0] + 1])  # second occurrence, in input order
            raise DataValidationError(
                f"duplicate observation for ({format_month(months[i])}, "
                f"{asset_ids[i]})", line=line_of(i))
        occupied = np.zeros((n_rows, len(ids)), dtype=bool)
        occupied[rows, cols] = True
        ret[rows, cols] = returns
        cap[rows, cols] = caps

        # Presence must be one contiguous run of months per asset.
        for j, a in enumerate(ids):
            present = np.flatnonzero(occupied[:, j])
            span = present[-1] - present[0] + 1
            if span != present.size:
                inside = np.zeros(n_rows, dtype=bool)
                inside[present[0]:present[-1] + 1] = True
                missing = np.flatnonzero(inside & ~occupied[:, j])[0]
                raise DataValidationError(
                    f"asset {a}: missing month {format_month(start + int(missing))} "
                    "inside its presence span")
        return cls(start, ids, ret, cap)

    def observations(self):
        """Yield (month, asset_id, excess_return, market_cap) sorted by key."""
        for r in range(self.n_months):
            present = np.flatnonzero(~np.isnan(self.returns[r]))
            for j in present:
                yield (self.start_month + r, self.asset_ids[j],
                       float(self.returns[r, j]), float(self.caps[r, j]))

    def to_csv(self, path):
        # repr keeps the shortest round-trip form, so reloading restores
        # the exact float bits
        lines = [",".join(RETURNS_HEADER)]
        for month, asset, ret, cap in self.observations():
            lines.append(f"{format_month(month)},{asset},{ret!r},{cap!r}")
        text = "\n".join(lines) + "\n"
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)

    def __eq__(self, other):
        if not isinstance(other, ReturnsPanel):
            return NotImplemented
        return (self.start_month == other.start_month
                and self.asset_ids == other.asset_ids
                and np.array_equal(self.returns, other.returns, equal_nan=True)
                and np.array_equal(self.caps, other.caps, equal_nan=True))


class MarketSeries:
    """Monthly market excess returns over a contiguous date range."""

    def __init__(self, start_month: int, values):
        self.start_month = int(start_month)
        self.values = np.asarray(values, dtype=np.float64)
        self.values.setflags(write=False)

    @property
    def n_months(self) -> int:
        return self.values.size

    @property
    def end_month(self) -> int:
        return self.start_month + self.n_months - 1

    def window(self, start, end) -> np.ndarray:
        """Values for months [start, end), both as month indices."""
        start, end = as_month(start), as_month(end)
        if start < self.start_month or end - 1 > self.end_month:
            raise InsufficientDataError(
                f"market series {format_month(self.start_month)}.."
                f"{format_month(self.end_month)} does not cover "
                f"{format_month(start)}..{format_month(end - 1)}")
        i = start - self.start_month
        return self.values[i:i + (end - start)]

    def covers(self, start, end) -> bool:
        """Whether months [start, end) are all present."""
        return (self.start_month <= as_month(start)
                and as_month(end) - 1 <= self.end_month)

    @classmethod
    def from_rows(cls, months, values, lines=None):
        months = np.asarray(months, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if months.size == 0:
            raise DataValidationError("no market observations")
        order = np.argsort(months, kind="stable")
        months, values = months[order], values[order]

        def line_of(i):
            return None if lines is None else int(lines[order[i]])

        gaps = np.diff(months)
        dup = np.flatnonzero(gaps == 0)
        if dup.size:
            i = int(dup[0]) + 1
            raise DataValidationError(
                f"duplicate market date {format_month(months[i])}",
                line=line_of(i))
        hole = np.flatnonzero(gaps > 1)
        if hole.size:
            i = int(hole[0])
            raise DataValidationError(
                f"gap in market series: missing {format_month(months[i] + 1)}")
        return cls(int(months[0]), values)


def load_returns_panel(path) -> ReturnsPanel:
    """Load and validate a long-format returns panel CSV."""
    df = _read_csv(path, RETURNS_HEADER)
    months = _parse_months(df["date"])
    rets = _parse_floats(df["excess_return"], "excess_return")
    caps = _parse_floats(df["market_cap"], "market_cap")
    ids = df["asset_id"].to_numpy(dtype=object)
    empty = np.flatnonzero(ids == "")
    if empty.size:
        raise DataValidationError("empty asset_id", line=int(empty[0]) + 2)
    lines = np.arange(2, len(df) + 2)
    return ReturnsPanel.from_observations(months, ids, rets, caps, lines=lines)


def load_market_series(path) -> MarketSeries:
    """Load and validate the market excess-return series CSV."""
    df = _read_csv(path, MARKET_HEADER)
    months = _parse_months(df["date"])
    values = _parse_floats(df["market_excess_return"], "market_excess_return")
    lines = np.arange(2, len(df) + 2)
    return MarketSeries.from_rows(months, values, lines=lines)


def write_market_csv(series: MarketSeries, path):
    lines = [",".join(MARKET_HEADER)]
    for i, value in enumerate(series.values):
        lines.append(f"{format_month(series.start_month + i)},{float(value)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class UniverseSnapshot:
    """The investable universe fixed at one rebalance date.

    ``window`` is (n_assets x window_len) holding the trailing monthly
    excess returns for months date-T..date-1, oldest column first. ``caps``
    are the market caps observed at date-1, the latest information
    available when the selection is made; nothing at or after ``date``
    enters the snapshot.
    """

    date: int
    asset_ids: tuple
    window: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        self.window.setflags(write=False)
        self.caps.setflags(write=False)

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    @property
    def window_len(self) -> int:
        return self.window.shape[1]


def select_universe(panel: ReturnsPanel, date, window_len: int,
                    n: int) -> UniverseSnapshot:
    """Pick the n largest-cap assets with a complete trailing window.

    Eligibility requires all ``window_len`` months ending at date-1; caps
    are ranked descending with lexicographic asset-id tie-break. The month
    ``date`` itself is never read.
    """
    date = as_month(date)
    if n < 2:
        raise ConfigValidationError(["universe size must be >= 2"])
    if window_len < 3:
        raise ConfigValidationError(["window length must be >= 3"])
    first = date - window_len
    if first < panel.start_month or date - 1 > panel.end_month:
        raise InsufficientDataError(
            f"universe at {format_month(date)} needs months "
            f"{format_month(first)}..{format_month(date - 1)}, panel covers "
            f"{format_month(panel.start_month)}..{format_month(panel.end_month)}")
    r0 = first - panel.start_month
    block = panel.returns[r0:r0 + window_len]
    eligible = ~np.isnan(block).any(axis=0)
    idx = np.flatnonzero(eligible)
    if idx.size < n:
        raise InsufficientUniverseError(format_month(date), n, int(idx.size))
    caps = panel.caps[r0 + window_len - 1, idx]
    # asset columns are already in lexicographic id order, so a stable sort
    # on descending cap keeps the id order for ties
    order = np.argsort(-caps, kind="stable")[:n]
    chosen = idx[order]
    ids = tuple(panel.asset_ids[j] for j in chosen)
    return UniverseSnapshot(date=date, asset_ids=ids,
                            window=block[:, chosen].T.copy(),
                            caps=caps[order].copy())


def returns_at(panel: ReturnsPanel, date, asset_ids) -> np.ndarray:
    """Realized excess returns of given assets at ``date``; NaN where absent."""
    r = panel.month_row(date)
    col = {a: j for j, a in enumerate(panel.asset_ids)}
    cols = np.array([col[a] for a in asset_ids], dtype=np.intp)
    return panel.returns[r, cols]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the single-factor synthetic market.

    Asset i's monthly return is ``beta_i * m_t + eps_it`` with the market
    m_t iid normal(0, sigma_f^2) and eps iid normal(0, idio_vol_i^2); betas
    and idio vols are drawn uniformly from the given ranges, caps from a
    log-normal, all once per asset. Generation is deterministic in seed.
    """

    n_assets: int
    n_months: int
    sigma_f: float = 0.045
    beta_range: tuple = (0.5, 1.5)
    idio_vol_range: tuple = (0.04, 0.14)
    cap_lognorm: tuple = (0.0, 1.0)
    seed: int = 0
    start: str = "1985-01"

    def validate(self):
        errors = []
        if self.n_assets < 2:
            errors.append(f"synthetic.n_assets must be >= 2, got {self.n_assets}")
        if self.n_months < 2:
            errors.append(f"synthetic.n_months must be >= 2, got {self.n_months}")
        if not self.sigma_f > 0:
            errors.append("synthetic.sigma_f must be > 0")
        if not self.beta_range[0] <= self.beta_range[1]:
            errors.append("synthetic.beta_range must be ordered low <= high")
        if not 0 < self.idio_vol_range[0] <= self.idio_vol_range[1]:
            errors.append("synthetic.idio_vol_range must be positive and ordered")
        if not self.cap_lognorm[1] >= 0:
            errors.append("synthetic.cap_lognorm sigma must be >= 0")
        try:
            parse_month(self.start)
        except ValueError as exc:
            errors.append(str(exc))
        if errors:
            raise ConfigValidationError(errors)


@dataclass(frozen=True)
class GroundTruth:
    """True per-asset parameters recorded by the generator."""

    asset_ids: tuple
    beta: np.ndarray
    idio_vol: np.ndarray
    sigma_f: float

    def to_csv(self, path):
        lines = ["asset_id,beta,idio_vol"]
        for aid, beta, vol in zip(self.asset_ids, self.beta, self.idio_vol):
            lines.append(f"{aid},{float(beta)!r},{float(vol)!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def generate_synthetic_panel(spec: SyntheticSpec):
    """Generate (ReturnsPanel, MarketSeries, GroundTruth) from a spec."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, t = spec.n_assets, spec.n_months
    betas = rng.uniform(spec.beta_range[0], spec.beta_range[1], n)
    idio = rng.uniform(spec.idio_vol_range[0], spec.idio_vol_range[1], n)
    caps = rng.lognormal(spec.cap_lognorm[0], spec.cap_lognorm[1], n)
    market = rng.normal(0.0, spec.sigma_f, t)
    eps = rng.standard_normal((t, n)) * idio
    rets = market[:, None] * betas[None, :] + eps

    width = max(4, len(str(n - 1)))
    ids = tuple(f"A{i:0{width}d}" for i in range(n))
    start = parse_month(spec.start)
    panel = ReturnsPanel(start, ids, rets,
                         np.broadcast_to(caps, (t, n)).copy())
    series = MarketSeries(start, market)
    truth = GroundTruth(asset_ids=ids, beta=betas, idio_vol=idio,
                        sigma_f=spec.sigma_f)
    return panel, series, truth
