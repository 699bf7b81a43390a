"""Loading and validation of bars, adjustment factors, calendars, and fundamentals.

All inputs are headered CSV with ISO-8601 timestamps in local exchange time.
Bars snap onto a (trading day x intraday slot) grid whose slots are the
distinct intraday times observed in the file, ranked in time order.  That
makes the loader agnostic to session layout (lunch breaks, non-Chinese
hours) as long as the distinct-time count fits within intervals_per_day.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass

import numpy as np

from .fundamentals import FundamentalsTable, build_variable, classify_cells

BAR_COLUMNS = ["code", "timestamp", "open", "high", "low", "close", "volume", "amount"]


class DataError(ValueError):
    """Raised for malformed or inconsistent input files."""


@dataclass
class TradingCalendar:
    """Ordered trading dates plus the number of 5-minute slots per day."""

    dates: tuple[str, ...]
    intervals_per_day: int = 48

    def __post_init__(self) -> None:
        parsed = [dt.date.fromisoformat(d) for d in self.dates]
        if any(b <= a for a, b in zip(parsed, parsed[1:])):
            raise DataError("calendar dates must be strictly increasing")
        if self.intervals_per_day < 1:
            raise DataError("intervals_per_day must be positive")
        self._day_index = {d: i for i, d in enumerate(self.dates)}

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_slots(self) -> int:
        return self.n_days * self.intervals_per_day

    def day_index(self, date: str) -> int | None:
        return self._day_index.get(date)


@dataclass
class BarSeries:
    """One stock's bars on the calendar grid; NaN marks a missing slot."""

    code: str
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    amount: np.ndarray  # all arrays are (n_days, intervals_per_day)

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.close)


def missing_count(series: BarSeries) -> int:
    """Number of calendar grid slots with no bar."""
    return int((~series.present).sum())


def present_count(series: BarSeries) -> int:
    return int(series.present.sum())


@dataclass
class AdjustmentFactorSeries:
    """Per-stock cumulative post-adjustment factors keyed by date."""

    factors: dict[str, dict[str, float]]

    def has(self, code: str) -> bool:
        return code in self.factors

    def factor(self, code: str, date: str) -> float:
        try:
            return self.factors[code][date]
        except KeyError:
            raise DataError(f"missing adjustment factor for {code} on {date}") from None


@dataclass
class BarPanel:
    """Aligned bar series for the stock universe plus the benchmark index.

    Immutable by convention after construction; safe to share read-only
    across workers.  The benchmark must be present at every grid slot.
    """

    stocks: dict[str, BarSeries]
    benchmark: BarSeries
    calendar: TradingCalendar
    factors: AdjustmentFactorSeries
    intraday_times: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.stocks:
            raise DataError("stock universe is empty")
        if missing_count(self.benchmark) != 0:
            raise DataError(
                f"benchmark {self.benchmark.code} must be present at every "
                f"interval ({missing_count(self.benchmark)} slots missing)")

    @property
    def codes(self) -> list[str]:
        return sorted(self.stocks)


def load_calendar(path: str, intervals_per_day: int = 48) -> TradingCalendar:
    dates = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, path)
        if header != ["date"]:
            raise DataError(f"{path}: expected header 'date', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 1:
                raise DataError(f"{path}:{lineno}: expected a single date column")
            try:
                dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad date {row[0]!r}") from None
            dates.append(row[0].strip())
    if not dates:
        raise DataError(f"{path}: no trading dates")
    return TradingCalendar(tuple(dates), intervals_per_day)


def _read_header(reader, path: str) -> list[str]:
    for row in reader:
        if row and not row[0].lstrip().startswith("#"):
            return [c.strip() for c in row]
    raise DataError(f"{path}: missing header row")


def _parse_timestamp(value: str) -> tuple[str, str]:
    parts = value.strip().split(" ")
    if len(parts) != 2:
        raise ValueError(value)
    dt.date.fromisoformat(parts[0])
    dt.time.fromisoformat(parts[1])
    return parts[0], parts[1]


def load_bars(path: str, calendar: TradingCalendar,
              ) -> tuple[dict[str, BarSeries], tuple[str, ...]]:
    """Parse bars.csv into per-stock series snapped onto the calendar grid.

    Returns the series keyed by stock code together with the discovered
    intraday time grid (slot index = rank of the bar's intraday time).
    """
    rows = []
    times: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, path)
        if header != BAR_COLUMNS:
            raise DataError(f"{path}: expected header {BAR_COLUMNS}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != len(BAR_COLUMNS):
                raise DataError(f"{path}:{lineno}: expected {len(BAR_COLUMNS)} "
                                f"fields, got {len(row)}")
            code = row[0].strip()
            try:
                date, time = _parse_timestamp(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad timestamp {row[1]!r}") from None
            if calendar.day_index(date) is None:
                raise DataError(f"{path}:{lineno}: timestamp {row[1]!r} outside "
                                "the trading calendar")
            try:
                vals = [float(c) for c in row[2:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed numeric field "
                                f"in {row!r}") from None
            o, h, l, c, v, a = vals
            if not np.isfinite(vals).all():
                raise DataError(f"{path}:{lineno}: non-finite value")
            if c <= 0:
                raise DataError(f"{path}:{lineno}: non-positive close {c}")
            if v < 0 or a < 0:
                raise DataError(f"{path}:{lineno}: negative volume or amount")
            times.add(time)
            rows.append((code, date, time, o, h, l, c, v, a, lineno))
    if not rows:
        raise DataError(f"{path}: no bar rows")
    if len(times) > calendar.intervals_per_day:
        raise DataError(f"{path}: {len(times)} distinct intraday times exceed "
                        f"intervals_per_day={calendar.intervals_per_day}")
    grid = tuple(sorted(times))
    slot_of = {t: i for i, t in enumerate(grid)}

    shape = (calendar.n_days, calendar.intervals_per_day)
    series: dict[str, BarSeries] = {}
    seen: dict[tuple[str, int, int], int] = {}
    for code, date, time, o, h, l, c, v, a, lineno in rows:
        if code not in series:
            series[code] = BarSeries(code, *[np.full(shape, np.nan) for _ in range(6)])
        d, k = calendar.day_index(date), slot_of[time]
        key = (code, d, k)
        if key in seen:
            raise DataError(f"{path}:{lineno}: duplicate bar for {code} at "
                            f"{date} {time} (first seen on line {seen[key]})")
        seen[key] = lineno
        s = series[code]
        s.open[d, k], s.high[d, k], s.low[d, k] = o, h, l
        s.close[d, k], s.volume[d, k], s.amount[d, k] = c, v, a
    return series, grid


def load_factors(path: str, calendar: TradingCalendar) -> AdjustmentFactorSeries:
    """Parse factors.csv; factors must be positive and non-decreasing per stock."""
    table: dict[str, dict[str, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, path)
        if header != ["code", "date", "factor"]:
            raise DataError(f"{path}: expected header code,date,factor, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields")
            code, date = row[0].strip(), row[1].strip()
            if calendar.day_index(date) is None:
                raise DataError(f"{path}:{lineno}: date {date!r} outside calendar")
            try:
                factor = float(row[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad factor {row[2]!r}") from None
            if factor <= 0:
                raise DataError(f"{path}:{lineno}: factor must be positive")
            if date in table.setdefault(code, {}):
                raise DataError(f"{path}:{lineno}: duplicate factor for "
                                f"{code} on {date}")
            table[code][date] = factor
    for code, by_date in table.items():
        ordered = [by_date[d] for d in calendar.dates if d in by_date]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise DataError(f"{path}: factors for {code} are not non-decreasing")
    return AdjustmentFactorSeries(table)


def load_panel(bars_path: str, factors_path: str, calendar_path: str,
               benchmark_code: str, intervals_per_day: int = 48) -> BarPanel:
    """Load and align the full input set into an immutable panel."""
    calendar = load_calendar(calendar_path, intervals_per_day)
    series, grid = load_bars(bars_path, calendar)
    if benchmark_code not in series:
        raise DataError(f"benchmark code {benchmark_code!r} not found in bars")
    benchmark = series.pop(benchmark_code)
    factors = load_factors(factors_path, calendar)
    return BarPanel(series, benchmark, calendar, factors, grid)


def write_bars(panel: BarPanel, path: str) -> None:
    """Write the panel (benchmark included) back to bars.csv format.

    Rows are sorted by (code, day, slot) and floats use repr formatting, so
    rewriting a loaded panel is byte-stable and reload reproduces the panel
    bit for bit.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BAR_COLUMNS)
        everything = dict(panel.stocks)
        everything[panel.benchmark.code] = panel.benchmark
        for code in sorted(everything):
            s = everything[code]
            days, slots = np.nonzero(s.present)
            for d, k in zip(days, slots):
                if k >= len(panel.intraday_times):
                    raise DataError(f"bar at unobserved slot {k} for {code}")
                ts = f"{panel.calendar.dates[d]} {panel.intraday_times[k]}"
                writer.writerow([code, ts] +
                                [repr(float(arr[d, k])) for arr in
                                 (s.open, s.high, s.low, s.close, s.volume, s.amount)])


def load_fundamentals(path: str,
                      known_codes: set[str] | None = None) -> FundamentalsTable:
    """Parse fundamentals.csv into a typed per-stock table.

    The header names the variables; the first column is the stock code.
    Cell kinds are inferred per variable (yes/no -> boolean, float-parseable
    -> numeric, anything else -> categorical); empty cells are missing.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, path)
        if not header or header[0] != "code":
            raise DataError(f"{path}: first header column must be 'code'")
        names = header[1:]
        if len(set(names)) != len(names):
            raise DataError(f"{path}: duplicate variable names in header")
        codes: list[str] = []
        raw_columns: list[list[str]] = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: ragged row ({len(row)} fields, "
                                f"expected {len(header)})")
            code = row[0].strip()
            if known_codes is not None and code not in known_codes:
                raise DataError(f"{path}:{lineno}: unknown stock code {code!r}")
            if code in codes:
                raise DataError(f"{path}:{lineno}: duplicate stock code {code!r}")
            codes.append(code)
            for j, cell in enumerate(row[1:]):
                raw_columns[j].append(cell)
    if not codes:
        raise DataError(f"{path}: no stock rows")
    variables, values = [], {}
    for name, raw in zip(names, raw_columns):
        kind, cells = classify_cells(raw)
        variables.append(build_variable(name, kind, cells))
        values[name] = cells
    return FundamentalsTable(codes, variables, values)
