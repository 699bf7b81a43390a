"""Excess-return panel construction from aligned bars.

Returns are computed on factor-adjusted closes, chained against the last
present adjusted close (so the first interval of a day chains to the prior
day's final close and gaps do not multiply), benchmarked, zero-imputed, and
paired with ratio-imputed trade amounts.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .ingest import (AdjustmentFactorSeries, BarPanel, BarSeries, DataError,
                     TradingCalendar, missing_count)

log = logging.getLogger(__name__)

RETURN_COLUMNS = ["code", "timestamp", "excess_return", "amount", "imputed_flag"]


@dataclass
class ReturnPanel:
    """Aligned excess returns and trade amounts, stocks x flattened intervals.

    Row i of each matrix belongs to ``codes[i]``; columns run over calendar
    days times intervals_per_day.  ``return_imputed`` and ``amount_imputed``
    are the audit masks of cells that were filled rather than observed.
    """

    codes: tuple[str, ...]
    returns: np.ndarray
    amounts: np.ndarray
    return_imputed: np.ndarray
    amount_imputed: np.ndarray
    calendar: TradingCalendar
    intraday_times: tuple[str, ...]
    excluded: tuple[str, ...] = ()
    amount_fallbacks: tuple = ()

    @property
    def n_stocks(self) -> int:
        return len(self.codes)

    @property
    def n_intervals(self) -> int:
        return self.returns.shape[1]

    def day_slice(self, day_index: int) -> slice:
        ipd = self.calendar.intervals_per_day
        return slice(day_index * ipd, (day_index + 1) * ipd)

    def row(self, code: str) -> int:
        try:
            return self.codes.index(code)
        except ValueError:
            raise KeyError(code) from None


@dataclass
class PeerAggregate:
    """Amount-weighted mean excess return of all stocks except the target."""

    target: str
    peer_codes: tuple[str, ...]
    series: np.ndarray          # (n_intervals,)
    weights: np.ndarray         # (n_peers, n_intervals), columns sum to 1


def adjusted_return_series(bars: BarSeries,
                           factors: AdjustmentFactorSeries | None,
                           calendar: TradingCalendar) -> np.ndarray:
    """Interval returns on factor-adjusted closes, NaN where undefined.

    Each return divides the adjusted close by the last present adjusted
    close, so a dividend or rights issue covered by the factor series leaves
    no discontinuity.  The very first present bar has no predecessor and its
    slot stays NaN.
    """
    day_factors = np.ones(calendar.n_days)
    if factors is not None:
        present_days = np.nonzero(bars.present.any(axis=1))[0]
        for d in present_days:
            day_factors[d] = factors.factor(bars.code, calendar.dates[d])
    close = bars.close
    observed = close[bars.present]
    if observed.size and observed.min() <= 0:
        raise DataError(f"{bars.code}: non-positive close price")
    adjusted = (close * day_factors[:, None]).ravel()
    out = np.full(adjusted.shape, np.nan)
    pos = np.nonzero(~np.isnan(adjusted))[0]
    if pos.size >= 2:
        vals = adjusted[pos]
        out[pos[1:]] = vals[1:] / vals[:-1] - 1.0
    return out


def excess_returns(stock_returns: np.ndarray,
                   benchmark_returns: np.ndarray) -> np.ndarray:
    """Elementwise stock-minus-benchmark returns on a shared grid."""
    if stock_returns.shape != benchmark_returns.shape:
        raise DataError("return series are not on the same grid")
    defined = ~np.isnan(stock_returns)
    if np.isnan(benchmark_returns[defined]).any():
        raise DataError("benchmark return missing at a slot where the stock "
                        "return is defined")
    return stock_returns - benchmark_returns


def impute_returns(returns: np.ndarray,
                   max_missing: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Zero-fill missing returns; returns (filled matrix, imputation mask).

    Guards the upstream exclusion rule: any stock with more than
    ``max_missing`` missing slots (the structurally undefined first interval
    of the sample not counted) should already have been dropped.
    """
    gaps = np.isnan(returns)
    counts = gaps[:, 1:].sum(axis=1)
    bad = np.nonzero(counts > max_missing)[0]
    if bad.size:
        raise DataError(f"exclusion rule violated upstream: row(s) {bad.tolist()} "
                        f"have more than {max_missing} missing return slots")
    return np.where(gaps, 0.0, returns), gaps


def impute_volume(amounts: np.ndarray, codes: tuple[str, ...],
                  calendar: TradingCalendar,
                  ) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Ratio-based fill of missing trade amounts.

    A gap at (day d, slot k) takes the day's observed total allocated by the
    previous day's slot distribution; a fully missing day copies the previous
    day's amounts; gaps on the first day take the cross-sectional median of
    the slot (flagged).  Days are processed in order so the reference day is
    always complete.
    """
    n, n_days, ipd = amounts.shape
    out = amounts.copy()
    mask = np.isnan(amounts)
    events = []
    day0 = out[:, 0, :]
    if np.isnan(day0).any():
        med = np.nanmedian(day0, axis=0)  # per-slot median across stocks
        med = np.where(np.isnan(med), 0.0, med)
        for i, k in zip(*np.nonzero(np.isnan(day0))):
            out[i, 0, k] = med[k]
            events.append((codes[i], calendar.dates[0], int(k), "slot-median"))
    for d in range(1, n_days):
        day = out[:, d, :]
        holes = np.isnan(day)
        if not holes.any():
            continue
        prev = out[:, d - 1, :]
        for i in np.nonzero(holes.any(axis=1))[0]:
            kk = np.nonzero(holes[i])[0]
            observed = day[i][~holes[i]]
            prev_total = prev[i].sum()
            share = prev[i] / prev_total if prev_total > 0 else np.full(ipd, 1.0 / ipd)
            if observed.size == 0:
                out[i, d, kk] = prev[i, kk]
                events.append((codes[i], calendar.dates[d], -1, "prev-day-copy"))
            else:
                out[i, d, kk] = observed.sum() * share[kk]
    for code, date, k, kind in events:
        log.info("amount fallback for %s on %s slot %s: %s", code, date, k, kind)
    return out, mask, tuple(events)


def build_return_panel(panel: BarPanel, max_missing: int = 1000) -> ReturnPanel:
    """Full pipeline from bars to the cleaned excess-return panel.

    Stocks with more than ``max_missing`` missing bar slots are excluded up
    front; the rest are adjusted, benchmarked, zero-imputed, and get their
    amounts ratio-imputed.
    """
    retained, excluded = [], []
    for code in panel.codes:
        (excluded if missing_count(panel.stocks[code]) > max_missing
         else retained).append(code)
    if excluded:
        log.info("excluded %d stocks over the missing-bar limit: %s",
                 len(excluded), excluded)
    if not retained:
        raise DataError("no stocks survive the missing-bar exclusion rule")

    bench_factors = panel.factors if panel.factors.has(panel.benchmark.code) else None
    bench = adjusted_return_series(panel.benchmark, bench_factors, panel.calendar)

    rows, amount_rows = [], []
    for code in retained:
        series = panel.stocks[code]
        stock = adjusted_return_series(series, panel.factors, panel.calendar)
        rows.append(excess_returns(stock, bench))
        amount_rows.append(series.amount)
    raw = np.vstack(rows)
    returns, return_mask = impute_returns(raw, max_missing)
    amounts3 = np.stack(amount_rows)
    amounts3, amount_mask3, events = impute_volume(amounts3, tuple(retained),
                                                   panel.calendar)
    n = len(retained)
    return ReturnPanel(tuple(retained), returns,
                       amounts3.reshape(n, -1), return_mask,
                       amount_mask3.reshape(n, -1), panel.calendar,
                       panel.intraday_times, tuple(excluded), events)


def peer_weights(rp: ReturnPanel, target: str) -> tuple[np.ndarray, tuple[str, ...]]:
    """Per-interval amount weights over all stocks except the target.

    Columns are probability vectors; intervals where every peer traded zero
    fall back to equal weights.
    """
    if rp.n_stocks < 2:
        raise DataError("peer aggregation needs at least two stocks")
    i = rp.row(target)
    peers = [j for j in range(rp.n_stocks) if j != i]
    amounts = rp.amounts[peers]
    totals = amounts.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = amounts / totals
    weights[:, totals <= 0] = 1.0 / len(peers)
    return weights, tuple(rp.codes[j] for j in peers)


def peer_aggregate(rp: ReturnPanel, target: str) -> PeerAggregate:
    """Amount-weighted mean excess return of all other stocks."""
    weights, peer_codes = peer_weights(rp, target)
    i = rp.row(target)
    peers = [j for j in range(rp.n_stocks) if j != i]
    series = (weights * rp.returns[peers]).sum(axis=0)
    return PeerAggregate(target, peer_codes, series, weights)


def write_returns_csv(rp: ReturnPanel, path: str,
                      config_digest: str | None = None) -> None:
    """Audit export: one row per (stock, interval) with the imputation flag."""
    ipd = rp.calendar.intervals_per_day
    with open(path, "w", newline="") as fh:
        if config_digest:
            fh.write(f"# config_digest={config_digest}\n")
        writer = csv.writer(fh)
        writer.writerow(RETURN_COLUMNS)
        for i, code in enumerate(rp.codes):
            for t in range(rp.n_intervals):
                d, k = divmod(t, ipd)
                if k >= len(rp.intraday_times):
                    continue
                ts = f"{rp.calendar.dates[d]} {rp.intraday_times[k]}"
                writer.writerow([code, ts, repr(float(rp.returns[i, t])),
                                 repr(float(rp.amounts[i, t])),
                                 int(rp.return_imputed[i, t])])


def load_returns_csv(path: str, calendar: TradingCalendar) -> ReturnPanel:
    """Rebuild a ReturnPanel from the audit export (stage restart path)."""
    ipd = calendar.intervals_per_day
    by_code: dict[str, dict[tuple[int, int], tuple[float, float, bool]]] = {}
    times: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if not row or row[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in row]
                if header != RETURN_COLUMNS:
                    raise DataError(f"{path}: unexpected header {header}")
                continue
            code, ts, ret, amount, flag = row
            date, time = ts.split(" ")
            d = calendar.day_index(date)
            if d is None:
                raise DataError(f"{path}: date {date!r} outside calendar")
            times.add(time)
            by_code.setdefault(code, {})[(d, time)] = (float(ret), float(amount),
                                                       flag == "1")
    if not by_code:
        raise DataError(f"{path}: no return rows")
    grid = tuple(sorted(times))
    slot_of = {t: i for i, t in enumerate(grid)}
    codes = tuple(sorted(by_code))
    n, total = len(codes), calendar.n_days * ipd
    returns = np.zeros((n, total))
    amounts = np.zeros((n, total))
    mask = np.zeros((n, total), dtype=bool)
    for i, code in enumerate(codes):
        for (d, time), (ret, amount, imputed) in by_code[code].items():
            t = d * ipd + slot_of[time]
            returns[i, t], amounts[i, t], mask[i, t] = ret, amount, imputed
    return ReturnPanel(codes, returns, amounts, mask,
                       np.zeros((n, total), dtype=bool), calendar, grid)
