"""Per-day pairwise Granger causality tests and the yearly influence tallies.

Each trading day is tested on its own: for every ordered (cause, effect)
pair the lag order is chosen by the Schwarz criterion on the unrestricted
model over a common sample, and an F test of the cause-lag block yields the
p-value.  Daily significant-edge counts feed two yearly metrics per stock:
the number of days it tied for most causal impacts and the log of its total
impact count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)


class DegenerateDay(ValueError):
    """A day series unusable for testing (constant input, perfect fit)."""


@dataclass
class GrangerDayOutcome:
    """All ordered-pair test results for one trading day.

    Matrices are indexed [cause, effect]; diagonals hold NaN / -1 / False.
    ``skipped`` lists (cause, effect, reason) for pairs that could not be
    tested.
    """

    date: str
    codes: tuple[str, ...]
    p_values: np.ndarray
    lags: np.ndarray
    significant: np.ndarray
    skipped: tuple = ()

    def cause_counts(self) -> np.ndarray:
        return self.significant.sum(axis=1)


@dataclass
class InfluenceTally:
    code: str
    top_influencer_days: int
    total_causal_impacts: int
    times_log: float


def granger_test(effect: np.ndarray, cause: np.ndarray,
                 lag_max: int = 10) -> tuple[float, int, float]:
    """Test whether lagged ``cause`` improves the prediction of ``effect``.

    For each lag 1..lag_max the restricted model regresses the effect on its
    own lags and the unrestricted model adds the cause lags.  Lag candidates
    are compared on the common sample that drops lag_max leading rows (so
    the Schwarz criteria are comparable); the F test of the cause-lag block
    is then refit at the chosen lag on its full usable sample.  Returns
    (p_value, selected_lag, F_statistic).
    """
    e = np.asarray(effect, dtype=float)
    c = np.asarray(cause, dtype=float)
    if e.shape != c.shape or e.ndim != 1:
        raise ValueError("effect and cause must be 1-D series of equal length")
    T = e.size
    if T < lag_max + 10:
        raise ValueError(f"need at least lag_max + 10 = {lag_max + 10} "
                         f"observations, got {T}")
    if e.max() == e.min():
        raise DegenerateDay("effect series is constant")
    if c.max() == c.min():
        raise DegenerateDay("cause series is constant")

    # one gram matrix at lag_max serves every candidate: the lag-l design is
    # a column subset, so each SIC needs only a small subsystem solve
    rows = T - lag_max
    y = e[lag_max:]
    Z = np.empty((rows, 1 + 2 * lag_max))
    Z[:, 0] = 1.0
    for lag in range(1, lag_max + 1):
        Z[:, lag] = e[lag_max - lag: T - lag]
        Z[:, lag_max + lag] = c[lag_max - lag: T - lag]
    gram = Z.T @ Z
    zty = Z.T @ y
    yy = float(y @ y)

    best_lag, best_sic = None, np.inf
    for lag in range(1, lag_max + 1):
        n_params = 2 * lag + 1
        if rows - n_params < 1:
            break
        idx = list(range(lag + 1)) + list(range(lag_max + 1, lag_max + 1 + lag))
        ssr = _subset_ssr(gram, zty, yy, Z, y, idx)
        if ssr <= 0:
            continue
        sic = rows * math.log(ssr / rows) + n_params * math.log(rows)
        if sic < best_sic:
            best_lag, best_sic = lag, sic
    if best_lag is None:
        raise DegenerateDay("no usable lag candidate (perfect fit everywhere)")
    stat = _block_f(e, c, best_lag, t0=best_lag)
    if stat is None:
        raise DegenerateDay("degenerate fit at the selected lag")
    return stat.p_value, best_lag, stat.fstat


@dataclass
class _FStat:
    sic: float
    fstat: float
    p_value: float


def _block_f(e: np.ndarray, c: np.ndarray, lag: int, t0: int) -> _FStat | None:
    """Restricted/unrestricted fit dropping t0 leading rows; None when the
    unrestricted fit is degenerate."""
    T = e.size
    rows = T - t0
    n_params = 2 * lag + 1
    df = rows - n_params
    if df < 1:
        return None
    y = e[t0:]
    Z = np.empty((rows, n_params))
    Z[:, 0] = 1.0
    for j in range(1, lag + 1):
        Z[:, j] = e[t0 - j: T - j]
        Z[:, lag + j] = c[t0 - j: T - j]
    gram = Z.T @ Z
    zty = Z.T @ y
    yy = float(y @ y)
    idx_u = list(range(n_params))
    idx_r = list(range(lag + 1))
    ssr_u = _subset_ssr(gram, zty, yy, Z, y, idx_u)
    if ssr_u <= 0:
        return None
    ssr_r = _subset_ssr(gram, zty, yy, Z, y, idx_r)
    sic = rows * math.log(ssr_u / rows) + n_params * math.log(rows)
    fstat = max((ssr_r - ssr_u) / lag / (ssr_u / df), 0.0)
    return _FStat(sic, float(fstat), float(stats.f.sf(fstat, lag, df)))


def _subset_ssr(gram, zty, yy, Z, y, idx) -> float:
    sub = gram[np.ix_(idx, idx)]
    try:
        coefs = np.linalg.solve(sub, zty[idx])
    except np.linalg.LinAlgError:
        coefs = np.linalg.lstsq(Z[:, idx], y, rcond=None)[0]
    return max(yy - float(coefs @ zty[idx]), 0.0)


def daily_matrix(rp, date: str, lag_max: int = 10,
                 alpha: float = 0.01) -> GrangerDayOutcome:
    """Run every ordered-pair test on one trading day's intervals."""
    d = rp.calendar.day_index(date)
    if d is None:
        raise ValueError(f"date {date!r} not in calendar")
    window = rp.returns[:, rp.day_slice(d)]
    n = rp.n_stocks
    p_values = np.full((n, n), np.nan)
    lags = np.full((n, n), -1, dtype=int)
    significant = np.zeros((n, n), dtype=bool)
    skipped = []
    for cause in range(n):
        for effect in range(n):
            if cause == effect:
                continue
            try:
                p, lag, _ = granger_test(window[effect], window[cause], lag_max)
            except DegenerateDay as exc:
                skipped.append((rp.codes[cause], rp.codes[effect], str(exc)))
                log.debug("skipped %s -> %s on %s: %s",
                          rp.codes[cause], rp.codes[effect], date, exc)
                continue
            p_values[cause, effect] = p
            lags[cause, effect] = lag
            significant[cause, effect] = p < alpha
    return GrangerDayOutcome(date, tuple(rp.codes), p_values, lags,
                             significant, tuple(skipped))


def tally(outcomes: list[GrangerDayOutcome]) -> dict[str, InfluenceTally]:
    """Fold daily outcomes into the two yearly per-stock metrics.

    Every stock attaining a day's maximum significant-edge count (when that
    maximum is positive) gets a top-influencer day; ties all count.  The log
    metric is ln of the yearly total, 0 for a zero total.
    """
    if not outcomes:
        raise ValueError("need at least one day outcome")
    codes = outcomes[0].codes
    top_days = np.zeros(len(codes), dtype=int)
    totals = np.zeros(len(codes), dtype=int)
    for outcome in sorted(outcomes, key=lambda o: o.date):
        if outcome.codes != codes:
            raise ValueError("day outcomes cover different stock universes")
        counts = outcome.cause_counts()
        totals += counts
        peak = counts.max() if counts.size else 0
        if peak > 0:
            top_days[counts == peak] += 1
    return {code: InfluenceTally(code, int(top_days[i]), int(totals[i]),
                                 math.log(totals[i]) if totals[i] > 0 else 0.0)
            for i, code in enumerate(codes)}
