"""Synthetic panels with planted lead-lag structure, plus brute-force oracles.

Scenarios are fully determined by their seed (counter-based Philox streams,
identical on every platform).  Excess returns follow a stable VAR whose
leader columns drive the followers at lag one; prices exponentiate the
cumulative returns from a base of 100 so the bar files look realistic.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, fields

import numpy as np

from .fundamentals import FundamentalsTable, build_variable
from .ingest import (AdjustmentFactorSeries, BarPanel, BarSeries,
                     TradingCalendar)

BENCHMARK_CODE = "sh.000001"


@dataclass(frozen=True)
class SyntheticScenario:
    """Generator settings; the seed pins every draw."""

    seed: int
    n_stocks: int = 10
    n_days: int = 40
    intervals_per_day: int = 48
    leaders: tuple[int, ...] = (0,)
    leader_coef: float = 0.6
    own_coef: float = 0.1
    shock_scale: float = 1e-3
    benchmark_scale: float = 5e-4
    amount_level: float = 1e6
    n_noise_fundamentals: int = 4
    link_fundamental: bool = True
    link_noise: float = 0.02
    include_boolean: bool = False

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed * 1000 + stream))

    def codes(self) -> list[str]:
        return [f"syn.{i + 1:06d}" for i in range(self.n_stocks)]


def scenario_from_file(path: str) -> SyntheticScenario:
    """Parse a flat key = value scenario file."""
    allowed = {f.name: f.type for f in fields(SyntheticScenario)}
    kwargs: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in allowed:
                raise ValueError(f"{path}:{lineno}: unknown scenario key {key!r}")
            if key == "leaders":
                kwargs[key] = tuple(int(v) for v in value.split(",") if v.strip())
            elif key in ("seed", "n_stocks", "n_days", "intervals_per_day",
                         "n_noise_fundamentals"):
                kwargs[key] = int(value)
            elif key in ("link_fundamental", "include_boolean"):
                kwargs[key] = value.lower() in ("1", "true", "yes")
            else:
                kwargs[key] = float(value)
    if "seed" not in kwargs:
        raise ValueError(f"{path}: scenario needs a seed")
    return SyntheticScenario(**kwargs)


def coefficient_matrix(scenario: SyntheticScenario) -> np.ndarray:
    """Lag-one matrix: own persistence on the diagonal, leader columns
    loading on every follower row."""
    n = scenario.n_stocks
    A = np.eye(n) * scenario.own_coef
    for leader in scenario.leaders:
        if not 0 <= leader < n:
            raise ValueError(f"leader index {leader} out of range")
        for i in range(n):
            if i != leader and i not in scenario.leaders:
                A[i, leader] = scenario.leader_coef / len(scenario.leaders)
    if np.abs(np.linalg.eigvals(A)).max() >= 1.0:
        raise ValueError("generator coefficients are unstable")
    return A


def synthetic_calendar(scenario: SyntheticScenario) -> TradingCalendar:
    dates = []
    day = dt.date(2021, 1, 4)
    while len(dates) < scenario.n_days:
        if day.weekday() < 5:
            dates.append(day.isoformat())
        day += dt.timedelta(days=1)
    return TradingCalendar(tuple(dates), scenario.intervals_per_day)


def intraday_grid(intervals_per_day: int) -> tuple[str, ...]:
    """Bar end times: the two-session Chinese layout when it fits, otherwise
    a contiguous run of 5-minute bars from the 09:30 open."""
    if intervals_per_day == 48:
        times = []
        t = dt.datetime(2021, 1, 4, 9, 30)
        for _ in range(24):
            t += dt.timedelta(minutes=5)
            times.append(t.time().isoformat("minutes"))
        t = dt.datetime(2021, 1, 4, 13, 0)
        for _ in range(24):
            t += dt.timedelta(minutes=5)
            times.append(t.time().isoformat("minutes"))
        return tuple(times)
    t = dt.datetime(2021, 1, 4, 9, 30)
    times = []
    for _ in range(intervals_per_day):
        t += dt.timedelta(minutes=5)
        times.append(t.time().isoformat("minutes"))
    return tuple(times)


def simulate_returns(scenario: SyntheticScenario) -> tuple[np.ndarray, np.ndarray]:
    """Excess returns (T, n) under the planted VAR plus benchmark returns (T,)."""
    A = coefficient_matrix(scenario)
    n = scenario.n_stocks
    T = scenario.n_days * scenario.intervals_per_day
    rng = scenario.rng(stream=1)
    shocks = rng.standard_normal((T, n)) * scenario.shock_scale
    excess = np.empty((T, n))
    state = np.zeros(n)
    for t in range(T):
        state = A @ state + shocks[t]
        excess[t] = state
    benchmark = rng.standard_normal(T) * scenario.benchmark_scale
    return excess, benchmark


def generate_panel(scenario: SyntheticScenario) -> BarPanel:
    """Deterministic bar panel whose excess-return dynamics follow the
    planted VAR; stock returns are excess plus benchmark so the pipeline
    recovers the planted series exactly."""
    calendar = synthetic_calendar(scenario)
    grid = intraday_grid(scenario.intervals_per_day)
    excess, benchmark = simulate_returns(scenario)
    rng = scenario.rng(stream=2)
    shape = (calendar.n_days, scenario.intervals_per_day)

    def bar_series(code: str, returns: np.ndarray) -> BarSeries:
        closes = 100.0 * np.cumprod(1.0 + returns)
        opens = np.concatenate([[100.0], closes[:-1]])
        amounts = scenario.amount_level * np.exp(0.2 * rng.standard_normal(returns.size))
        volumes = amounts / closes
        return BarSeries(code,
                         opens.reshape(shape),
                         np.maximum(opens, closes).reshape(shape),
                         np.minimum(opens, closes).reshape(shape),
                         closes.reshape(shape),
                         volumes.reshape(shape),
                         amounts.reshape(shape))

    stocks = {code: bar_series(code, excess[:, i] + benchmark)
              for i, code in enumerate(scenario.codes())}
    bench = bar_series(BENCHMARK_CODE, benchmark)
    factors = AdjustmentFactorSeries(
        {code: {d: 1.0 for d in calendar.dates} for code in scenario.codes()})
    return BarPanel(stocks, bench, calendar, factors, grid)


LINKED_VARIABLE = "planted_driver"
SIZE_VARIABLE = "Total Assets"


def generate_fundamentals(scenario: SyntheticScenario) -> FundamentalsTable:
    """Fundamentals with one variable tied to planted leadership strength."""
    rng = scenario.rng(stream=3)
    codes = scenario.codes()
    A = coefficient_matrix(scenario)
    outgoing = np.abs(A).sum(axis=0) - np.abs(np.diag(A))

    columns: dict[str, tuple[str, list]] = {}
    size = np.exp(rng.normal(10.0, 0.5, scenario.n_stocks))
    columns[SIZE_VARIABLE] = ("numeric", [float(v) for v in size])
    if scenario.link_fundamental:
        linked = outgoing + scenario.link_noise * rng.standard_normal(scenario.n_stocks)
        columns[LINKED_VARIABLE] = ("numeric", [float(v) for v in linked])
    for j in range(scenario.n_noise_fundamentals):
        noise = rng.standard_normal(scenario.n_stocks)
        columns[f"noise_{j:02d}"] = ("numeric", [float(v) for v in noise])
    if scenario.include_boolean:
        flips = rng.random(scenario.n_stocks) < 0.5
        columns["dual_listed"] = ("boolean", [bool(v) for v in flips])

    variables = [build_variable(name, kind, cells)
                 for name, (kind, cells) in columns.items()]
    return FundamentalsTable(codes, variables,
                             {name: cells for name, (_, cells) in columns.items()})


def write_scenario(scenario: SyntheticScenario, out_dir: str) -> dict[str, str]:
    """Emit bars/factors/calendar/fundamentals CSVs in the ingest formats."""
    import os

    from .ingest import write_bars

    os.makedirs(out_dir, exist_ok=True)
    panel = generate_panel(scenario)
    paths = {name: os.path.join(out_dir, f"{name}.csv")
             for name in ("bars", "factors", "calendar", "fundamentals")}
    write_bars(panel, paths["bars"])
    with open(paths["calendar"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"])
        for d in panel.calendar.dates:
            writer.writerow([d])
    with open(paths["factors"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["code", "date", "factor"])
        for code in sorted(panel.factors.factors):
            for d in panel.calendar.dates:
                writer.writerow([code, d, repr(panel.factors.factor(code, d))])
    table = generate_fundamentals(scenario)
    with open(paths["fundamentals"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["code"] + table.variable_names())
        for i, code in enumerate(table.codes):
            row = [code]
            for v in table.variables:
                cell = table.values[v.name][i]
                if v.kind == "boolean":
                    row.append("yes" if cell else "no")
                else:
                    row.append(repr(cell) if isinstance(cell, float) else str(cell))
            writer.writerow(row)
    return paths


def fevd_oracle(coefs: list[np.ndarray], sigma: np.ndarray, horizon: int,
                n_paths: int = 1_000_000, seed: int = 0,
                chunk: int = 100_000, moment_match: bool = True) -> np.ndarray:
    """Simulation-based forecast error variance attribution.

    Runs the VAR recurrence separately for each shock channel (shocks are
    the Cholesky columns scaled by standard normal draws) and measures
    realized variances, so the estimate never touches the analytic
    impulse-response path.  With ``moment_match`` each chunk's draws are
    whitened to an exact empirical identity covariance, a variance-reduction
    step that removes estimator noise without touching the propagation being
    measured; switch it off for a plain-Monte-Carlo estimate.  Returns
    shares[h-1, j, i] like the analytic decomposition; rows sum to 1 up to
    the Monte Carlo tolerance.
    """
    from scipy.linalg import solve_triangular

    coefs = [np.asarray(a, dtype=float) for a in coefs]
    k = coefs[0].shape[0]
    p = len(coefs)
    chol = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    # per-shock states live side by side: flat column i*k + j is shock i's
    # contribution to variable j, so one step is a single (k^2, k^2) matmul
    k2 = k * k
    steps = []
    for A in coefs:
        block = np.zeros((k2, k2))
        for i in range(k):
            block[i * k:(i + 1) * k, i * k:(i + 1) * k] = A.T
        steps.append(block)
    shock_load = np.zeros((k, k2))
    for i in range(k):
        for j in range(k):
            shock_load[i, i * k + j] = chol[j, i]

    num = np.zeros((horizon, k, k))    # [h-1, var j, shock i]
    den = np.zeros((horizon, k))
    rng = np.random.Generator(np.random.Philox(key=seed))
    done = 0
    while done < n_paths:
        c = min(chunk, n_paths - done)
        draws = rng.standard_normal((c, horizon, k))
        if moment_match:
            flat = draws.reshape(c, horizon * k)
            flat -= flat.mean(axis=0)
            cov = flat.T @ flat / c
            white = solve_triangular(np.linalg.cholesky(cov), flat.T,
                                     lower=True, check_finite=False)
            draws = np.ascontiguousarray(white.T).reshape(c, horizon, k)
        else:
            draws -= draws.mean(axis=0)
            draws /= draws.std(axis=0)
        history = [np.zeros((c, k2)) for _ in range(p)]
        for t in range(horizon):
            new = history[0] @ steps[0]
            for lag in range(1, p):
                new += history[lag] @ steps[lag]
            new += draws[:, t, :] @ shock_load
            # started from zero state and zero forecast, the state after
            # t + 1 steps is exactly the (t + 1)-step forecast error
            num[t] += np.einsum("cq,cq->q", new, new).reshape(k, k).T
            total = new.reshape(c, k, k).sum(axis=1)
            den[t] += np.einsum("cj,cj->j", total, total)
            history = [new] + history[:-1]
        done += c
    return num / den[:, :, None]


@dataclass
class RecoveryReport:
    """Outcome of running the full pipeline on one synthetic scenario."""

    scenario: SyntheticScenario
    metric_values: dict[str, dict[str, float]]   # model -> code -> value
    leader_ranks: dict[str, dict[str, int]]      # model -> leader code -> rank
    validated: list[str]
    linked_validated: bool


def _rank_of(values: dict[str, float], code: str) -> int:
    return 1 + sum(1 for v in values.values() if v > values[code])


def recovery_experiment(scenario: SyntheticScenario) -> RecoveryReport:
    """Generate a scenario, run the analysis end to end, and report whether
    the planted leaders top each metric and the linked fundamental survives
    cross-validation."""
    from .pipeline import RunConfig, run_in_memory

    panel = generate_panel(scenario)
    table = generate_fundamentals(scenario)
    config = RunConfig(benchmark_code=BENCHMARK_CODE, size_variable=SIZE_VARIABLE)
    results = run_in_memory(panel, table, config)

    metric_values = results.metric_values
    leader_codes = [scenario.codes()[i] for i in scenario.leaders]
    ranks = {model: {code: _rank_of(values, code) for code in leader_codes
                     if code in values}
             for model, values in metric_values.items()}
    validated = results.validation.validated_variables()
    return RecoveryReport(scenario, metric_values, ranks, validated,
                          LINKED_VARIABLE in validated)
