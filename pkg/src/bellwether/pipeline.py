"""Staged batch orchestration behind the CLI subcommands.

Every stage reads plain CSV/JSON, writes its module's artifacts into the
output directory, and stamps them with the digest of the config that
produced them, so any stage can be audited or re-entered.  Fixed inputs and
config produce byte-identical outputs (no timestamps, repr float formatting,
sorted iteration everywhere).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .fundamentals import (EncodedDesignMatrix, FundamentalsTable,
                           drop_sparse_variables, impute_by_size,
                           log_transform_large, one_hot_encode)
from .granger import GrangerDayOutcome, InfluenceTally, daily_matrix, tally
from .ingest import (BarPanel, DataError, load_calendar, load_fundamentals,
                     load_panel, missing_count)
from .regression import (StepwiseResult, ValidationReport, cross_validate,
                         significance_stars, stepwise_prune)
from .returns import (ReturnPanel, build_return_panel, load_returns_csv,
                      write_returns_csv)
from .varfevd import FevdInfluence, fevd_influence

log = logging.getLogger(__name__)

MODELS = ("significant001_bool", "significant001_times_log",
          "sum_fevd", "influence_per_unit_trade")
GRANGER_MODELS = ("significant001_bool", "significant001_times_log")
STAGES = ("ingest", "returns", "prep", "fevd", "granger", "regress", "validate")
WORKERS_ENV = "BELLWETHER_WORKERS"


class ConfigError(ValueError):
    """Invalid configuration value or file."""


class StageError(RuntimeError):
    """A stage cannot run, typically because an upstream stage has not."""


class NumericalError(ArithmeticError):
    """The numbers do not support continuing (e.g. no stable fits)."""


@dataclass
class RunConfig:
    """Every documented default in one place; flags and config files map
    one-to-one onto these fields."""

    bars_path: str = "bars.csv"
    factors_path: str = "factors.csv"
    calendar_path: str = "calendar.csv"
    fundamentals_path: str = "fundamentals.csv"
    scenario_path: str = "scenario.cfg"
    output_dir: str = "out"
    benchmark_code: str = "sh.000001"
    intervals_per_day: int = 48
    max_missing_bars: int = 1000
    fundamentals_missing_threshold: float = 0.20
    log_mean_threshold: float = 100.0
    onehot_support_threshold: float = 0.0   # 0 means use 4/n
    fevd_horizon: int = 12
    var_p_max: int = 12
    granger_lag_max: int = 10
    significance_alpha: float = 0.01
    condition_ceiling: float = 100.0
    p_screen: float = 0.5
    validation_min_models: int = 2
    validation_sig_level: float = 0.1
    cholesky_ordering: str = "target_first"
    size_variable: str = "Total Assets"
    seed: int = 0
    workers: int = 1
    report_format: str = "json"

    def validate(self) -> None:
        checks = [
            (self.intervals_per_day >= 1, "intervals_per_day must be >= 1"),
            (self.max_missing_bars >= 0, "max_missing_bars must be >= 0"),
            (0 <= self.fundamentals_missing_threshold <= 1,
             "fundamentals_missing_threshold must be in [0, 1]"),
            (self.log_mean_threshold > 0, "log_mean_threshold must be positive"),
            (self.onehot_support_threshold >= 0,
             "onehot_support_threshold must be >= 0"),
            (self.fevd_horizon >= 1, "fevd_horizon must be >= 1"),
            (self.var_p_max >= 1, "var_p_max must be >= 1"),
            (self.granger_lag_max >= 1, "granger_lag_max must be >= 1"),
            (0 < self.significance_alpha <= 1,
             "significance_alpha must be in (0, 1]"),
            (self.condition_ceiling > 1, "condition_ceiling must exceed 1"),
            (0 < self.p_screen <= 1, "p_screen must be in (0, 1]"),
            (1 <= self.validation_min_models <= 4,
             "validation_min_models must be in 1..4"),
            (0 < self.validation_sig_level < 1,
             "validation_sig_level must be in (0, 1)"),
            (self.cholesky_ordering in ("target_first", "peer_first"),
             "cholesky_ordering must be target_first or peer_first"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.report_format in ("json", "csv"),
             "report_format must be json or csv"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def snapshot(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self) -> str:
        payload = json.dumps(self.snapshot(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """Parse a flat key = value config file."""
        typed = {f.name: f.type for f in fields(cls)}
        kwargs: dict = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in typed:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                kwargs[key] = coerce_field(key, value)
        return cls(**kwargs)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce_field(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {key}") from None
    return value


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _out(config: RunConfig, name: str) -> str:
    return os.path.join(config.output_dir, name)


def _write_csv(path: str, header: list[str], rows, digest: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_digest={digest}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    if not os.path.exists(path):
        raise StageError(f"upstream stage missing: {os.path.basename(path)} "
                         "not found; run the producing stage first")
    header, rows = None, []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in row]
            else:
                rows.append(row)
    if header is None:
        raise DataError(f"{path}: empty file")
    return header, rows


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value: float) -> str:
    return repr(float(value))


def effective_workers(config: RunConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer") from None
    return max(1, config.workers)


# ---------------------------------------------------------------------------
# stages

def stage_ingest(config: RunConfig) -> dict:
    panel = load_panel(config.bars_path, config.factors_path,
                       config.calendar_path, config.benchmark_code,
                       config.intervals_per_day)
    table = load_fundamentals(config.fundamentals_path,
                              known_codes=set(panel.codes) | {panel.benchmark.code})
    missing = {code: missing_count(panel.stocks[code]) for code in panel.codes}
    would_exclude = sorted(c for c, m in missing.items()
                           if m > config.max_missing_bars)
    report = {
        "config_digest": config.digest(),
        "benchmark": panel.benchmark.code,
        "universe": panel.codes,
        "n_stocks": len(panel.codes),
        "missing_bar_counts": missing,
        "excluded_by_missing_rule": would_exclude,
        "n_raw_variables": len(table.variables),
        "calendar_days": panel.calendar.n_days,
        "intervals_per_day": panel.calendar.intervals_per_day,
    }
    _write_json(_out(config, "ingest_report.json"), report)
    return {"artifacts": ["ingest_report.json"],
            "n_stocks": len(panel.codes),
            "excluded": would_exclude}


def stage_returns(config: RunConfig) -> dict:
    panel = load_panel(config.bars_path, config.factors_path,
                       config.calendar_path, config.benchmark_code,
                       config.intervals_per_day)
    rp = build_return_panel(panel, config.max_missing_bars)
    write_returns_csv(rp, _out(config, "returns.csv"), config.digest())
    return {"artifacts": ["returns.csv"], "n_stocks": rp.n_stocks,
            "excluded": list(rp.excluded)}


def prepare_fundamentals(table: FundamentalsTable,
                         config: RunConfig) -> tuple[FundamentalsTable,
                                                     FundamentalsTable,
                                                     EncodedDesignMatrix]:
    """The drop -> impute -> log -> encode chain; returns (raw, processed,
    encoded) so the report can show the trail."""
    cleaned = drop_sparse_variables(table, config.fundamentals_missing_threshold)
    imputed = impute_by_size(cleaned, config.size_variable)
    transformed = log_transform_large(imputed, config.log_mean_threshold)
    threshold = (config.onehot_support_threshold
                 if config.onehot_support_threshold > 0 else None)
    encoded = one_hot_encode(transformed, support_threshold=threshold)
    return table, transformed, encoded


def encoding_report_payload(raw: FundamentalsTable,
                            processed: FundamentalsTable,
                            encoded: EncodedDesignMatrix,
                            digest: str) -> dict:
    kept = {v.name for v in processed.variables}
    variables = []
    for v in raw.variables:
        entry = {
            "name": v.name,
            "kind": v.kind,
            "missing_fraction": v.missing_fraction,
            "support": v.support,
        }
        if v.name not in kept:
            entry["encoding"] = "dropped"
            entry["dropped_reason"] = "missing fraction above threshold"
        else:
            pv = processed.variable(v.name)
            cols = [c for c in encoded.columns if c.source == v.name]
            entry["transform"] = pv.transform
            entry["encoding"] = ("one-hot" if cols and cols[0].transform == "one-hot"
                                 else "passthrough")
            entry["columns"] = [c.name for c in cols]
            if entry["encoding"] == "one-hot":
                entry["levels"] = {c.level: c.level_code for c in cols}
        variables.append(entry)
    return {"config_digest": digest, "variables": variables}


def stage_prep(config: RunConfig) -> dict:
    table = load_fundamentals(config.fundamentals_path)
    raw, processed, encoded = prepare_fundamentals(table, config)
    digest = config.digest()
    header = ["code"] + encoded.column_names()
    rows = [[code] + [_fmt(x) for x in encoded.matrix[i]]
            for i, code in enumerate(encoded.codes)]
    _write_csv(_out(config, "design_matrix.csv"), header, rows, digest)
    _write_json(_out(config, "encoding_report.json"),
                encoding_report_payload(raw, processed, encoded, digest))
    return {"artifacts": ["design_matrix.csv", "encoding_report.json"],
            "n_raw_variables": len(raw.variables),
            "n_encoded_columns": len(encoded.columns)}


def _returns_panel_for(config: RunConfig) -> ReturnPanel:
    path = _out(config, "returns.csv")
    if not os.path.exists(path):
        raise StageError("upstream stage missing: returns.csv not found; "
                         "run 'returns' first")
    calendar = load_calendar(config.calendar_path, config.intervals_per_day)
    return load_returns_csv(path, calendar)


def _influence_chunk(args) -> list[FevdInfluence]:
    rp, codes, horizon, p_max, ordering = args
    return [fevd_influence(rp, code, horizon, p_max, ordering) for code in codes]


def compute_influences(rp: ReturnPanel, config: RunConfig) -> list[FevdInfluence]:
    codes = sorted(rp.codes)
    workers = effective_workers(config)
    if workers == 1 or len(codes) < 2 * workers:
        return [fevd_influence(rp, code, config.fevd_horizon, config.var_p_max,
                               config.cholesky_ordering) for code in codes]
    chunks = [(rp, list(chunk), config.fevd_horizon, config.var_p_max,
               config.cholesky_ordering)
              for chunk in np.array_split(np.array(codes), workers) if len(chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_influence_chunk, chunks))
    merged = [inf for part in parts for inf in part]
    return sorted(merged, key=lambda r: r.code)


def stage_fevd(config: RunConfig) -> dict:
    rp = _returns_panel_for(config)
    influences = compute_influences(rp, config)
    if not any(r.stable for r in influences):
        raise NumericalError("no stable VAR fits; FEVD metrics unusable")
    digest = config.digest()
    rows = [[r.code, r.lag_order, _fmt(r.sum_fevd),
             _fmt(r.influence_per_unit_trade), _fmt(r.mean_amount),
             int(r.stable)] for r in influences]
    _write_csv(_out(config, "influence.csv"),
               ["code", "lag_order", "sum_fevd", "influence_per_unit_trade",
                "mean_amount", "stable"], rows, digest)
    payload = {"config_digest": digest, "stocks": {}}
    for r in influences:
        payload["stocks"][r.code] = {
            "lag_order": r.lag_order,
            "durbin_watson": r.diagnostics.durbin_watson.tolist(),
            "jarque_bera_stats": r.diagnostics.jarque_bera_stats.tolist(),
            "jarque_bera_pvalues": r.diagnostics.jarque_bera_pvalues.tolist(),
            "eigenvalue_moduli": r.diagnostics.eigenvalue_moduli.tolist(),
            "stable": r.stable,
            "shares": r.shares.tolist(),
        }
    _write_json(_out(config, "fevd_report.json"), payload)
    unstable = [r.code for r in influences if not r.stable]
    return {"artifacts": ["influence.csv", "fevd_report.json"],
            "unstable": unstable}


def _granger_chunk(args) -> list[GrangerDayOutcome]:
    rp, dates, lag_max, alpha = args
    return [daily_matrix(rp, date, lag_max, alpha) for date in dates]


def compute_daily_outcomes(rp: ReturnPanel,
                           config: RunConfig) -> list[GrangerDayOutcome]:
    dates = list(rp.calendar.dates)
    workers = effective_workers(config)
    if workers == 1 or len(dates) < 2 * workers:
        return [daily_matrix(rp, date, config.granger_lag_max,
                             config.significance_alpha) for date in dates]
    chunks = [(rp, list(chunk), config.granger_lag_max, config.significance_alpha)
              for chunk in np.array_split(np.array(dates), workers) if len(chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_granger_chunk, chunks))
    merged = [o for part in parts for o in part]
    return sorted(merged, key=lambda o: o.date)


def stage_granger(config: RunConfig) -> dict:
    rp = _returns_panel_for(config)
    outcomes = compute_daily_outcomes(rp, config)
    digest = config.digest()
    rows = []
    for outcome in outcomes:
        n = len(outcome.codes)
        for i in range(n):
            for j in range(n):
                if i == j or np.isnan(outcome.p_values[i, j]):
                    continue
                rows.append([outcome.date, outcome.codes[i], outcome.codes[j],
                             int(outcome.lags[i, j]),
                             _fmt(outcome.p_values[i, j]),
                             int(outcome.significant[i, j])])
    _write_csv(_out(config, "granger_daily.csv"),
               ["date", "cause", "effect", "lag", "p_value", "significant"],
               rows, digest)
    tallies = tally(outcomes)
    rows = [[code, t.top_influencer_days, t.total_causal_impacts,
             _fmt(t.times_log)] for code, t in sorted(tallies.items())]
    _write_csv(_out(config, "granger_tally.csv"),
               ["code", "bool_days", "total", "times_log"], rows, digest)
    return {"artifacts": ["granger_daily.csv", "granger_tally.csv"],
            "n_days": len(outcomes)}


def _metric_vectors(influences: dict[str, FevdInfluence] | dict[str, dict],
                    tallies: dict[str, InfluenceTally] | dict[str, dict],
                    ) -> dict[str, dict[str, float]]:
    """model -> code -> dependent value; unstable stocks carry no FEVD rows."""
    values: dict[str, dict[str, float]] = {m: {} for m in MODELS}
    for code, t in tallies.items():
        bool_days = t["bool_days"] if isinstance(t, dict) else t.top_influencer_days
        times_log = t["times_log"] if isinstance(t, dict) else t.times_log
        values["significant001_bool"][code] = float(bool_days)
        values["significant001_times_log"][code] = float(times_log)
    for code, r in influences.items():
        stable = r["stable"] if isinstance(r, dict) else r.stable
        if not stable:
            continue
        sum_fevd = r["sum_fevd"] if isinstance(r, dict) else r.sum_fevd
        per_unit = (r["influence_per_unit_trade"] if isinstance(r, dict)
                    else r.influence_per_unit_trade)
        values["sum_fevd"][code] = float(sum_fevd)
        values["influence_per_unit_trade"][code] = float(per_unit)
    return values


def run_regressions(edm_codes: list[str], matrix: np.ndarray,
                    column_names: list[str],
                    metric_values: dict[str, dict[str, float]],
                    config: RunConfig) -> dict[str, StepwiseResult]:
    results = {}
    for model in MODELS:
        values = metric_values[model]
        rows = [i for i, code in enumerate(edm_codes) if code in values]
        if len(rows) < 8:
            raise NumericalError(f"model {model}: only {len(rows)} usable rows")
        y = np.array([values[edm_codes[i]] for i in rows])
        results[model] = stepwise_prune(matrix[rows], y, column_names, model,
                                        config.condition_ceiling, config.p_screen)
    return results


def write_regression_outputs(results: dict[str, StepwiseResult],
                             config: RunConfig) -> list[str]:
    digest = config.digest()
    artifacts = []
    for model, res in sorted(results.items()):
        rows = [["const", _fmt(res.intercept[0]), _fmt(res.intercept[1]),
                 _fmt(res.intercept[2]), significance_stars(res.intercept[2])]]
        for name, coef, se, p, star in zip(res.columns, res.coefficients,
                                           res.stderr, res.pvalues, res.stars):
            rows.append([name, _fmt(coef), _fmt(se), _fmt(p), star])
        name = f"regression_{model}.csv"
        _write_csv(_out(config, name),
                   ["variable", "coefficient", "std_err", "p_value", "stars"],
                   rows, digest)
        trace_name = f"pruning_trace_{model}.json"
        _write_json(_out(config, trace_name), {
            "config_digest": digest,
            "model": model,
            "removed": [{"column": c, "reason": r} for c, r in res.trace],
            "final_condition_number": (None if np.isnan(res.final_condition_number)
                                       else res.final_condition_number),
            "intercept_only": res.intercept_only,
        })
        artifacts += [name, trace_name]
    return artifacts


def stage_regress(config: RunConfig) -> dict:
    header, rows = _read_csv(_out(config, "design_matrix.csv"))
    codes = [r[0] for r in rows]
    matrix = np.array([[float(x) for x in r[1:]] for r in rows])
    column_names = header[1:]

    _, irows = _read_csv(_out(config, "influence.csv"))
    influences = {r[0]: {"sum_fevd": float(r[2]),
                         "influence_per_unit_trade": float(r[3]),
                         "stable": r[5] == "1"} for r in irows}
    _, trows = _read_csv(_out(config, "granger_tally.csv"))
    tallies = {r[0]: {"bool_days": int(r[1]), "times_log": float(r[3])}
               for r in trows}
    metric_values = _metric_vectors(influences, tallies)
    results = run_regressions(codes, matrix, column_names, metric_values, config)
    artifacts = write_regression_outputs(results, config)
    return {"artifacts": artifacts,
            "surviving": {m: len(r.columns) for m, r in results.items()}}


def load_regression_csv(path: str, model: str) -> StepwiseResult:
    header, rows = _read_csv(path)
    columns, coefs, errs, pvals, stars = [], [], [], [], []
    intercept = (np.nan, np.nan, np.nan)
    for r in rows:
        if r[0] == "const":
            intercept = (float(r[1]), float(r[2]), float(r[3]))
            continue
        columns.append(r[0])
        coefs.append(float(r[1]))
        errs.append(float(r[2]))
        pvals.append(float(r[3]))
        stars.append(r[4])
    return StepwiseResult(model, columns, np.array(coefs), np.array(errs),
                          np.array(pvals), stars, intercept, np.nan, [])


def stage_validate(config: RunConfig) -> dict:
    results = {model: load_regression_csv(_out(config, f"regression_{model}.csv"),
                                          model) for model in MODELS}
    report_path = _out(config, "encoding_report.json")
    if not os.path.exists(report_path):
        raise StageError("upstream stage missing: encoding_report.json not "
                         "found; run 'prep' first")
    with open(report_path) as fh:
        encoding = json.load(fh)
    sources = {}
    for entry in encoding["variables"]:
        for col in entry.get("columns", []):
            sources[col] = entry["name"]
    report = cross_validate(results, sources, config.validation_sig_level,
                            config.validation_min_models)
    rows = [[e.variable, ";".join(e.models), len(e.models),
             int(e.validated), int(e.sign_consistent)]
            for e in report.entries]
    _write_csv(_out(config, "validated_determinants.csv"),
               ["variable", "models", "n_models", "validated", "sign_consistent"],
               rows, config.digest())
    return {"artifacts": ["validated_determinants.csv"],
            "validated": report.validated_variables()}


def stage_synth(config: RunConfig) -> dict:
    from .synthetic import scenario_from_file, write_scenario
    scenario = scenario_from_file(config.scenario_path)
    paths = write_scenario(scenario, config.output_dir)
    return {"artifacts": [os.path.basename(p) for p in paths.values()],
            "seed": scenario.seed}


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "returns": stage_returns,
    "prep": stage_prep,
    "fevd": stage_fevd,
    "granger": stage_granger,
    "regress": stage_regress,
    "validate": stage_validate,
    "synth": stage_synth,
}

_STAGE_INPUTS = {
    "ingest": ("bars_path", "factors_path", "calendar_path", "fundamentals_path"),
    "returns": ("bars_path", "factors_path", "calendar_path"),
    "prep": ("fundamentals_path",),
    "fevd": ("calendar_path",),
    "granger": ("calendar_path",),
    "regress": (),
    "validate": (),
    "synth": ("scenario_path",),
}


def write_manifest(config: RunConfig, stages: list[str]) -> None:
    inputs = {}
    for stage in stages:
        for attr in _STAGE_INPUTS[stage]:
            path = getattr(config, attr)
            if os.path.exists(path):
                inputs[path] = _sha256(path)
    import scipy
    payload = {
        "config": config.snapshot(),
        "config_digest": config.digest(),
        "inputs": inputs,
        "versions": {
            "bellwether": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    _write_json(_out(config, "manifest.json"), payload)


def write_run_summary(config: RunConfig, summary: dict) -> str:
    if config.report_format == "json":
        path = _out(config, "run_summary.json")
        _write_json(path, summary)
    else:
        path = _out(config, "run_summary.csv")
        rows = [[key, json.dumps(value, sort_keys=True)]
                for key, value in sorted(summary.items())]
        _write_csv(path, ["key", "value"], rows, config.digest())
    return path


def run(subcommand: str, config: RunConfig) -> dict:
    """Execute one subcommand (or ``all``) and return its summary dict."""
    config.validate()
    if subcommand != "all" and subcommand not in _STAGE_FUNCS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    os.makedirs(config.output_dir, exist_ok=True)
    stages = list(STAGES) if subcommand == "all" else [subcommand]
    summary: dict = {"subcommand": subcommand,
                     "config_digest": config.digest(), "stages": {}}
    for stage in stages:
        log.info("running stage %s", stage)
        summary["stages"][stage] = _STAGE_FUNCS[stage](config)
    write_manifest(config, stages)
    summary_path = write_run_summary(config, summary)
    summary["summary_path"] = summary_path
    return summary


# ---------------------------------------------------------------------------
# in-memory composition used by the synthetic recovery experiment and tests

@dataclass
class PipelineResults:
    return_panel: ReturnPanel
    influences: dict[str, FevdInfluence]
    outcomes: list[GrangerDayOutcome]
    tallies: dict[str, InfluenceTally]
    encoded: EncodedDesignMatrix
    metric_values: dict[str, dict[str, float]]
    regressions: dict[str, StepwiseResult]
    validation: ValidationReport


def run_in_memory(panel: BarPanel, fundamentals: FundamentalsTable,
                  config: RunConfig) -> PipelineResults:
    """The whole flow on in-memory structures, no files involved."""
    config.validate()
    rp = build_return_panel(panel, config.max_missing_bars)
    influences = {code: fevd_influence(rp, code, config.fevd_horizon,
                                       config.var_p_max, config.cholesky_ordering)
                  for code in sorted(rp.codes)}
    outcomes = [daily_matrix(rp, date, config.granger_lag_max,
                             config.significance_alpha)
                for date in rp.calendar.dates]
    tallies = tally(outcomes)
    _, _, encoded = prepare_fundamentals(fundamentals, config)
    metric_values = _metric_vectors(influences, tallies)
    regressions = run_regressions(encoded.codes, encoded.matrix,
                                  encoded.column_names(), metric_values, config)
    validation = cross_validate(regressions, encoded.source_map(),
                                config.validation_sig_level,
                                config.validation_min_models)
    return PipelineResults(rp, influences, outcomes, tallies, encoded,
                           metric_values, regressions, validation)
