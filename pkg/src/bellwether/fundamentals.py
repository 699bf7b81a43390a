"""Cleaning, imputation, transformation, and encoding of the fundamentals table.

The processing chain is drop_sparse_variables -> impute_by_size ->
log_transform_large -> one_hot_encode.  Each step returns a new table; the
final step produces the numeric design matrix fed to the leadership
regressions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

# Fixed level-to-code assignments for the Chinese bank regulatory variables.
# Any level not listed gets a deterministic extension code after the maximum.
KNOWN_LEVEL_CODES: dict[str, dict[str, int]] = {
    "Regulatory requirements for personal mortgages": {
        "32.5%": 3, "12.5%": 2, "20.0%": 0, "17.5%": 1,
    },
    "Total loan regulatory requirements": {
        "40%": 3, "27.5%": 0, "22.5%": 1, "17.5%": 2,
    },
    "Decrease in Reserve Requirement Ratio Since December 2021": {
        "-1%": 1, "-0.75%": 0,
    },
    "Reduction in Reserve Ratio Boosts Interest Spread": {
        "0.03%": 2, "0.02%": 1, "0.01%": 0,
    },
    "Core Tier 1 adequacy ratio regulatory requirement": {
        "8.50%": 4, "8.25%": 2, "8.00%": 0, "7.75%": 1, "7.50%": 3,
    },
    "Tier 1 Capital Regulatory Adequacy Ratio": {
        "9.5%": 4, "9.25%": 2, "9.00%": 0, "8.75%": 1, "8.5%": 3,
    },
    "Capital adequacy ratio regulatory requirement": {
        "11.50%": 4, "11.25%": 2, "11.00%": 0, "10.75%": 1, "10.50%": 3,
    },
    "Years when core Tier 1 adequacy ratio hit regulatory floor": {
        "no": 0, "2033-2027": 3, "2026": 2, "2024": 1,
    },
    "Years when Tier 1 capital adequacy ratio hit regulatory floor": {
        "no": 0, "2026": 3, "2024": 2, "after 2026": 1,
    },
    "Year When Capital Adequacy Ratio Hits Regulatory Floor": {
        "no": 0, "afeter2025": 2, "2024-2025": 1,
    },
}

MAX_ONE_HOT_LEVELS = 16


@dataclass
class Variable:
    """Per-variable metadata carried alongside the cell values.

    ``support`` is the fraction of stocks whose original (pre-imputation)
    cell was both non-missing and nonzero; it is frozen at load time and
    drives the 4/n one-hot recoding rule for numeric variables.
    """

    name: str
    kind: str  # "numeric" | "categorical" | "boolean"
    missing_fraction: float
    mean: float | None
    support: float
    transform: str = "none"


@dataclass
class FundamentalsTable:
    """Per-stock fundamentals: one row per stock, one entry per variable.

    ``values[name]`` holds one cell per stock in ``codes`` order; missing
    cells are None.  Numeric cells are floats, boolean cells are bools, and
    categorical cells are the raw (stripped) strings.
    """

    codes: list[str]
    variables: list[Variable]
    values: dict[str, list]

    @property
    def n_stocks(self) -> int:
        return len(self.codes)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]


@dataclass
class ColumnInfo:
    """Traceability record for one encoded design-matrix column."""

    name: str
    source: str
    transform: str  # "none" | "log" | "one-hot"
    level: str | None = None
    level_code: int | None = None


@dataclass
class EncodedDesignMatrix:
    codes: list[str]
    matrix: np.ndarray  # (n_stocks, n_columns), float, no missing entries
    columns: list[ColumnInfo]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def source_map(self) -> dict[str, str]:
        return {c.name: c.source for c in self.columns}


def classify_cells(raw_cells: list[str]) -> tuple[str, list]:
    """Infer a variable's kind from raw cell strings and parse the cells.

    Empty strings are missing.  A variable is boolean when every observed
    cell is yes/no, numeric when every observed cell parses as a float, and
    categorical otherwise (cells kept as stripped strings).
    """
    stripped = [c.strip() for c in raw_cells]
    observed = [c for c in stripped if c != ""]
    if observed and all(c.lower() in ("yes", "no") for c in observed):
        return "boolean", [None if c == "" else c.lower() == "yes" for c in stripped]
    try:
        parsed = [None if c == "" else float(c) for c in stripped]
        if observed:
            return "numeric", parsed
    except ValueError:
        pass
    return "categorical", [None if c == "" else c for c in stripped]


def build_variable(name: str, kind: str, cells: list) -> Variable:
    n = len(cells)
    n_missing = sum(1 for c in cells if c is None)
    mean = None
    if kind == "numeric":
        obs = [c for c in cells if c is not None]
        mean = float(np.mean(obs)) if obs else None
        support = sum(1 for c in cells if c is not None and c != 0) / n
    else:
        support = (n - n_missing) / n
    return Variable(name, kind, n_missing / n, mean, support)


def drop_sparse_variables(table: FundamentalsTable,
                          missing_threshold: float = 0.20) -> FundamentalsTable:
    """Remove variables whose missing fraction strictly exceeds the threshold."""
    kept, dropped = [], []
    for v in table.variables:
        (dropped if v.missing_fraction > missing_threshold else kept).append(v)
    if dropped:
        log.info("dropped %d sparse variables: %s",
                 len(dropped), [v.name for v in dropped])
    values = {v.name: list(table.values[v.name]) for v in kept}
    return FundamentalsTable(list(table.codes), [replace(v) for v in kept], values)


def size_terciles(size_values: list[float]) -> np.ndarray:
    """Assign each stock to a size tercile (0 = smallest third)."""
    order = np.argsort(np.asarray(size_values, dtype=float), kind="stable")
    buckets = np.empty(len(size_values), dtype=int)
    for b, chunk in enumerate(np.array_split(order, 3)):
        buckets[chunk] = b
    return buckets


def _mode(values: list) -> object:
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return sorted((k for k, c in counts.items() if c == best), key=str)[0]


def impute_by_size(table: FundamentalsTable, size_variable: str) -> FundamentalsTable:
    """Fill missing cells from same-size-tercile peers.

    Numeric cells take the tercile mean of observed values, categorical and
    boolean cells the tercile mode; a tercile with no observation falls back
    to the global mean/mode (logged).  The size variable must be a fully
    observed numeric column since it anchors the bucketing.
    """
    size_var = table.variable(size_variable)
    size_cells = table.values[size_variable]
    if size_var.kind != "numeric" or any(c is None for c in size_cells):
        raise ValueError(
            f"size variable {size_variable!r} must be numeric and fully observed")
    buckets = size_terciles(size_cells)

    values = {}
    for v in table.variables:
        cells = list(table.values[v.name])
        if any(c is None for c in cells):
            for b in range(3):
                idx = [i for i in range(len(cells)) if buckets[i] == b]
                holes = [i for i in idx if cells[i] is None]
                if not holes:
                    continue
                obs = [cells[i] for i in idx if cells[i] is not None]
                if not obs:
                    obs = [c for c in cells if c is not None]
                    log.warning("variable %r has no observed value in tercile %d; "
                                "global fallback used", v.name, b)
                if not obs:
                    raise ValueError(f"variable {v.name!r} has no observed values")
                fill = float(np.mean(obs)) if v.kind == "numeric" else _mode(obs)
                for i in holes:
                    cells[i] = fill
        values[v.name] = cells
    variables = [build_variable(v.name, v.kind, values[v.name]) for v in table.variables]
    # support is frozen at load time; rebuild metadata but keep the original
    # support and transform so the encoding rule is stable across passes
    for new, old in zip(variables, table.variables):
        new.support = old.support
        new.transform = old.transform
    return FundamentalsTable(list(table.codes), variables, values)


def log_transform_large(table: FundamentalsTable,
                        mean_threshold: float = 100.0) -> FundamentalsTable:
    """Shrink numeric variables whose mean absolute value exceeds the threshold.

    The transform is sign-preserving, x -> sign(x) * ln(1 + |x|), so zeros map
    to zero and negative values stay negative.
    """
    values = {}
    variables = []
    for v in table.variables:
        cells = list(table.values[v.name])
        nv = replace(v)
        if v.kind == "numeric" and v.transform == "none":
            obs = [c for c in cells if c is not None]
            if obs and float(np.mean(np.abs(obs))) > mean_threshold:
                cells = [None if c is None else math.copysign(math.log1p(abs(c)), c)
                         for c in cells]
                obs = [c for c in cells if c is not None]
                nv.transform = "log"
                nv.mean = float(np.mean(obs)) if obs else None
        values[v.name] = cells
        variables.append(nv)
    return FundamentalsTable(list(table.codes), variables, values)


def _level_codes(var: Variable, levels: list) -> dict:
    """Map observed levels to integer codes, preferring the built-in tables."""
    known = KNOWN_LEVEL_CODES.get(var.name)
    if var.kind == "boolean":
        return {False: 0, True: 1}
    if var.kind == "numeric":
        return {lv: i for i, lv in enumerate(sorted(levels))}
    try:
        ordered = sorted(levels, key=float)
    except (TypeError, ValueError):
        ordered = sorted(levels)
    if known is None:
        return {lv: i for i, lv in enumerate(ordered)}
    codes = {lv: known[lv] for lv in levels if lv in known}
    unknown = [lv for lv in ordered if lv not in known]
    if unknown:
        log.warning("variable %r has levels outside the built-in code table: %s",
                    var.name, unknown)
        nxt = max(known.values()) + 1
        for lv in unknown:
            codes[lv] = nxt
            nxt += 1
    return codes


def one_hot_encode(table: FundamentalsTable,
                   n_stocks: int | None = None,
                   support_threshold: float | None = None) -> EncodedDesignMatrix:
    """Expand the table into a fully numeric design matrix.

    Categorical and boolean variables become indicator columns named
    ``<var>_<code>``, one per observed level (full encoding; the downstream
    pruner handles the redundancy).  Numeric variables whose nonzero support
    is below the threshold (default 4/n) are recoded as categorical; all
    other numeric variables pass through.  Requires an already imputed table:
    missing cells are an error here.
    """
    n = n_stocks if n_stocks is not None else table.n_stocks
    threshold = support_threshold if support_threshold is not None else 4.0 / n

    cols: list[np.ndarray] = []
    infos: list[ColumnInfo] = []
    for v in table.variables:
        cells = table.values[v.name]
        if any(c is None for c in cells):
            raise ValueError(f"variable {v.name!r} still has missing cells; "
                             "impute before encoding")
        if v.kind == "numeric" and v.support >= threshold:
            cols.append(np.asarray(cells, dtype=float))
            infos.append(ColumnInfo(v.name, v.name, v.transform))
            continue
        levels = sorted(set(cells), key=str)
        if len(levels) > MAX_ONE_HOT_LEVELS:
            raise ValueError(f"variable {v.name!r} has {len(levels)} levels; "
                             f"refusing to one-hot encode more than "
                             f"{MAX_ONE_HOT_LEVELS}")
        codes = _level_codes(v, levels)
        for lv in sorted(levels, key=lambda x: codes[x]):
            cols.append(np.asarray([1.0 if c == lv else 0.0 for c in cells]))
            label = {True: "yes", False: "no"}.get(lv, str(lv))
            infos.append(ColumnInfo(f"{v.name}_{codes[lv]}", v.name, "one-hot",
                                    level=label, level_code=codes[lv]))
    matrix = np.column_stack(cols) if cols else np.empty((table.n_stocks, 0))
    return EncodedDesignMatrix(list(table.codes), matrix, infos)
