"""Stepwise OLS with condition-number pruning and cross-model validation.

All encoded fundamentals enter at once; columns are then removed in a loop:
standardize, drop the column most implicated in the worst near-dependency
until the condition number of the standardized design is below the ceiling
(and OLS is feasible), fit, drop every column with p above the screen, and
repeat until nothing moves.  A fundamental counts as a leadership
determinant when its columns reach the significance level in at least two
of the four metric models.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .varfevd import ols

log = logging.getLogger(__name__)


def standardize(design: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance columns; zero-variance columns are an error."""
    X = np.asarray(design, dtype=float)
    std = X.std(axis=0)
    if (std == 0).any():
        raise ValueError(f"zero-variance column(s) "
                         f"{np.nonzero(std == 0)[0].tolist()}; remove first")
    return (X - X.mean(axis=0)) / std


def _svd_cond(design_std: np.ndarray) -> tuple[float, int]:
    n, m = design_std.shape
    _, s, vh = np.linalg.svd(design_std, full_matrices=True)
    worst = int(np.argmax(np.abs(vh[-1])))
    if m > n or s[-1] == 0:
        return np.inf, worst
    return float(s[0] / s[-1]), worst


def condition_number(design_std: np.ndarray) -> float:
    """Largest over smallest singular value of a standardized design."""
    if design_std.shape[1] < 2:
        raise ValueError("need at least two columns")
    return _svd_cond(design_std)[0]


def worst_column(design_std: np.ndarray) -> int:
    """Column with the largest loading on the minimal singular direction."""
    if design_std.shape[1] < 2:
        raise ValueError("need at least two columns")
    return _svd_cond(design_std)[1]


def significance_stars(pvalue: float) -> str:
    if pvalue < 0.01:
        return "***"
    if pvalue < 0.05:
        return "**"
    return "*" if pvalue < 0.1 else ""


@dataclass
class StepwiseResult:
    """Final model for one dependent metric plus the full pruning trace."""

    model: str
    columns: list[str]
    coefficients: np.ndarray        # standardized-column scale
    stderr: np.ndarray
    pvalues: np.ndarray
    stars: list[str]
    intercept: tuple[float, float, float]   # (coefficient, stderr, p-value)
    final_condition_number: float
    trace: list[tuple[str, str]]    # (column, "condition" | "p-value")
    intercept_only: bool = False

    def pvalue_of(self, column: str) -> float:
        return float(self.pvalues[self.columns.index(column)])

    def coefficient_of(self, column: str) -> float:
        return float(self.coefficients[self.columns.index(column)])


def stepwise_prune(design: np.ndarray, y: np.ndarray, column_names: list[str],
                   model: str = "", condition_ceiling: float = 100.0,
                   p_screen: float = 0.5) -> StepwiseResult:
    """Iteratively prune the design and fit the surviving regression.

    Pruning alternates a condition stage (also invoked whenever the column
    count makes OLS infeasible) with a p-value screen; the intercept is
    exempt from both.  Coefficients are reported on the standardized scale,
    which leaves the p-values unchanged.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = X.shape
    if len(column_names) != m:
        raise ValueError("column_names does not match the design width")
    if n < 8:
        raise ValueError(f"need at least 8 rows, got {n}")
    if not np.isfinite(y).all():
        raise ValueError("dependent variable has non-finite entries")

    active = list(range(m))
    trace: list[tuple[str, str]] = []
    for j in [j for j in active if X[:, j].std() == 0]:
        active.remove(j)
        trace.append((column_names[j], "condition"))

    fit = None
    while True:
        removed = False
        while len(active) >= 2:
            Xs = standardize(X[:, active])
            cond, worst = _svd_cond(Xs)
            if len(active) < n - 1 and cond < condition_ceiling:
                break
            trace.append((column_names[active[worst]], "condition"))
            del active[worst]
            removed = True
        if not active:
            break
        Xs = standardize(X[:, active])
        fit = ols(np.column_stack([np.ones(n), Xs]), y)
        drop = [k for k in range(len(active)) if fit.pvalues[1 + k] > p_screen]
        for k in reversed(drop):
            trace.append((column_names[active[k]], "p-value"))
            del active[k]
            removed = True
        if not removed:
            break

    if not active:
        log.warning("model %s: every column was eliminated; reporting an "
                    "intercept-only fit", model or "<unnamed>")
        fit = ols(np.ones((n, 1)), y)
        return StepwiseResult(model, [], np.empty(0), np.empty(0), np.empty(0),
                              [], (float(fit.params[0]), float(fit.stderr[0]),
                                   float(fit.pvalues[0])),
                              np.nan, trace, intercept_only=True)

    Xs = standardize(X[:, active])
    fit = ols(np.column_stack([np.ones(n), Xs]), y)
    final_cond = _svd_cond(Xs)[0] if len(active) >= 2 else 1.0
    return StepwiseResult(
        model, [column_names[j] for j in active],
        fit.params[1:].copy(), fit.stderr[1:].copy(), fit.pvalues[1:].copy(),
        [significance_stars(p) for p in fit.pvalues[1:]],
        (float(fit.params[0]), float(fit.stderr[0]), float(fit.pvalues[0])),
        final_cond, trace)


def vif_report(design: np.ndarray) -> np.ndarray:
    """Variance inflation factor of every column against all the others."""
    X = np.asarray(design, dtype=float)
    n, m = X.shape
    if m < 2:
        raise ValueError("VIF needs at least two columns")
    out = np.empty(m)
    for j in range(m):
        others = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        target = X[:, j]
        try:
            fit = ols(others, target)
        except np.linalg.LinAlgError:
            out[j] = np.inf
            continue
        tss = float(np.square(target - target.mean()).sum())
        r2 = 1.0 - fit.ssr / tss if tss > 0 else 1.0
        out[j] = np.inf if r2 >= 1.0 else 1.0 / (1.0 - r2)
    return out


@dataclass
class ValidationEntry:
    variable: str
    models: tuple[str, ...]
    validated: bool
    sign_consistent: bool
    details: tuple  # (model, column, coefficient, p-value)


@dataclass
class ValidationReport:
    entries: list[ValidationEntry]
    partial: bool = False

    def validated_variables(self) -> list[str]:
        return [e.variable for e in self.entries if e.validated]

    def entry(self, variable: str) -> ValidationEntry:
        for e in self.entries:
            if e.variable == variable:
                return e
        raise KeyError(variable)


def cross_validate(results: dict[str, StepwiseResult],
                   column_sources: dict[str, str],
                   sig_level: float = 0.1,
                   min_models: int = 2,
                   expected_models: int = 4) -> ValidationReport:
    """Mark fundamentals significant in enough metric models as validated.

    A source variable is validated when its encoded columns reach the
    significance level in at least ``min_models`` of the model results; a
    sign flip of the same column across models is flagged but does not
    revoke validation.
    """
    hits: dict[str, list] = {}
    for model in sorted(results):
        res = results[model]
        for col, coef, p in zip(res.columns, res.coefficients, res.pvalues):
            if p < sig_level:
                source = column_sources.get(col, col)
                hits.setdefault(source, []).append((model, col, float(coef),
                                                    float(p)))
    entries = []
    for variable in sorted(hits):
        details = hits[variable]
        models = tuple(sorted({m for m, *_ in details}))
        by_column: dict[str, set] = {}
        for _, col, coef, _ in details:
            by_column.setdefault(col, set()).add(coef > 0)
        consistent = all(len(signs) == 1 for signs in by_column.values())
        entries.append(ValidationEntry(variable, models,
                                       len(models) >= min_models,
                                       consistent, tuple(details)))
    partial = len(results) < expected_models
    if partial:
        log.warning("cross-validation ran with %d of %d models",
                    len(results), expected_models)
    return ValidationReport(entries, partial)
