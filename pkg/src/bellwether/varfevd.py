"""Vector-autoregression kernel and the FEVD influence metrics.

Everything here is a pure function of ndarray inputs: equation-by-equation
OLS, VAR(p) fitting with BIC lag selection on a common sample, companion
stability analysis, Durbin-Watson / Jarque-Bera / augmented Dickey-Fuller
diagnostics, orthogonalized impulse responses, forecast error variance
decomposition, and the per-stock influence scores built on top.

Conventions: a multivariate series is a (T, k) array with variables in
columns; lag matrices ``coefs[l][i, j]`` give the effect of variable j at
lag l+1 on variable i.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

# Response-surface constants for the unit-root t-statistic critical values
# (single series, intercept, no trend): crit = b0 + b1/T + b2/T^2 + b3/T^3.
ADF_CRITICAL_SURFACE = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.04),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}


@dataclass
class OlsResult:
    params: np.ndarray
    stderr: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    residuals: np.ndarray
    ssr: float
    sigma2: float
    nobs: int
    df_resid: int


def ols(design: np.ndarray, response: np.ndarray) -> OlsResult:
    """Least squares with classical standard errors and two-sided t tests.

    The design matrix is used as given (add an intercept column yourself).
    Raises on rank deficiency, which signals that upstream pruning is
    required rather than silently dropping a direction.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more rows than columns (n={n}, p={p})")
    params, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < p:
        raise np.linalg.LinAlgError(
            f"rank-deficient design (rank {rank} < {p} columns); prune first")
    resid = y - X @ params
    ssr = float(resid @ resid)
    df = n - p
    sigma2 = ssr / df
    xtx_inv = np.linalg.inv(X.T @ X)
    stderr = np.sqrt(np.clip(sigma2 * np.diag(xtx_inv), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = np.where(stderr > 0, params / stderr, np.inf * np.sign(params))
    pvals = 2.0 * stats.t.sf(np.abs(tvals), df)
    return OlsResult(params, stderr, tvals, pvals, resid, ssr, sigma2, n, df)


@dataclass
class VarFit:
    """Estimated VAR(p): intercept, lag matrices, residual covariance."""

    p: int
    intercept: np.ndarray          # (k,)
    coefs: list[np.ndarray]        # p matrices of shape (k, k)
    sigma: np.ndarray              # (k, k), divisor nobs - k*p - 1
    k: int
    nobs: int = 0                  # effective sample (rows actually regressed)
    residuals: np.ndarray | None = None
    bic: float = np.nan
    stderr: np.ndarray | None = None


def _lagged_design(series: np.ndarray, p: int, t0: int) -> tuple[np.ndarray, np.ndarray]:
    T, k = series.shape
    rows = T - t0
    X = np.empty((rows, 1 + k * p))
    X[:, 0] = 1.0
    for lag in range(1, p + 1):
        X[:, 1 + (lag - 1) * k: 1 + lag * k] = series[t0 - lag: T - lag]
    return X, series[t0:]


def _fit_var_at(series: np.ndarray, p: int, t0: int) -> VarFit:
    X, Y = _lagged_design(series, p, t0)
    rows, k = Y.shape
    n_params = 1 + k * p
    if rows <= n_params:
        raise ValueError(f"insufficient observations: {rows} rows for "
                         f"{n_params} parameters per equation")
    coef = np.linalg.lstsq(X, Y, rcond=None)[0]   # (1 + kp, k)
    resid = Y - X @ coef
    df = rows - n_params
    sigma = resid.T @ resid / df
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.outer(np.diag(xtx_inv), np.diag(resid.T @ resid / df)))
    intercept = coef[0]
    mats = [coef[1 + (lag - 1) * k: 1 + lag * k].T.copy() for lag in range(1, p + 1)]
    sigma_ml = resid.T @ resid / rows
    sign, logdet = np.linalg.slogdet(sigma_ml)
    bic = (logdet if sign > 0 else np.inf) + np.log(rows) / rows * k * n_params
    return VarFit(p, intercept, mats, sigma, k, rows, resid, bic, se.T)


def fit_var(series: np.ndarray, p: int) -> VarFit:
    """Equation-by-equation OLS estimate of a VAR(p) with intercept."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 2:
        raise ValueError("series must be (T, k)")
    if np.isnan(series).any():
        raise ValueError("series contains missing values")
    if p < 1:
        raise ValueError("lag order must be at least 1")
    spans = series.max(axis=0) - series.min(axis=0)
    if (spans == 0).any():
        raise ValueError(f"variable(s) {np.nonzero(spans == 0)[0].tolist()} "
                         "are constant")
    return _fit_var_at(series, p, p)


def select_lag_bic(series: np.ndarray, p_max: int) -> int:
    """Smallest-BIC lag order over 1..p_max, all fitted on a common sample.

    Every candidate regresses the same T - p_max target rows so the criteria
    are comparable; the criterion is ln det of the ML residual covariance
    plus (ln T*/T*) times the total estimated parameter count.
    """
    series = np.asarray(series, dtype=float)
    if p_max < 1:
        raise ValueError("p_max must be at least 1")
    best_p, best_bic = 1, np.inf
    for p in range(1, p_max + 1):
        fit = _fit_var_at(series, p, p_max)
        if fit.bic < best_bic:
            best_p, best_bic = p, fit.bic
    return best_p


def companion_matrix(fit: VarFit) -> np.ndarray:
    k, p = fit.k, fit.p
    comp = np.zeros((k * p, k * p))
    comp[:k] = np.hstack(fit.coefs)
    if p > 1:
        comp[k:, :-k] = np.eye(k * (p - 1))
    return comp


def companion_eigenvalues(fit: VarFit) -> np.ndarray:
    """Moduli of the companion-matrix eigenvalues, descending."""
    moduli = np.abs(np.linalg.eigvals(companion_matrix(fit)))
    return np.sort(moduli)[::-1]


def is_stable(fit: VarFit) -> bool:
    return bool(companion_eigenvalues(fit).max() < 1.0)


def durbin_watson(residuals: np.ndarray) -> float:
    """Sum of squared first differences over the sum of squares, in [0, 4]."""
    e = np.asarray(residuals, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two residuals")
    denom = float(e @ e)
    if denom == 0:
        raise ValueError("all residuals are zero")
    return float(np.square(np.diff(e)).sum() / denom)


def jarque_bera(sample: np.ndarray) -> tuple[float, float]:
    """Normality statistic from sample skewness and kurtosis, chi2(2) p-value."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    if n < 8:
        raise ValueError("need at least 8 observations")
    if x.max() == x.min():
        raise ValueError("sample has zero variance")
    centered = x - x.mean()
    m2 = float(np.mean(centered ** 2))
    skew = float(np.mean(centered ** 3)) / m2 ** 1.5
    kurt = float(np.mean(centered ** 4)) / m2 ** 2
    jb = n / 6.0 * (skew ** 2 + (kurt - 3.0) ** 2 / 4.0)
    return jb, float(stats.chi2.sf(jb, 2))


@dataclass
class AdfResult:
    statistic: float
    reject_unit_root: bool
    lag: int
    critical_value: float
    critical_values: dict[str, float]


def adf_critical_value(nobs: int, level: str = "5%") -> float:
    b0, b1, b2, b3 = ADF_CRITICAL_SURFACE[level]
    return b0 + b1 / nobs + b2 / nobs ** 2 + b3 / nobs ** 3


def adf_test(series: np.ndarray, max_lag: int = 12, level: str = "5%") -> AdfResult:
    """Augmented Dickey-Fuller test with intercept and BIC-chosen lags.

    All lag candidates 0..max_lag are fitted on the common sample (dropping
    max_lag + 1 leading observations) and the difference-lag count minimizing
    the BIC is used; the unit root is rejected when the t-statistic of the
    lagged level falls below the response-surface critical value.
    """
    y = np.asarray(series, dtype=float)
    T = y.size
    if T <= 25:
        raise ValueError("series too short for a unit-root test")
    if y.max() == y.min():
        raise ValueError("series is constant")
    dy = np.diff(y)
    t0 = max_lag + 1                       # first usable index into y
    target = dy[max_lag:]
    rows = target.size
    if rows <= 3:
        raise ValueError(f"max_lag={max_lag} leaves only {rows} usable rows")
    X = np.empty((rows, 2 + max_lag))
    X[:, 0] = 1.0
    X[:, 1] = y[t0 - 1: T - 1]
    for lag in range(1, max_lag + 1):
        X[:, 1 + lag] = dy[max_lag - lag: dy.size - lag]
    gram = X.T @ X
    xty = X.T @ target
    yy = float(target @ target)

    best = None
    for lag in range(0, max_lag + 1):
        idx = list(range(2 + lag))
        n_params = len(idx)
        if rows <= n_params:
            break
        sub = gram[np.ix_(idx, idx)]
        try:
            coefs = np.linalg.solve(sub, xty[idx])
            sub_inv = np.linalg.inv(sub)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"degenerate regression at lag {lag}: {exc}") from None
        ssr = max(yy - coefs @ xty[idx], 0.0)
        if ssr <= 0:
            raise ValueError("perfect fit; series is deterministic")
        bic = rows * np.log(ssr / rows) + n_params * np.log(rows)
        if best is None or bic < best[0]:
            sigma2 = ssr / (rows - n_params)
            se = np.sqrt(sigma2 * sub_inv[1, 1])
            best = (bic, lag, float(coefs[1] / se))
    _, lag, statistic = best
    critical = {lvl: adf_critical_value(rows, lvl) for lvl in ADF_CRITICAL_SURFACE}
    return AdfResult(statistic, statistic < critical[level], lag,
                     critical[level], critical)


def irf(fit: VarFit, horizon: int, orthogonalized: bool = False) -> np.ndarray:
    """Impulse responses 0..horizon as an (horizon + 1, k, k) array.

    Entry [h, j, i] is variable j's response h periods after a unit shock to
    variable i.  For one lag the response at h is literally the h-th power of
    the coefficient matrix; for more lags it is the top-left block of the
    companion power.  Orthogonalized responses right-multiply by the lower
    Cholesky factor of the residual covariance.
    """
    k = fit.k
    comp = companion_matrix(fit)
    out = np.empty((horizon + 1, k, k))
    power = np.eye(comp.shape[0])
    out[0] = np.eye(k)
    for h in range(1, horizon + 1):
        power = power @ comp
        out[h] = power[:k, :k]
    if orthogonalized:
        try:
            chol = np.linalg.cholesky(fit.sigma)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                "residual covariance is not positive definite") from None
        out = out @ chol
    return out


@dataclass
class FevdResult:
    """shares[h-1, j, i]: fraction of variable j's h-step forecast error
    variance attributed to the orthogonal shock of variable i."""

    horizon: int
    shares: np.ndarray
    ordering: tuple[int, ...]

    def share(self, horizon: int, variable: int, shock: int) -> float:
        return float(self.shares[horizon - 1, variable, shock])


def fevd(fit: VarFit, horizon: int = 12,
         ordering: tuple[int, ...] | None = None) -> FevdResult:
    """Forecast error variance decomposition under a Cholesky ordering.

    The shock identified with variable ``ordering[0]`` may move every
    variable contemporaneously, the next one everything but the first, and
    so on.  Shares are returned in the original variable indexing.  An
    unstable fit only earns a warning: the finite-horizon decomposition is
    still well defined.
    """
    k = fit.k
    order = tuple(range(k)) if ordering is None else tuple(ordering)
    if sorted(order) != list(range(k)):
        raise ValueError(f"ordering must be a permutation of 0..{k - 1}")
    if not is_stable(fit):
        warnings.warn("FEVD of an unstable fit; shares remain valid only at "
                      "finite horizons", RuntimeWarning, stacklevel=2)
    perm = np.asarray(order)
    sigma_p = fit.sigma[np.ix_(perm, perm)]
    try:
        chol = np.linalg.cholesky(sigma_p)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "residual covariance is not positive definite") from None
    responses = irf(fit, horizon - 1)  # reduced form, 0..horizon-1
    shares = np.empty((horizon, k, k))
    acc = np.zeros((k, k))
    for h in range(1, horizon + 1):
        theta = responses[h - 1][np.ix_(perm, perm)] @ chol
        acc += theta ** 2
        shares[h - 1] = acc / acc.sum(axis=1, keepdims=True)
    inv = np.argsort(perm)
    return FevdResult(horizon, shares[:, inv][:, :, inv], order)


@dataclass
class DiagnosticsReport:
    """Residual and stability diagnostics for one estimated VAR."""

    durbin_watson: np.ndarray       # per equation
    jarque_bera_stats: np.ndarray   # per variable
    jarque_bera_pvalues: np.ndarray
    eigenvalue_moduli: np.ndarray
    stable: bool


def diagnostics_report(fit: VarFit) -> DiagnosticsReport:
    if fit.residuals is None:
        raise ValueError("fit carries no residuals")
    dw = np.array([durbin_watson(fit.residuals[:, j]) for j in range(fit.k)])
    jb = [jarque_bera(fit.residuals[:, j]) for j in range(fit.k)]
    moduli = companion_eigenvalues(fit)
    return DiagnosticsReport(dw, np.array([s for s, _ in jb]),
                             np.array([p for _, p in jb]), moduli,
                             bool(moduli.max() < 1.0))


@dataclass
class FevdInfluence:
    """The two FEVD-based influence metrics for one stock, with diagnostics."""

    code: str
    lag_order: int
    sum_fevd: float
    influence_per_unit_trade: float
    mean_amount: float
    diagnostics: DiagnosticsReport
    shares: np.ndarray              # (horizon, 2, 2) in (target, peer) indexing
    stable: bool


def fevd_influence(rp, target: str, horizon: int = 12, p_max: int = 12,
                   ordering: str = "target_first") -> FevdInfluence:
    """Score one stock's influence on its amount-weighted peer aggregate.

    Builds the bivariate (target excess return, peer aggregate) system,
    picks the lag by BIC, and sums the target-shock share of the peer
    aggregate's forecast error variance over horizons 1..horizon.  The
    second metric divides by the natural log of the target's mean interval
    trade amount.  Unstable fits are flagged, not raised; the caller decides
    whether to keep them.
    """
    from .returns import peer_aggregate  # local import to keep modules acyclic

    if ordering not in ("target_first", "peer_first"):
        raise ValueError(f"unknown ordering {ordering!r}")
    i = rp.row(target)
    aggregate = peer_aggregate(rp, target)
    system = np.column_stack([rp.returns[i], aggregate.series])
    p = select_lag_bic(system, p_max)
    fit = fit_var(system, p)
    report = diagnostics_report(fit)
    order = (0, 1) if ordering == "target_first" else (1, 0)
    decomp = fevd(fit, horizon, order) if report.stable else \
        _fevd_quiet(fit, horizon, order)
    total = float(decomp.shares[:, 1, 0].sum())
    mean_amount = float(rp.amounts[i].mean())
    if mean_amount <= 1.0:
        raise ValueError(f"{target}: mean trade amount {mean_amount} is "
                         "degenerate (log normalization undefined)")
    per_unit = total / float(np.log(mean_amount))
    return FevdInfluence(target, p, total, per_unit, mean_amount, report,
                         decomp.shares, report.stable)


def _fevd_quiet(fit: VarFit, horizon: int, order: tuple[int, ...]) -> FevdResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fevd(fit, horizon, order)
