"""Cross-checks of the estimation kernel against statsmodels.

These pin the hand-rolled numerics to a widely used reference on random
inputs; the Monte Carlo and closed-form oracles elsewhere remain the primary
contracts.
"""

import numpy as np
import pytest

statsmodels = pytest.importorskip("statsmodels")

import statsmodels.api as sm
from statsmodels.stats.stattools import durbin_watson as sm_dw
from statsmodels.tsa.api import VAR as SmVAR
from statsmodels.tsa.stattools import adfuller, grangercausalitytests

from bellwether.granger import _block_f
from bellwether.varfevd import (adf_test, durbin_watson, fevd, fit_var,
                                jarque_bera, ols)
from test_varfevd import simulate_var


@pytest.fixture
def data(rng):
    A = np.array([[0.45, 0.15], [0.1, 0.35]])
    return simulate_var([A], 600, rng)


class TestOlsAgainstStatsmodels:
    def test_params_and_pvalues(self, rng):
        X = np.column_stack([np.ones(80), rng.standard_normal((80, 3))])
        y = X @ np.array([0.5, 1.0, -2.0, 0.0]) + rng.standard_normal(80)
        ours = ols(X, y)
        theirs = sm.OLS(y, X).fit()
        np.testing.assert_allclose(ours.params, theirs.params, atol=1e-10)
        np.testing.assert_allclose(ours.stderr, theirs.bse, atol=1e-10)
        np.testing.assert_allclose(ours.pvalues, theirs.pvalues, atol=1e-10)


class TestVarAgainstStatsmodels:
    def test_coefficients_and_sigma(self, data):
        ours = fit_var(data, 2)
        theirs = SmVAR(data).fit(2, trend="c")
        np.testing.assert_allclose(ours.intercept, theirs.intercept, atol=1e-8)
        for lag in range(2):
            np.testing.assert_allclose(ours.coefs[lag], theirs.coefs[lag],
                                       atol=1e-8)
        np.testing.assert_allclose(ours.sigma, theirs.sigma_u, atol=1e-8)

    def test_fevd_decomposition(self, data):
        ours = fevd(fit_var(data, 1), 12)
        theirs = SmVAR(data).fit(1, trend="c").fevd(12).decomp
        # statsmodels indexes [variable, horizon, shock]
        np.testing.assert_allclose(ours.shares,
                                   np.transpose(theirs, (1, 0, 2)), atol=1e-8)


class TestDiagnosticsAgainstReferences:
    def test_durbin_watson(self, rng):
        e = rng.standard_normal(500)
        assert durbin_watson(e) == pytest.approx(sm_dw(e), abs=1e-12)

    def test_jarque_bera(self, rng):
        from scipy import stats
        x = rng.standard_t(5, 800)
        stat, p = jarque_bera(x)
        ref = stats.jarque_bera(x)
        assert stat == pytest.approx(ref.statistic, rel=1e-9)
        assert p == pytest.approx(ref.pvalue, abs=1e-9)

    def test_adf_statistic_no_augmentation(self, rng):
        x = rng.standard_normal(300).cumsum()
        ours = adf_test(x, max_lag=0)
        stat, _, usedlag, _, crit = adfuller(x, maxlag=0, regression="c",
                                             autolag=None)
        assert ours.statistic == pytest.approx(stat, abs=1e-8)
        assert ours.critical_values["5%"] == pytest.approx(crit["5%"], abs=5e-3)
        assert ours.critical_values["1%"] == pytest.approx(crit["1%"], abs=5e-3)

    def test_granger_f_at_fixed_lag(self, rng):
        x = rng.standard_normal(120)
        y = np.empty(120)
        y[0] = 0.0
        y[1:] = 0.5 * x[:-1] + rng.standard_normal(119)
        for lag in (1, 2, 3):
            ours = _block_f(y, x, lag, t0=lag)
            res = grangercausalitytests(np.column_stack([y, x]), maxlag=[lag],
                                        verbose=False)
            f_ref, p_ref, _, _ = res[lag][0]["ssr_ftest"]
            assert ours.fstat == pytest.approx(f_ref, rel=1e-8)
            assert ours.p_value == pytest.approx(p_ref, abs=1e-10)
