"""Lead-stock detection in intra-industry price co-movement.

The package turns one year of 5-minute bars into four per-stock influence
metrics (two from forecast error variance decompositions of bivariate VARs
against an amount-weighted peer aggregate, two from daily Granger-causality
tallies) and regresses each metric on encoded fundamentals with
condition-number-pruned stepwise OLS, cross-validating determinants that
survive in at least two of the four models.
"""

__version__ = "0.1.0"

from .fundamentals import (EncodedDesignMatrix, FundamentalsTable,
                           drop_sparse_variables, impute_by_size,
                           log_transform_large, one_hot_encode)
from .granger import (GrangerDayOutcome, InfluenceTally, daily_matrix,
                      granger_test, tally)
from .ingest import (AdjustmentFactorSeries, BarPanel, BarSeries, DataError,
                     TradingCalendar, load_bars, load_calendar, load_factors,
                     load_fundamentals, load_panel, missing_count,
                     present_count, write_bars)
from .regression import (StepwiseResult, ValidationReport, condition_number,
                         cross_validate, stepwise_prune, vif_report,
                         worst_column)
from .returns import (PeerAggregate, ReturnPanel, adjusted_return_series,
                      build_return_panel, excess_returns, impute_returns,
                      impute_volume, peer_aggregate)
from .synthetic import (SyntheticScenario, fevd_oracle, generate_panel,
                        recovery_experiment, write_scenario)
from .varfevd import (AdfResult, DiagnosticsReport, FevdInfluence, FevdResult,
                      OlsResult, VarFit, adf_test, companion_eigenvalues,
                      durbin_watson, fevd, fevd_influence, fit_var, irf,
                      is_stable, jarque_bera, ols, select_lag_bic)

__all__ = [
    "AdfResult", "AdjustmentFactorSeries", "BarPanel", "BarSeries",
    "DataError", "DiagnosticsReport", "EncodedDesignMatrix", "FevdInfluence",
    "FevdResult", "FundamentalsTable", "GrangerDayOutcome", "InfluenceTally",
    "OlsResult", "PeerAggregate", "ReturnPanel", "StepwiseResult",
    "SyntheticScenario", "TradingCalendar", "ValidationReport", "VarFit",
    "adf_test", "adjusted_return_series", "build_return_panel",
    "companion_eigenvalues", "condition_number", "cross_validate",
    "daily_matrix", "drop_sparse_variables", "durbin_watson",
    "excess_returns", "fevd", "fevd_influence", "fevd_oracle", "fit_var",
    "generate_panel", "granger_test", "impute_by_size", "impute_returns",
    "impute_volume", "irf", "is_stable", "jarque_bera", "load_bars",
    "load_calendar", "load_factors", "load_fundamentals", "load_panel",
    "log_transform_large", "missing_count", "ols", "one_hot_encode",
    "peer_aggregate", "present_count", "recovery_experiment",
    "select_lag_bic", "stepwise_prune", "tally", "vif_report", "worst_column",
    "write_bars", "write_scenario",
]
