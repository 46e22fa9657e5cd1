"""Volatility forecasting from OHLC prices and search-trend features.

Daily Garman-Klass volatility, mutual-information selection of the
aggregation/normalization scheme, a single-block LSTM with prediction
feedback trained by BPTT + Adam, and GARCH/Ridge/Lasso benchmarks.
"""

from .errors import (
    ConvergenceError, DataError, EvaluationMismatch, InfeasibleSchemeError, TrainingError,
    TrendvolError, UsageError,
)
from .scheme import INF, Scheme

__version__ = "0.1.0"

__all__ = [
    "INF", "Scheme", "TrendvolError", "DataError", "InfeasibleSchemeError", "TrainingError",
    "ConvergenceError", "EvaluationMismatch", "UsageError", "__version__",
]
