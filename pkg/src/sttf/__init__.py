"""Next-interval traffic flow forecasting from EMD features with an
attention LSTM, plus classical comparison baselines."""

from .emd import EmdConfig, ImfSet, decompose
from .forecaster import SttfModel, fit, load_model, predict_next, save_model
from .metrics import EvalReport, comparison_table, mape, rmse
from .neuralnet import ModelParams, TrainConfig
from .timeseries import DataError, TimeSeries, load_csv

__version__ = "0.1.0"

__all__ = [
    "DataError", "EmdConfig", "EvalReport", "ImfSet", "ModelParams", "SttfModel",
    "TimeSeries", "TrainConfig", "comparison_table", "decompose", "fit", "load_csv",
    "load_model", "mape", "predict_next", "rmse", "save_model", "__version__",
]
