"""LSTM power surrogate, its trainer and GWO hyper-parameter tuning."""

from .gwo import GWOResult, a_schedule, gwo_optimize
from .lstm import HyperParams, LSTMModel, Normalization, forward, load_model, loss_and_grads, save_model, train
from .tuning import DataSet, SequenceSample, hyper_from_vector, pad_sequence, pearson_r, tune_and_train

__all__ = [
    "DataSet", "GWOResult", "HyperParams", "LSTMModel", "Normalization", "SequenceSample",
    "a_schedule", "forward", "gwo_optimize", "hyper_from_vector", "load_model", "loss_and_grads",
    "pad_sequence", "pearson_r", "save_model", "train", "tune_and_train",
]
