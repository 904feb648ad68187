"""LSTM autoencoders with dropout ("denoising") layers for time-series anomaly detection."""

from .data_pipeline import (
    NormParams,
    SyntheticSpec,
    TimeSeries,
    WindowSet,
    denormalize,
    generate_synthetic,
    load_csv,
    make_windows,
    normalize,
)
from .detection import EvalReport, ScoreSeries, evaluate_at, extract_segments, point_scores, sweep_threshold
from .lstm_autoencoder import ModelConfig, ModelParams, backward, forward, init_params
from .training import TrainConfig, TrainHistory, fit

__version__ = "0.1.0"
