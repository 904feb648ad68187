"""Minibatch Adam training with early stopping on a chronological hold-out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DivergenceError, ShapeError
from .lstm_autoencoder import ModelConfig, ModelParams, backward, forward, init_params, reconstruct
from .tensor_core import Rng

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8
MIN_WINDOWS = 10


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 3
    min_delta: float = 1e-5
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be non-negative")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "min_delta": self.min_delta,
            "validation_fraction": self.validation_fraction,
            "seed": self.seed,
        }


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0

    @property
    def epochs(self) -> int:
        """Epochs to convergence, the figure reported in sweep tables."""
        return self.best_epoch


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def reconstruction_loss(windows, reconstructions) -> float:
    """Sum of squared errors over time and dims, averaged over windows."""
    x = np.asarray(windows, dtype=np.float64)
    r = np.asarray(reconstructions, dtype=np.float64)
    if x.shape != r.shape:
        raise ShapeError(f"windows {x.shape} and reconstructions {r.shape} differ")
    if x.ndim == 2:
        x, r = x[None], r[None]
    return float(np.sum((x - r) ** 2) / x.shape[0])


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float):
    """Bias-corrected Adam; returns fresh ``(params, state)``, inputs untouched."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(state.m):
        raise ShapeError("params, grads and optimizer state have different layouts")
    t = state.t + 1
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"parameter {p.shape} / gradient {g.shape} mismatch")
        m = BETA1 * m + (1.0 - BETA1) * g
        v = BETA2 * v + (1.0 - BETA2) * (g * g)
        new_p.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    return ModelParams.from_arrays(params, new_p), AdamState(new_m, new_v, t)


def split_windows(windows: np.ndarray, validation_fraction: float):
    """Chronological split: the last ``validation_fraction`` of windows validate."""
    n = windows.shape[0]
    n_val = max(1, int(round(n * validation_fraction)))
    n_val = min(n_val, n - 1)
    return windows[: n - n_val], windows[n - n_val:]


def fit(model: ModelParams | None, config: ModelConfig, windows, tcfg: TrainConfig, progress=None):
    """Train on ``windows`` (array ``(W, L, N)`` or a WindowSet).

    Returns the parameters of the best validation epoch and the history.
    ``model=None`` starts from :func:`init_params`.
    """
    X = np.asarray(getattr(windows, "windows", windows), dtype=np.float64)
    if X.ndim != 3 or X.shape[1:] != (config.window_len, config.input_dim):
        raise ShapeError(f"windows of shape {X.shape} do not match config "
                         f"(L={config.window_len}, N={config.input_dim})")
    if X.shape[0] < MIN_WINDOWS:
        raise DataError(f"need at least {MIN_WINDOWS} windows to train, got {X.shape[0]}")

    params = init_params(config) if model is None else model.copy()
    train, val = split_windows(X, tcfg.validation_fraction)
    shuffle_rng = Rng(tcfg.seed).child(2)
    dropout_rng = Rng(config.seed).child(1)
    state = AdamState.zeros(params)
    history = TrainHistory()
    best = (np.inf, params, 0)
    stale = 0

    for epoch in range(1, tcfg.max_epochs + 1):
        order = shuffle_rng.permutation(train.shape[0])
        total = 0.0
        for start in range(0, len(order), tcfg.batch_size):
            batch = train[order[start:start + tcfg.batch_size]]
            recon, trace = forward(params, config, batch, True, dropout_rng)
            loss = reconstruction_loss(batch, recon)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            total += loss * batch.shape[0]
            grads = backward(params, config, trace, batch)
            params, state = adam_step(params, grads, state, tcfg.learning_rate)
        train_loss = total / train.shape[0]
        val_loss = reconstruction_loss(val, reconstruct(params, config, val))
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.epochs_run = epoch
        log.debug("epoch %d train %.6f val %.6f", epoch, train_loss, val_loss)
        if progress is not None:
            progress(epoch, train_loss, val_loss)

        improved = val_loss < best[0] - tcfg.min_delta
        if val_loss < best[0]:
            best = (val_loss, params, epoch)
        if improved:
            stale = 0
        else:
            stale += 1
            if stale >= tcfg.patience:
                break

    history.best_epoch = best[2]
    return best[1], history
