"""Per-point anomaly scores, thresholding, metrics and segment extraction."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data_pipeline import TimeSeries, make_windows
from .errors import CompatibilityError, EvaluationError
from .lstm_autoencoder import ModelConfig, ModelParams, reconstruct

DEFAULT_CANDIDATES = 200


@dataclass
class ScoreSeries:
    """Scores for the points covered by at least one window.

    ``index`` maps each entry back to its position in the source series.
    """

    index: np.ndarray
    scores: np.ndarray
    coverage: np.ndarray

    def __len__(self):
        return self.scores.shape[0]


@dataclass
class EvalReport:
    threshold: float
    tp: int
    fp: int
    fn: int
    recall: float
    precision: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AnomalySegment:
    start: int
    length: int

    @property
    def end(self) -> int:
        return self.start + self.length - 1


def window_errors(params: ModelParams, config: ModelConfig, windows: np.ndarray) -> np.ndarray:
    """``||x_t - x'_t||`` for every window and step, shape ``(W, L)``."""
    recon = reconstruct(params, config, windows)
    return np.linalg.norm(windows - recon, axis=2)


def aggregate_scores(errors: np.ndarray, origins: np.ndarray, length: int) -> ScoreSeries:
    """Mean of the per-window errors that land on each point."""
    W, L = errors.shape
    pos = (origins[:, None] + np.arange(L)[None, :]).ravel()
    total = np.bincount(pos, weights=errors.ravel(), minlength=length)
    coverage = np.bincount(pos, minlength=length)
    index = np.flatnonzero(coverage)
    return ScoreSeries(index, total[index] / coverage[index], coverage[index])


def point_scores(params: ModelParams, config: ModelConfig, series: TimeSeries, window_len=None, step=1) -> ScoreSeries:
    """Reconstruction-error score per point of an already normalized series."""
    L = config.window_len if window_len is None else window_len
    if L != config.window_len:
        raise CompatibilityError(f"model was trained on windows of {config.window_len}, got {L}")
    if series.dim != config.input_dim:
        raise CompatibilityError(f"model expects {config.input_dim}-dim points, series has {series.dim}")
    ws = make_windows(series, L, step)
    return aggregate_scores(window_errors(params, config, ws.windows), ws.origins, len(series))


def _scores_array(scores):
    return np.asarray(scores.scores if isinstance(scores, ScoreSeries) else scores, dtype=np.float64)


def _report(threshold, tp, fp, fn) -> EvalReport:
    recall = tp / (tp + fn) if tp + fn else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(float(threshold), int(tp), int(fp), int(fn), recall, precision, f1)


def evaluate_at(scores, labels, threshold: float) -> EvalReport:
    """Pointwise confusion counts with ``score > threshold`` flagged."""
    s = _scores_array(scores)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise EvaluationError(f"{s.shape[0]} scores but {y.shape[0]} labels")
    flags = s > threshold
    tp = int(np.count_nonzero(flags & y))
    fp = int(np.count_nonzero(flags & ~y))
    fn = int(np.count_nonzero(~flags & y))
    return _report(threshold, tp, fp, fn)


def threshold_candidates(scores, n_candidates: int = DEFAULT_CANDIDATES) -> np.ndarray:
    """Score quantiles, plus one value just below the minimum and one just above the maximum."""
    s = _scores_array(scores)
    q = np.quantile(s, np.linspace(0.0, 1.0, n_candidates))
    lo = np.nextafter(s.min(), -np.inf)
    hi = s.max() + max(1e-12, 1e-9 * abs(s.max()))
    return np.unique(np.concatenate([[lo], q, [hi]]))


def sweep_threshold(scores, labels, n_candidates: int = DEFAULT_CANDIDATES):
    """Best-F1 threshold among the candidates; ties go to the higher threshold."""
    s = _scores_array(scores)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise EvaluationError(f"{s.shape[0]} scores but {y.shape[0]} labels")
    if not y.any():
        raise EvaluationError("threshold sweep needs at least one positive label")
    cand = threshold_candidates(s, n_candidates)
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    pos_above = np.concatenate([np.cumsum(y[order][::-1])[::-1], [0]])
    n_pos = int(y.sum())
    best = None
    for th in cand:
        k = np.searchsorted(s_sorted, th, side="right")
        flagged = s.shape[0] - k
        tp = int(pos_above[k])
        rep = _report(th, tp, flagged - tp, n_pos - tp)
        if best is None or rep.f1 >= best.f1:
            best = rep
    return best.threshold, best


def extract_segments(flags) -> list:
    f = np.asarray(flags).astype(np.int8).reshape(-1)
    if f.size == 0:
        return []
    edges = np.diff(np.concatenate([[0], f, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [AnomalySegment(int(a), int(b - a)) for a, b in zip(starts, ends)]


def segments_to_flags(segments, length: int) -> np.ndarray:
    flags = np.zeros(length, dtype=np.int64)
    for seg in segments:
        flags[seg.start:seg.start + seg.length] = 1
    return flags


def window_label_counts(labels, window_len: int, step: int = 1) -> dict:
    """How many windows exist and how many contain a labeled anomaly."""
    y = np.asarray(labels, dtype=np.int64)
    ws = make_windows(y.astype(np.float64), window_len, step)
    anomalous = int(np.count_nonzero(ws.windows[:, :, 0].max(axis=1) > 0))
    return {"windows": len(ws), "anomalous_windows": anomalous}
