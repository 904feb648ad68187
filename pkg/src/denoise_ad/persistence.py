"""JSON model files.

Layout::

    {"schema_version": 1,
     "config": {...ModelConfig...},
     "train_config": {...} | null,
     "norm_params": {"min": [...], "max": [...]},
     "training": {"epochs_run": int, "best_epoch": int} | null,
     "weights": [{"name": str, "shape": [int, ...], "data": [float, ...]}, ...]}

Floats are written with ``repr`` precision, so a save/load roundtrip is
bit exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data_pipeline import NormParams
from .errors import DenoiseADError, DeserializationError
from .lstm_autoencoder import ModelConfig, ModelParams, check_params, init_params

SCHEMA_VERSION = 1
REQUIRED_FIELDS = ("schema_version", "config", "norm_params", "weights")
CONFIG_FIELDS = ("input_dim", "window_len", "encoder_units", "dropout_p", "dropout_mode", "seed")


def model_to_dict(params, config, norm, train_config=None, history=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "train_config": None if train_config is None else train_config.to_dict(),
        "norm_params": norm.to_dict(),
        "training": None if history is None else {
            "epochs_run": history.epochs_run,
            "best_epoch": history.best_epoch,
        },
        "weights": [
            {"name": name, "shape": list(a.shape), "data": a.ravel().tolist()}
            for name, a in params.named_arrays()
        ],
    }


def save_model(path, params: ModelParams, config: ModelConfig, norm: NormParams,
               train_config=None, history=None) -> None:
    doc = model_to_dict(params, config, norm, train_config, history)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _need(doc, key, where="model file"):
    if not isinstance(doc, dict) or key not in doc:
        raise DeserializationError(f"{where}: missing field {key!r}")
    return doc[key]


def model_from_dict(doc) -> tuple:
    for key in REQUIRED_FIELDS:
        _need(doc, key)
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise DeserializationError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    cfg_doc = doc["config"]
    for key in CONFIG_FIELDS:
        _need(cfg_doc, key, "config")
    try:
        config = ModelConfig(
            input_dim=int(cfg_doc["input_dim"]),
            window_len=int(cfg_doc["window_len"]),
            encoder_units=tuple(int(u) for u in cfg_doc["encoder_units"]),
            dropout_p=float(cfg_doc["dropout_p"]),
            dropout_mode=str(cfg_doc["dropout_mode"]),
            seed=int(cfg_doc["seed"]),
        )
        norm_doc = doc["norm_params"]
        norm = NormParams(tuple(_need(norm_doc, "min", "norm_params")),
                          tuple(_need(norm_doc, "max", "norm_params")))
    except DeserializationError:
        raise
    except (DenoiseADError, TypeError, ValueError) as exc:
        raise DeserializationError(f"invalid model header: {exc}") from None

    template = init_params(config)
    expected = template.named_arrays()
    weights = doc["weights"]
    if not isinstance(weights, list):
        raise DeserializationError("field 'weights' must be a list")
    by_name = {}
    for entry in weights:
        name = _need(entry, "name", "weights entry")
        by_name[name] = entry
    arrays = []
    for name, ref in expected:
        if name not in by_name:
            raise DeserializationError(f"weights: missing field {name!r}")
        entry = by_name[name]
        shape = tuple(_need(entry, "shape", f"weights[{name}]"))
        data = _need(entry, "data", f"weights[{name}]")
        if shape != ref.shape:
            raise DeserializationError(f"weights[{name}]: shape {shape}, config implies {ref.shape}")
        try:
            arr = np.asarray(data, dtype=np.float64)
        except (TypeError, ValueError):
            raise DeserializationError(f"weights[{name}]: data is not numeric") from None
        if arr.size != int(np.prod(shape)):
            raise DeserializationError(f"weights[{name}]: {arr.size} values for shape {shape}")
        arrays.append(arr.reshape(shape))
    params = ModelParams.from_arrays(template, arrays)
    check_params(params, config)
    return params, config, norm


def load_model(path):
    """Returns ``(params, config, norm_params)``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        absent = [k for k in REQUIRED_FIELDS if f'"{k}"' not in text]
        hint = f"; missing field(s) {', '.join(repr(k) for k in absent)}" if absent else ""
        raise DeserializationError(f"{path}: not valid JSON ({exc.msg}){hint}") from None
    return model_from_dict(doc)


def load_model_document(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
