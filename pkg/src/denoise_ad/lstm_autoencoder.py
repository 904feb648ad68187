"""LSTM encoder-decoder with a dropout layer after every LSTM layer.

All functions accept either a single window of shape ``(L, N)`` or a batch
of shape ``(B, L, N)``; internally everything runs batched. The decoder
rebuilds the window back to front: it starts from the encoder's final
state, feeds a zero vector at the first step, then the previous point
(the true value while training, its own estimate at inference).

Gate blocks inside each stacked weight matrix are ordered
input, forget, output, candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, UsageError
from .tensor_core import Rng, sigmoid

GATES = ("input", "forget", "output", "candidate")
DROPOUT_MODES = ("inverted", "plain")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 1
    window_len: int = 24
    encoder_units: tuple = (16,)
    dropout_p: float = 0.0
    dropout_mode: str = "inverted"
    seed: int = 0

    def __post_init__(self):
        units = tuple(int(u) for u in self.encoder_units)
        object.__setattr__(self, "encoder_units", units)
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.window_len < 2:
            raise ConfigError(f"window_len must be >= 2, got {self.window_len}")
        if not units or any(u < 1 for u in units):
            raise ConfigError(f"encoder_units must be non-empty positive counts, got {units}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.dropout_mode not in DROPOUT_MODES:
            raise ConfigError(f"dropout_mode must be one of {DROPOUT_MODES}, got {self.dropout_mode!r}")

    @property
    def decoder_units(self) -> tuple:
        return tuple(reversed(self.encoder_units))

    @property
    def latent_size(self) -> int:
        return self.encoder_units[-1]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "window_len": self.window_len,
            "encoder_units": list(self.encoder_units),
            "dropout_p": self.dropout_p,
            "dropout_mode": self.dropout_mode,
            "seed": self.seed,
        }


@dataclass
class LstmLayerParams:
    W: np.ndarray  # (4u, in_dim)
    U: np.ndarray  # (4u, u)
    b: np.ndarray  # (4u,)

    @property
    def units(self) -> int:
        return self.U.shape[1]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str):
        """``(W_g, U_g, b_g)`` views for one gate."""
        k = GATES.index(name)
        u = self.units
        sl = slice(k * u, (k + 1) * u)
        return self.W[sl], self.U[sl], self.b[sl]

    def arrays(self):
        return [self.W, self.U, self.b]


@dataclass
class ModelParams:
    encoder_layers: list
    decoder_layers: list
    out_W: np.ndarray  # (N, u_last)
    out_b: np.ndarray  # (N,)

    def named_arrays(self):
        """``(name, array)`` pairs in a fixed order; arrays are live references."""
        out = []
        for side, layers in (("encoder", self.encoder_layers), ("decoder", self.decoder_layers)):
            for k, layer in enumerate(layers):
                out.append((f"{side}.{k}.W", layer.W))
                out.append((f"{side}.{k}.U", layer.U))
                out.append((f"{side}.{k}.b", layer.b))
        out.append(("output.W", self.out_W))
        out.append(("output.b", self.out_b))
        return out

    def arrays(self):
        return [a for _, a in self.named_arrays()]

    def map(self, fn) -> "ModelParams":
        def layer(p):
            return LstmLayerParams(fn(p.W), fn(p.U), fn(p.b))

        return ModelParams(
            [layer(p) for p in self.encoder_layers],
            [layer(p) for p in self.decoder_layers],
            fn(self.out_W),
            fn(self.out_b),
        )

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    @classmethod
    def from_arrays(cls, template: "ModelParams", arrays) -> "ModelParams":
        it = iter(arrays)
        return template.map(lambda _: next(it))


def _layer_shapes(config: ModelConfig):
    enc, dec = [], []
    in_dim = config.input_dim
    for u in config.encoder_units:
        enc.append((in_dim, u))
        in_dim = u
    in_dim = config.input_dim
    for u in config.decoder_units:
        dec.append((in_dim, u))
        in_dim = u
    return enc, dec


def init_params(config: ModelConfig) -> ModelParams:
    """Uniform(+-1/sqrt(u)) weights, forget bias 1, other biases 0."""
    rng = Rng(config.seed).child(0)

    def uniform(shape, k):
        return (2.0 * rng.uniform(shape) - 1.0) * k

    def make_layer(in_dim, u):
        k = 1.0 / math.sqrt(u)
        W = uniform((4 * u, in_dim), k)
        U = uniform((4 * u, u), k)
        b = np.zeros(4 * u)
        b[u:2 * u] = 1.0
        return LstmLayerParams(W, U, b)

    enc_shapes, dec_shapes = _layer_shapes(config)
    enc = [make_layer(i, u) for i, u in enc_shapes]
    dec = [make_layer(i, u) for i, u in dec_shapes]
    u_last = config.decoder_units[-1]
    k = 1.0 / math.sqrt(u_last)
    out_W = uniform((config.input_dim, u_last), k)
    out_b = np.zeros(config.input_dim)
    return ModelParams(enc, dec, out_W, out_b)


def check_params(params: ModelParams, config: ModelConfig):
    enc_shapes, dec_shapes = _layer_shapes(config)
    for side, layers, shapes in (
        ("encoder", params.encoder_layers, enc_shapes),
        ("decoder", params.decoder_layers, dec_shapes),
    ):
        if len(layers) != len(shapes):
            raise ShapeError(f"{side} has {len(layers)} layers, config expects {len(shapes)}")
        for k, (layer, (in_dim, u)) in enumerate(zip(layers, shapes)):
            want = ((4 * u, in_dim), (4 * u, u), (4 * u,))
            got = (layer.W.shape, layer.U.shape, layer.b.shape)
            if got != want:
                raise ShapeError(f"{side} layer {k}: shapes {got}, expected {want}")
    u_last = config.decoder_units[-1]
    if params.out_W.shape != (config.input_dim, u_last) or params.out_b.shape != (config.input_dim,):
        raise ShapeError(
            f"output projection shapes {params.out_W.shape}/{params.out_b.shape}, "
            f"expected {(config.input_dim, u_last)}/{(config.input_dim,)}"
        )


# ---------------------------------------------------------------- cell


def _step(layer: LstmLayerParams, x, h_prev, c_prev):
    u = layer.U.shape[1]
    pre = x @ layer.W.T + h_prev @ layer.U.T + layer.b
    sig = sigmoid(pre[:, : 3 * u])
    i = sig[:, :u]
    f = sig[:, u:2 * u]
    o = sig[:, 2 * u:]
    g = np.tanh(pre[:, 3 * u:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, o, g, tc)


def _step_backward(layer: LstmLayerParams, cache, dh, dc_next, grad: LstmLayerParams):
    x, h_prev, c_prev, i, f, o, g, tc = cache
    dc = dc_next + dh * o * (1.0 - tc * tc)
    dpre = np.concatenate(
        [
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ],
        axis=1,
    )
    grad.W += dpre.T @ x
    grad.U += dpre.T @ h_prev
    grad.b += dpre.sum(axis=0)
    return dpre @ layer.W, dpre @ layer.U, dc * f


def lstm_cell_step(layer: LstmLayerParams, x_t, h_prev, c_prev):
    """One LSTM step. Vectors may be 1-D or batched ``(B, dim)``.

    Returns ``(h_t, c_t, cache)``; the cache holds everything the backward
    pass needs (batched shapes).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    single = x_t.ndim == 1
    x2, h2, c2 = (np.atleast_2d(a) for a in (x_t, h_prev, c_prev))
    if x2.shape[1] != layer.in_dim:
        raise ShapeError(f"input has {x2.shape[1]} features, layer expects {layer.in_dim}")
    if h2.shape[1] != layer.units or c2.shape != h2.shape:
        raise ShapeError(f"state shapes {h2.shape}/{c2.shape} do not match {layer.units} units")
    h, c, cache = _step(layer, x2, h2, c2)
    if single:
        return h[0], c[0], cache
    return h, c, cache


# ------------------------------------------------------------- dropout


def dropout_apply(x, p: float, mode: str = "inverted", training: bool = True, rng: Rng | None = None):
    """Zero each element when its uniform draw ``r`` satisfies ``r <= p``.

    Returns ``(y, mask)`` with ``mask`` 1.0 at kept positions. ``inverted``
    rescales survivors by ``1/(1-p)``; ``plain`` passes them unchanged.
    Outside training, and at ``p == 0``, ``y`` is ``x`` and no draws are made.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    if mode not in DROPOUT_MODES:
        raise ConfigError(f"unknown dropout mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if not training or p == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise UsageError("training-mode dropout needs an Rng")
    mask = (rng.uniform(x.shape) > p).astype(np.float64)
    if mode == "inverted":
        return x * (mask / (1.0 - p)), mask
    return x * mask, mask


def _dropout_multiplier(x, config: ModelConfig, training, rng):
    """Dropped ``x`` and the factor the backward pass multiplies by (or None)."""
    p = config.dropout_p
    if not training or p == 0.0:
        return x, None
    y, mask = dropout_apply(x, p, config.dropout_mode, True, rng)
    if config.dropout_mode == "inverted":
        mask = mask / (1.0 - p)
    return y, mask


# ------------------------------------------------------------- forward


@dataclass
class ForwardTrace:
    """Per-layer, per-step state of one training-mode forward pass."""

    encoder_caches: list = field(default_factory=list)  # [layer][t]
    encoder_masks: list = field(default_factory=list)  # [layer] -> (B, L, u) or None
    encoder_outputs: list = field(default_factory=list)  # [layer] -> dropped (B, L, u)
    latent: tuple | None = None  # (h, c) handed to the decoder
    decoder_caches: list = field(default_factory=list)  # [step][layer]
    decoder_masks: list = field(default_factory=list)  # [step][layer]
    decoder_top: list = field(default_factory=list)  # [step] -> dropped last-layer h
    reconstruction: np.ndarray | None = None
    teacher_forcing: bool = True


def _as_batch(window, config: ModelConfig):
    w = np.asarray(window, dtype=np.float64)
    single = w.ndim == 2
    if single:
        w = w[None]
    if w.ndim != 3:
        raise ShapeError(f"window must be (L, N) or (B, L, N), got shape {w.shape}")
    if w.shape[1] != config.window_len or w.shape[2] != config.input_dim:
        raise ShapeError(
            f"window shape {w.shape[1:]} does not match config "
            f"(L={config.window_len}, N={config.input_dim})"
        )
    return w, single


def _encode(params, config, X, training, rng, trace):
    B, L, _ = X.shape
    inp = X
    c = None
    for layer in params.encoder_layers:
        u = layer.units
        h = np.zeros((B, u))
        c = np.zeros((B, u))
        hs = np.empty((B, L, u))
        caches = []
        for t in range(L):
            h, c, cache = _step(layer, inp[:, t], h, c)
            hs[:, t] = h
            caches.append(cache)
        out, mult = _dropout_multiplier(hs, config, training, rng)
        if trace is not None:
            trace.encoder_caches.append(caches)
            trace.encoder_masks.append(mult)
            trace.encoder_outputs.append(out)
        inp = out
    latent = (inp[:, -1].copy(), c)
    if trace is not None:
        trace.latent = latent
    return latent


def _decode(params, config, latent, X, training, teacher_forcing, rng, trace):
    h_lat, c_lat = latent
    B = h_lat.shape[0]
    L, N = config.window_len, config.input_dim
    layers = params.decoder_layers
    hs = [h_lat] + [np.zeros((B, l.units)) for l in layers[1:]]
    cs = [c_lat] + [np.zeros((B, l.units)) for l in layers[1:]]
    recon = np.empty((B, L, N))
    prev = np.zeros((B, N))
    for s in range(L):
        t = L - 1 - s
        inp = prev
        caches, masks = [], []
        for k, layer in enumerate(layers):
            hs[k], cs[k], cache = _step(layer, inp, hs[k], cs[k])
            inp, mult = _dropout_multiplier(hs[k], config, training, rng)
            caches.append(cache)
            masks.append(mult)
        xhat = inp @ params.out_W.T + params.out_b
        recon[:, t] = xhat
        if trace is not None:
            trace.decoder_caches.append(caches)
            trace.decoder_masks.append(masks)
            trace.decoder_top.append(inp)
        prev = X[:, t] if teacher_forcing else xhat
    if trace is not None:
        trace.reconstruction = recon
        trace.teacher_forcing = teacher_forcing
    return recon


def _check_rng(training, rng):
    if training and rng is None:
        raise UsageError("training-mode passes need an Rng for dropout draws")


def encode(params: ModelParams, config: ModelConfig, window, training=False, rng=None):
    """Run the encoder stack; returns ``((h, c), trace)`` of the top layer at t=L."""
    _check_rng(training, rng)
    X, single = _as_batch(window, config)
    trace = ForwardTrace()
    h, c = _encode(params, config, X, training, rng, trace)
    if single:
        return (h[0], c[0]), trace
    return (h, c), trace


def decode(params: ModelParams, config: ModelConfig, latent, window, training=False,
           teacher_forcing=False, rng=None):
    """Rebuild a window from ``latent = (h, c)``.

    ``window`` supplies the teacher-forced inputs; with
    ``teacher_forcing=False`` only its shape is used.
    """
    _check_rng(training, rng)
    X, single = _as_batch(window, config)
    h, c = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in latent)
    if h.shape != (X.shape[0], config.latent_size) or c.shape != h.shape:
        raise ShapeError(f"latent shapes {h.shape}/{c.shape} do not match latent size {config.latent_size}")
    trace = ForwardTrace()
    recon = _decode(params, config, (h, c), X, training, teacher_forcing, rng, trace)
    return (recon[0] if single else recon), trace


def forward(params: ModelParams, config: ModelConfig, window, training=False, rng=None):
    """Encode then decode. Teacher forcing follows ``training``.

    The trace is returned only for training passes (``None`` otherwise).
    """
    _check_rng(training, rng)
    X, single = _as_batch(window, config)
    trace = ForwardTrace() if training else None
    latent = _encode(params, config, X, training, rng, trace)
    recon = _decode(params, config, latent, X, training, training, rng, trace)
    return (recon[0] if single else recon), trace


def reconstruct(params: ModelParams, config: ModelConfig, windows, batch_size: int = 2048):
    """Inference-mode reconstruction of a ``(B, L, N)`` stack, in chunks."""
    X, single = _as_batch(windows, config)
    out = np.empty_like(X)
    for start in range(0, X.shape[0], batch_size):
        chunk = X[start:start + batch_size]
        latent = _encode(params, config, chunk, False, None, None)
        out[start:start + batch_size] = _decode(params, config, latent, chunk, False, False, None, None)
    return out[0] if single else out


# ------------------------------------------------------------ backward


def backward(params: ModelParams, config: ModelConfig, trace: ForwardTrace, window) -> ModelParams:
    """Gradients of ``sum_i ||x_i - x'_i||^2`` (averaged over the batch).

    Teacher-forced decoder inputs are constants. When the trace came from
    self-feedback decoding the gradient also flows through the fed-back
    estimates.
    """
    if trace is None or trace.reconstruction is None or not trace.encoder_caches:
        raise UsageError("backward needs the trace of a training-mode forward pass")
    X, _ = _as_batch(window, config)
    R = trace.reconstruction
    if R.shape != X.shape:
        raise ShapeError(f"trace reconstruction {R.shape} does not match window {X.shape}")
    B, L, N = X.shape
    grads = params.zeros_like()

    d_recon = 2.0 * (R - X) / B
    dec = params.decoder_layers
    dh_next = [np.zeros((B, l.units)) for l in dec]
    dc_next = [np.zeros((B, l.units)) for l in dec]
    d_feedback = None
    for s in reversed(range(L)):
        t = L - 1 - s
        dxhat = d_recon[:, t]
        if d_feedback is not None:
            dxhat = dxhat + d_feedback
        grads.out_W += dxhat.T @ trace.decoder_top[s]
        grads.out_b += dxhat.sum(axis=0)
        dy = dxhat @ params.out_W
        for k in reversed(range(len(dec))):
            mult = trace.decoder_masks[s][k]
            dh = (dy if mult is None else dy * mult) + dh_next[k]
            dy, dh_next[k], dc_next[k] = _step_backward(
                dec[k], trace.decoder_caches[s][k], dh, dc_next[k], grads.decoder_layers[k]
            )
        d_feedback = None if trace.teacher_forcing or s == 0 else dy

    enc = params.encoder_layers
    top_units = enc[-1].units
    d_out = np.zeros((B, L, top_units))
    d_out[:, -1] = dh_next[0]
    for k in reversed(range(len(enc))):
        mult = trace.encoder_masks[k]
        dhs = d_out if mult is None else d_out * mult
        dh_n = np.zeros((B, enc[k].units))
        dc_n = dc_next[0] if k == len(enc) - 1 else np.zeros((B, enc[k].units))
        d_in = np.empty((B, L, enc[k].in_dim))
        caches = trace.encoder_caches[k]
        for t in reversed(range(L)):
            dx, dh_n, dc_n = _step_backward(enc[k], caches[t], dhs[:, t] + dh_n, dc_n, grads.encoder_layers[k])
            d_in[:, t] = dx
        d_out = d_in
    return grads
