import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ZeroRng
from helpers import gradient_errors
from denoise_ad.errors import ConfigError, ShapeError, UsageError
from denoise_ad.lstm_autoencoder import (
    LstmLayerParams,
    ModelConfig,
    backward,
    check_params,
    decode,
    dropout_apply,
    encode,
    forward,
    init_params,
    lstm_cell_step,
    reconstruct,
)
from denoise_ad.tensor_core import Rng
from denoise_ad.training import reconstruction_loss


def scalar_cell(w, u, b, x, h, c):
    """One-unit LSTM step in 50-digit arithmetic; gate order i, f, o, g."""
    mpmath.mp.dps = 50
    pre = [mpmath.mpf(w[k]) * x + mpmath.mpf(u[k]) * h + mpmath.mpf(b[k]) for k in range(4)]
    sig = lambda z: 1 / (1 + mpmath.exp(-z))
    i, f, o, g = sig(pre[0]), sig(pre[1]), sig(pre[2]), mpmath.tanh(pre[3])
    c_new = f * c + i * g
    return o * mpmath.tanh(c_new), c_new


def one_unit_layer(w, u, b):
    return LstmLayerParams(np.array(w, float).reshape(4, 1), np.array(u, float).reshape(4, 1), np.array(b, float))


def zero_params(config):
    return init_params(config).map(np.zeros_like)


W1, U1, B1 = [0.5, -0.3, 0.8, 0.2], [0.1, 0.2, -0.1, 0.4], [0.0, 1.0, 0.0, -0.1]


# ------------------------------------------------------------ config/init


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(dropout_p=1.0)
    with pytest.raises(ConfigError):
        ModelConfig(encoder_units=())
    with pytest.raises(ConfigError):
        ModelConfig(window_len=1)
    with pytest.raises(ConfigError):
        ModelConfig(dropout_mode="spatial")


def test_decoder_mirrors_encoder():
    cfg = ModelConfig(encoder_units=(16, 8))
    assert cfg.decoder_units == (8, 16)
    assert cfg.latent_size == 8


def test_init_deterministic():
    cfg = ModelConfig(encoder_units=(16, 8), seed=5)
    a, b = init_params(cfg), init_params(cfg)
    for x, y in zip(a.arrays(), b.arrays()):
        assert x.tobytes() == y.tobytes()


def test_init_shapes_single_layer():
    p = init_params(ModelConfig(input_dim=1, encoder_units=(16,)))
    enc = p.encoder_layers[0]
    for gate in ("input", "forget", "output", "candidate"):
        W, U, b = enc.gate(gate)
        assert W.shape == (16, 1) and U.shape == (16, 16) and b.shape == (16,)
    assert p.out_W.shape == (1, 16)


def test_init_bias_rule_and_range():
    cfg = ModelConfig(encoder_units=(16, 8))
    p = init_params(cfg)
    for layer in p.encoder_layers + p.decoder_layers:
        _, _, bf = layer.gate("forget")
        assert np.all(bf == 1.0)
        for g in ("input", "output", "candidate"):
            assert np.all(layer.gate(g)[2] == 0.0)
        k = 1 / np.sqrt(layer.units)
        assert np.abs(layer.W).max() <= k and np.abs(layer.U).max() <= k
    check_params(p, cfg)


# ------------------------------------------------------------------ cell


def test_cell_all_zero_gives_zero_hidden():
    layer = LstmLayerParams(np.zeros((12, 2)), np.zeros((12, 3)), np.zeros(12))
    h, c, _ = lstm_cell_step(layer, np.zeros(2), np.zeros(3), np.zeros(3))
    assert np.all(h == 0) and np.all(c == 0)


def test_cell_matches_scalar_hand_calculation():
    layer = one_unit_layer(W1, U1, B1)
    x, h0, c0 = 1.0, 0.5, 0.2
    h, c, _ = lstm_cell_step(layer, [x], [h0], [c0])
    h_ref, c_ref = scalar_cell(W1, U1, B1, x, h0, c0)
    assert h[0] == pytest.approx(float(h_ref), abs=1e-12)
    assert c[0] == pytest.approx(float(c_ref), abs=1e-12)


def test_cell_huge_cell_state_stays_bounded():
    layer = one_unit_layer([0, 0, 0, 0], [0, 0, 0, 0], [0, 50, 0, 0])
    h, c, _ = lstm_cell_step(layer, [0.3], [0.1], [1e3])
    assert np.isfinite(c[0]) and -1 < h[0] < 1


def test_cell_shape_error():
    layer = one_unit_layer(W1, U1, B1)
    with pytest.raises(ShapeError):
        lstm_cell_step(layer, [1.0, 2.0], [0.0], [0.0])


# --------------------------------------------------------------- dropout


def test_dropout_p_zero_is_identity():
    x = Rng(1).uniform((50, 7))
    y, mask = dropout_apply(x, 0.0, "inverted", True, Rng(2))
    assert y.tobytes() == x.tobytes() and np.all(mask == 1)


@pytest.mark.parametrize("p", [0.1, 0.4, 0.9])
@pytest.mark.parametrize("mode", ["inverted", "plain"])
def test_dropout_inference_is_identity(p, mode):
    x = Rng(1).uniform((20, 3))
    y, mask = dropout_apply(x, p, mode, False, None)
    assert y.tobytes() == x.tobytes() and np.all(mask == 1)


def test_dropout_zero_fraction_binomial_bound():
    p, n = 0.4, 100_000
    y, mask = dropout_apply(np.ones((n, 1)), p, "plain", True, Rng(42))
    frac = np.mean(y == 0)
    assert abs(frac - p) <= 3 * np.sqrt(p * (1 - p) / n)
    assert np.array_equal(mask == 0, y == 0)


def test_dropout_modes_scale():
    x = np.full((1000, 1), 2.0)
    y_inv, m = dropout_apply(x, 0.5, "inverted", True, Rng(3))
    y_plain, m2 = dropout_apply(x, 0.5, "plain", True, Rng(3))
    assert np.array_equal(m, m2)
    assert set(np.unique(y_inv)) <= {0.0, 4.0}
    assert set(np.unique(y_plain)) <= {0.0, 2.0}


def test_dropout_rejects_bad_p():
    with pytest.raises(ConfigError):
        dropout_apply(np.ones(3), 1.0, "plain", True, Rng(0))


# ------------------------------------------------------- encode / decode


def test_encode_zero_window_zero_params():
    cfg = ModelConfig(input_dim=2, window_len=5, encoder_units=(3, 2))
    (h, c), _ = encode(zero_params(cfg), cfg, np.zeros((5, 2)))
    assert np.all(h == 0) and np.all(c == 0)


def test_encode_inference_repeatable():
    cfg = ModelConfig(window_len=6, encoder_units=(4,), dropout_p=0.5, seed=1)
    p = init_params(cfg)
    w = Rng(2).uniform((6, 1))
    (h1, c1), _ = encode(p, cfg, w)
    (h2, c2), _ = encode(p, cfg, w)
    assert h1.tobytes() == h2.tobytes() and c1.tobytes() == c2.tobytes()


def one_unit_model(mode="inverted"):
    cfg = ModelConfig(input_dim=1, window_len=2, encoder_units=(1,), dropout_mode=mode)
    p = init_params(cfg)
    p.encoder_layers[0] = one_unit_layer(W1, U1, B1)
    p.decoder_layers[0] = one_unit_layer([0.3, 0.6, -0.4, 0.9], [-0.2, 0.1, 0.5, 0.3], [0.1, 1.0, 0.0, 0.2])
    p.out_W[...] = 1.7
    p.out_b[...] = -0.05
    return cfg, p


def test_encode_matches_chained_cells():
    cfg, p = one_unit_model()
    x1, x2 = 0.4, -0.7
    (h, c), _ = encode(p, cfg, np.array([[x1], [x2]]))
    h_ref, c_ref = scalar_cell(W1, U1, B1, x1, 0, 0)
    h_ref, c_ref = scalar_cell(W1, U1, B1, x2, h_ref, c_ref)
    assert h[0] == pytest.approx(float(h_ref), abs=1e-12)
    assert c[0] == pytest.approx(float(c_ref), abs=1e-12)


@pytest.mark.parametrize("teacher", [True, False])
def test_decode_matches_chained_cells(teacher):
    cfg, p = one_unit_model()
    dw, du, db = [0.3, 0.6, -0.4, 0.9], [-0.2, 0.1, 0.5, 0.3], [0.1, 1.0, 0.0, 0.2]
    window = np.array([[0.4], [-0.7]])
    h0, c0 = 0.25, -0.6
    recon, _ = decode(p, cfg, (np.array([h0]), np.array([c0])), window, False, teacher)
    # reverse order: zero input estimates x_2, then x_2 (or its estimate) estimates x_1
    h, c = scalar_cell(dw, du, db, 0, h0, c0)
    est2 = 1.7 * h - mpmath.mpf("0.05")
    feed = window[1, 0] if teacher else est2
    h, c = scalar_cell(dw, du, db, feed, h, c)
    est1 = 1.7 * h - mpmath.mpf("0.05")
    assert recon[1, 0] == pytest.approx(float(est2), abs=1e-12)
    assert recon[0, 0] == pytest.approx(float(est1), abs=1e-12)


def test_decode_zero_latent_zero_params():
    cfg = ModelConfig(input_dim=2, window_len=4, encoder_units=(3, 2))
    recon, _ = decode(zero_params(cfg), cfg, (np.zeros(2), np.zeros(2)), np.ones((4, 2)))
    assert np.all(recon == 0)


def test_decode_inference_deterministic():
    cfg = ModelConfig(window_len=5, encoder_units=(3,), seed=4)
    p = init_params(cfg)
    lat = (Rng(1).uniform(3), Rng(2).uniform(3))
    a, _ = decode(p, cfg, lat, np.zeros((5, 1)))
    b, _ = decode(p, cfg, lat, np.zeros((5, 1)))
    assert a.tobytes() == b.tobytes()


def test_decode_latent_shape_error():
    cfg = ModelConfig(window_len=5, encoder_units=(3,))
    with pytest.raises(ShapeError):
        decode(init_params(cfg), cfg, (np.zeros(4), np.zeros(4)), np.zeros((5, 1)))


# --------------------------------------------------------------- forward


@pytest.mark.parametrize("units,N", [((16,), 1), ((16, 8), 1), ((3, 2, 4), 2)])
def test_forward_shape(units, N):
    cfg = ModelConfig(input_dim=N, window_len=7, encoder_units=units, dropout_p=0.3)
    p = init_params(cfg)
    w = Rng(0).uniform((7, N))
    r, trace = forward(p, cfg, w, True, Rng(1))
    assert r.shape == (7, N)
    assert len(trace.decoder_caches) == 7
    assert all(len(c) == 7 for c in trace.encoder_caches)
    r2, trace2 = forward(p, cfg, w[None].repeat(3, 0))
    assert r2.shape == (3, 7, N) and trace2 is None


def test_forward_window_shape_error():
    cfg = ModelConfig(window_len=7)
    with pytest.raises(ShapeError):
        forward(init_params(cfg), cfg, np.zeros((6, 1)))


def test_training_forward_needs_rng():
    cfg = ModelConfig(window_len=4, encoder_units=(2,))
    with pytest.raises(UsageError):
        forward(init_params(cfg), cfg, np.zeros((4, 1)), True, None)


def test_p_zero_matches_dropout_free_path():
    """With p = 0 a training pass equals a teacher-forced pass with no dropout at all."""
    cfg = ModelConfig(input_dim=2, window_len=6, encoder_units=(4, 3), dropout_p=0.0, seed=2)
    p = init_params(cfg)
    w = Rng(5).uniform((4, 6, 2))
    r_train, _ = forward(p, cfg, w, True, Rng(1))
    latent, _ = encode(p, cfg, w, False)
    r_plain, _ = decode(p, cfg, latent, w, False, True)
    assert r_train.tobytes() == r_plain.tobytes()


def test_inference_does_not_consume_rng():
    cfg = ModelConfig(window_len=5, encoder_units=(3,), dropout_p=0.5)
    rng = Rng(8)
    forward(init_params(cfg), cfg, np.zeros((5, 1)), False, rng)
    assert rng.uniform(4).tobytes() == Rng(8).uniform(4).tobytes()


def test_reconstruct_matches_forward_in_chunks():
    cfg = ModelConfig(window_len=5, encoder_units=(3,), dropout_p=0.4)
    p = init_params(cfg)
    w = Rng(3).uniform((10, 5, 1))
    full, _ = forward(p, cfg, w)
    np.testing.assert_allclose(reconstruct(p, cfg, w, batch_size=3), full, rtol=0, atol=1e-14)


def test_overfit_single_window():
    from denoise_ad.training import AdamState, adam_step

    cfg = ModelConfig(window_len=6, encoder_units=(4,), seed=1)
    p = init_params(cfg)
    w = np.sin(np.linspace(0, 3, 6))[:, None]
    state = AdamState.zeros(p)
    losses = []
    for _ in range(50):
        r, trace = forward(p, cfg, w, True, Rng(0))
        losses.append(reconstruction_loss(w, r))
        p, state = adam_step(p, backward(p, cfg, trace, w), state, 0.01)
    assert losses[-1] < 0.5 * losses[0]


# -------------------------------------------------------------- backward


@pytest.mark.parametrize("p", [0.0, 0.5])
def test_backward_matches_finite_differences(p):
    cfg = ModelConfig(input_dim=1, window_len=5, encoder_units=(3,), dropout_p=p, seed=3)
    window = Rng(17).uniform((5, 1)) * 2 - 1
    errors = gradient_errors(cfg, window, mask_seed=4)
    assert max(errors.values()) <= 1e-4, errors


@pytest.mark.parametrize("mode", ["inverted", "plain"])
def test_backward_matches_finite_differences_two_layers_batched(mode):
    cfg = ModelConfig(input_dim=2, window_len=4, encoder_units=(3, 2), dropout_p=0.3, dropout_mode=mode, seed=6)
    window = Rng(18).uniform((3, 4, 2)) * 2 - 1
    errors = gradient_errors(cfg, window, mask_seed=1)
    assert max(errors.values()) <= 1e-4, errors


def test_backward_through_self_feedback():
    cfg = ModelConfig(input_dim=1, window_len=4, encoder_units=(2,), seed=2)
    params = init_params(cfg)
    X = Rng(3).uniform((4, 1))

    latent, etrace = encode(params, cfg, X, True, Rng(0))
    recon, dtrace = decode(params, cfg, latent, X, True, False, Rng(0))
    etrace.decoder_caches, etrace.decoder_masks = dtrace.decoder_caches, dtrace.decoder_masks
    etrace.decoder_top, etrace.reconstruction = dtrace.decoder_top, dtrace.reconstruction
    etrace.teacher_forcing = False
    grads = backward(params, cfg, etrace, X)

    def loss():
        lat, _ = encode(params, cfg, X, False)
        r, _ = decode(params, cfg, lat, X, False, False)
        return np.sum((r - X) ** 2)

    from denoise_ad.tensor_core import numeric_gradient

    a = params.decoder_layers[0].W
    def f(v):
        saved = a.copy()
        a[...] = v
        out = loss()
        a[...] = saved
        return out
    num = numeric_gradient(f, a.copy())
    g = grads.decoder_layers[0].W
    assert np.linalg.norm(num - g) / np.linalg.norm(num) < 1e-4


def test_backward_zero_residual_gives_zero_gradient():
    cfg = ModelConfig(window_len=5, encoder_units=(3,), seed=1)
    p = init_params(cfg)
    w = Rng(1).uniform((5, 1))
    _, trace = forward(p, cfg, w, True, Rng(0))
    grads = backward(p, cfg, trace, trace.reconstruction[0])
    assert np.all(grads.out_W == 0) and np.all(grads.out_b == 0)


def test_backward_requires_trace():
    cfg = ModelConfig(window_len=5, encoder_units=(3,))
    with pytest.raises(UsageError):
        backward(init_params(cfg), cfg, None, np.zeros((5, 1)))


def test_fully_dropped_units_receive_no_gradient():
    cfg = ModelConfig(input_dim=1, window_len=4, encoder_units=(3, 2), dropout_p=0.5, seed=0)
    p = init_params(cfg)
    w = Rng(1).uniform((4, 1))
    r, trace = forward(p, cfg, w, True, ZeroRng())
    # every LSTM output was zeroed, so only the output bias can matter
    np.testing.assert_allclose(r[:, 0], p.out_b[0])
    grads = backward(p, cfg, trace, w)
    for name, g in grads.named_arrays():
        if name != "output.b":
            assert np.all(g == 0), name
    assert np.all(grads.out_b != 0)


@settings(max_examples=15, deadline=None)
@given(
    units=st.lists(st.integers(1, 4), min_size=1, max_size=2),
    L=st.integers(2, 6),
    N=st.integers(1, 2),
    p=st.sampled_from([0.0, 0.25, 0.5]),
    seed=st.integers(0, 1000),
)
def test_gradient_fidelity_property(units, L, N, p, seed):
    cfg = ModelConfig(input_dim=N, window_len=L, encoder_units=tuple(units), dropout_p=p, seed=seed)
    window = Rng(seed, 1).uniform((L, N)) * 2 - 1
    errors = gradient_errors(cfg, window, mask_seed=seed)
    assert max(errors.values()) <= 1e-4, errors


@settings(max_examples=10, deadline=None)
@given(units=st.lists(st.integers(1, 5), min_size=1, max_size=3), N=st.integers(1, 3))
def test_grad_shapes_match_params(units, N):
    cfg = ModelConfig(input_dim=N, window_len=3, encoder_units=tuple(units), dropout_p=0.2)
    p = init_params(cfg)
    w = np.zeros((3, N))
    _, trace = forward(p, cfg, w, True, Rng(0))
    g = backward(p, cfg, trace, w)
    assert [a.shape for a in g.arrays()] == [a.shape for a in p.arrays()]


def test_p_zero_gradients_mode_invariant():
    w = Rng(4).uniform((2, 5, 1))
    out = []
    for mode in ("inverted", "plain"):
        cfg = ModelConfig(window_len=5, encoder_units=(3,), dropout_p=0.0, dropout_mode=mode, seed=9)
        p = init_params(cfg)
        _, trace = forward(p, cfg, w, True, Rng(0))
        out.append(backward(p, cfg, trace, w))
    for a, b in zip(out[0].arrays(), out[1].arrays()):
        assert a.tobytes() == b.tobytes()
