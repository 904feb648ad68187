import numpy as np

from denoise_ad.lstm_autoencoder import backward, forward, init_params
from denoise_ad.tensor_core import Rng, numeric_gradient


def gradient_errors(config, window, mask_seed=0, eps=1e-5):
    """Per-group relative error ||analytic - numeric|| / max(||analytic||, ||numeric||).

    Dropout masks are frozen by replaying the same RNG stream on every
    loss evaluation.
    """
    params = init_params(config)
    X = np.asarray(window, dtype=np.float64)

    def loss():
        recon, _ = forward(params, config, X, True, Rng(mask_seed, 99))
        return np.sum((recon - X) ** 2) / (X.shape[0] if X.ndim == 3 else 1)

    _, trace = forward(params, config, X, True, Rng(mask_seed, 99))
    grads = backward(params, config, trace, X)
    errors = {}
    for (name, a), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        def f(v, a=a):
            saved = a.copy()
            a[...] = v
            out = loss()
            a[...] = saved
            return out

        num = numeric_gradient(f, a.copy(), eps)
        scale = max(np.linalg.norm(num), np.linalg.norm(g))
        errors[name] = 0.0 if scale == 0 else float(np.linalg.norm(num - g) / scale)
    return errors
