"""Dense float64 matrix helpers, activations, and a reproducible RNG.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
helpers here add the shape checking and numerically stable formulations
the rest of the package relies on.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import OracleError, ShapeError

_INV_2_53 = 1.0 / 9007199254740992.0


def as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def sigmoid(x):
    # expit branches on sign internally; no overflow for large |x|
    return expit(np.asarray(x, dtype=np.float64))


def apply_activation(m, kind: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if kind == "sigmoid":
        return sigmoid(m)
    if kind == "tanh":
        return np.tanh(m)
    raise ValueError(f"unknown activation {kind!r}")


class Rng:
    """Seeded uniform generator on top of the PCG64 bit stream.

    Floats are built from the raw 64-bit outputs (top 53 bits), so the
    stream depends only on the PCG64 algorithm, not on numpy's
    distribution code, which is allowed to change between releases.
    """

    def __init__(self, seed: int, *key: int):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self.key])
        self._bits = np.random.PCG64(ss)

    def child(self, *key: int) -> "Rng":
        """Independent stream derived from this one's seed (not its state)."""
        return Rng(self.seed, *self.key, *key)

    def uniform(self, size) -> np.ndarray:
        n = int(np.prod(size))
        raw = self._bits.random_raw(n) if n else np.empty(0, dtype=np.uint64)
        return ((raw >> np.uint64(11)).astype(np.float64) * _INV_2_53).reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        # argsort of fresh uniforms; stable sort keeps it platform independent
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``, in draw order."""
        return self.permutation(n)[:k]


def rng_uniform(rng: Rng, rows: int, cols: int) -> np.ndarray:
    return rng.uniform((rows, cols))


def numeric_gradient(f, x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar function ``f`` at ``x``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        fp = float(f(x))
        x[idx] = orig - eps
        fm = float(f(x))
        x[idx] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleError(f"non-finite function value near index {idx}")
        grad[idx] = (fp - fm) / (2.0 * eps)
    return grad
