"""Small numeric helpers shared by the encoder, aggregator, losses and trainer.

Randomness comes from numpy's ``PCG64`` bit generator (PCG-XSL-RR 128/64),
which produces the same stream for a given seed on every platform numpy
supports.
"""
import math

import numpy as np

LN2 = math.log(2.0)


class Rng:
    """Seeded random source. Every stochastic step of the package draws from one."""

    def __init__(self, seed):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low, high, size):
        return self.gen.uniform(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def spawn(self, key):
        # child stream keyed by (seed, key); independent of how much the parent consumed
        return Rng(np.random.SeedSequence([self.seed, int(key)]).generate_state(1, np.uint64)[0])


def matvec(M, v):
    M = np.asarray(M, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: matrix {M.shape} vs vector {v.shape}")
    return M @ v


def softplus_stable(x):
    """ln(1 + exp(x)) without overflow; works on scalars and arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def softmax(e):
    e = np.asarray(e, dtype=np.float64)
    if e.size == 0:
        raise ValueError("softmax of an empty vector")
    z = np.exp(e - e.max())
    return z / z.sum()


def tanh_eval(x):
    return np.tanh(x)


def tanh_grad(y):
    """Derivative of tanh expressed through its output y = tanh(x)."""
    return 1.0 - y * y


def bernoulli_mask(rng, length, p_keep):
    if not 0.0 < p_keep <= 1.0:
        raise ValueError(f"p_keep must lie in (0, 1], got {p_keep}")
    if p_keep == 1.0:
        return np.ones(length)
    return (rng.gen.random(length) < p_keep).astype(np.float64)


def finite_diff_grad(f, theta, h=1e-4):
    """Central-difference gradient of scalar f at theta."""
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(theta)
        flat[i] = old - h
        fm = f(theta)
        flat[i] = old
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value while perturbing coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a, n):
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
