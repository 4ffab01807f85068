"""Dense float64 primitives, their backward functions, a portable RNG and a
finite-difference gradient checker.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Forward
functions never mutate their inputs; backward functions either return a fresh
gradient or add into caller-provided buffers.
"""
import math

import numpy as np

from .errors import DimensionError, DomainError, EvaluationError

__all__ = [
    "GradPair",
    "Rng", "fnv1a64", "matmul", "matmul_backward", "sigmoid", "sigmoid_backward",
    "tanh_op", "tanh_backward", "logsumexp", "logsumexp_backward", "grad_check",
    "glorot_uniform",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def _mix64(z):
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(text):
    """64-bit FNV-1a hash of the UTF-8 encoding of ``text``."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


class Rng:
    """SplitMix64 generator.

    The n-th output depends only on the seed and n, so bulk draws are
    vectorised without changing the sequence.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def next_u64(self):
        self._counter += 1
        return _mix64((self.seed + self._counter * _GAMMA) & _MASK64)

    def random(self):
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def _bulk_u64(self, n):
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
        return z ^ (z >> np.uint64(31))

    def random_array(self, shape):
        n = int(np.prod(shape, dtype=np.int64))
        u = self._bulk_u64(n) >> np.uint64(11)
        return (u.astype(np.float64) * (1.0 / 9007199254740992.0)).reshape(shape)

    def uniform(self, low, high, shape):
        return low + (high - low) * self.random_array(shape)

    def randbelow(self, n):
        if n <= 0:
            raise DomainError(f"randbelow needs n >= 1, got {n}")
        return min(int(self.random() * n), n - 1)

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle of a list."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def derive(self, key):
        """Independent child stream keyed by a string; does not advance self."""
        return Rng(_mix64(self.seed ^ fnv1a64(key)))


def glorot_uniform(rng, shape):
    fan_out, fan_in = shape[0], (shape[1] if len(shape) > 1 else 1)
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


def matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(a, b, d_out, d_a=None, d_b=None):
    """Add dL/da = d_out b^T into ``d_a`` and dL/db = a^T d_out into ``d_b``."""
    if d_a is not None:
        d_a += d_out @ b.T
    if d_b is not None:
        d_b += a.T @ d_out
    return d_a, d_b


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_backward(y, d_y):
    return d_y * y * (1.0 - y)


def tanh_op(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_backward(y, d_y):
    return d_y * (1.0 - y * y)


def logsumexp(x):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise DomainError("logsumexp of an empty vector")
    m = x.max()
    if x.size == 1:
        return float(m)
    return float(m + math.log(np.exp(x - m).sum()))


def logsumexp_backward(x, d_out):
    x = np.asarray(x, dtype=np.float64).ravel()
    return d_out * np.exp(x - logsumexp(x))


def grad_check(f, theta, rng, h=1e-5, max_coords=64):
    """Largest relative error between the analytic and central-difference
    gradient of ``f`` over a sample of coordinates.

    ``f(theta)`` must return ``(value, grad)``.  ``theta`` is copied before
    each perturbation.  When ``theta`` has more than ``max_coords`` entries a
    random subset (drawn from ``rng``) is checked.
    """
    theta = np.array(theta, dtype=np.float64)
    value, analytic = f(theta.copy())
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != theta.shape:
        raise DimensionError(f"gradient shape {analytic.shape} != parameter shape {theta.shape}")
    if not math.isfinite(value):
        raise EvaluationError(f"function value is not finite: {value}")

    n = theta.size
    coords = list(range(n))
    if max_coords is not None and n > max_coords:
        rng.shuffle(coords)
        coords = sorted(coords[:max_coords])

    flat = theta.ravel()
    worst = 0.0
    for i in coords:
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        f_plus = f(plus.reshape(theta.shape))[0]
        f_minus = f(minus.reshape(theta.shape))[0]
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise EvaluationError(f"non-finite value while perturbing coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic.flat[i]
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, err)
    return worst


class GradPair:
    """A parameter value with its same-shaped gradient buffer."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.array(value, dtype=np.float64, order="C")
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"GradPair(shape={self.value.shape})"
