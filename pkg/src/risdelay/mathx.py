"""Numerical kernels shared by the channel, SNC and simulation modules.

Everything here is pure except :class:`RandomStream`, which owns a numpy
``Generator`` and advances it on every draw.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import special

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# Half-width of the Marcum-Q summation window in Poisson standard deviations.
# A Chernoff bound puts the excluded mass below 1e-20, well under 1e-14.
MARCUM_WINDOW_SIGMAS = 10.0


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def regularized_lower_gamma(shape, x):
    """Regularized lower incomplete gamma P(shape, x); broadcasts over arrays."""
    shape_arr = np.asarray(shape, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(shape_arr <= 0):
        raise DomainError("shape must be positive")
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise DomainError("x must be nonnegative")
    out = special.gammainc(shape_arr, x_arr)
    return float(out) if out.ndim == 0 else out


def _poisson_window(mean: float) -> tuple[int, int]:
    if mean == 0.0:
        return 0, 0
    half = MARCUM_WINDOW_SIGMAS * math.sqrt(mean) + 20.0
    return max(int(mean - half), 0), int(math.ceil(mean + half))


def marcum_q(order: int, a, b):
    """Generalized Marcum Q-function Q_order(a, b).

    Evaluated as a Poisson(a^2/2) mixture of central chi-square upper tails
    with 2(order + k) degrees of freedom. ``b`` may be an array; ``inf``
    entries give 0.
    """
    if int(order) != order or order < 1:
        raise DomainError("order must be a positive integer")
    a = float(a)
    if a < 0 or math.isnan(a):
        raise DomainError("a must be nonnegative")
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < 0) or np.any(np.isnan(b_arr)):
        raise DomainError("b must be nonnegative")

    mean = 0.5 * a * a
    lo, hi = _poisson_window(mean)
    k = np.arange(lo, hi + 1, dtype=float)
    if mean == 0.0:
        log_w = np.zeros(1)
        k = np.zeros(1)
    else:
        log_w = k * math.log(mean) - mean - special.gammaln(k + 1.0)
    w = np.exp(log_w)

    half_x = 0.5 * np.square(b_arr).reshape(-1)
    finite = np.isfinite(half_x)
    tails = np.zeros((k.size, half_x.size))
    tails[:, finite] = special.gammaincc(order + k[:, None], half_x[None, finite])
    out = np.clip(w @ tails, 0.0, 1.0)
    out = out.reshape(b_arr.shape)
    return float(out) if out.ndim == 0 else out


def bessel_i(order: int, x: float) -> float:
    """Modified Bessel function of the first kind, integer order."""
    if order < 0 or int(order) != order:
        raise DomainError("order must be a nonnegative integer")
    if x < 0:
        raise DomainError("x must be nonnegative")
    val = float(special.iv(order, x))
    if math.isinf(val):
        raise OverflowError(f"I_{order}({x}) exceeds the double range")
    return val


def sinc(x):
    """Unnormalized sinc, sin(x)/x with sinc(0) = 1."""
    return np.sinc(np.asarray(x, dtype=float) / math.pi)


def minimize_1d(f, lo: float, hi: float, tol: float = 1e-8, max_iter: int = 500):
    """Golden-section search on [lo, hi]. Returns (argmin, min value)."""
    if not lo < hi:
        raise ValueError(f"invalid interval [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = c if fc <= fd else d
    fx = min(fc, fd)
    # endpoints are never probed by the bracket; check them explicitly
    for edge in (lo, hi):
        fe = f(edge)
        if fe < fx:
            x, fx = edge, fe
    return x, fx


def minimize_1d_batch(f, lo: np.ndarray, hi: np.ndarray, n_iter: int = 80):
    """Vectorized golden-section over many independent intervals.

    ``f`` maps an array of points (one per interval) to objective values.
    Runs a fixed number of iterations so every lane shrinks by the same
    factor (0.618**n_iter). Returns (argmin array, min array).
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(n_iter):
        left = fc <= fd
        # left: [a, d] keeps c as the new upper probe
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - GOLDEN * (b - a), d)
        new_d = np.where(left, c, a + GOLDEN * (b - a))
        probe = np.where(left, new_c, new_d)
        fp = f(probe)
        fc, fd = (np.where(left, fp, fd), np.where(left, fc, fp))
        c, d = new_c, new_d
    x = np.where(fc <= fd, c, d)
    fx = np.minimum(fc, fd)
    return x, fx


def stream_id_for(name: str) -> int:
    """Stable integer label for a named sub-stream."""
    return zlib.crc32(name.encode("utf-8"))


@dataclass
class RandomStream:
    """Seeded random stream; same (seed, stream_id) gives the same draws.

    Sub-streams are derived through numpy's ``SeedSequence`` spawn keys, so
    children with distinct labels are independent of each other and of the
    parent.
    """

    seed: int
    stream_id: int = 0
    _key: tuple = field(default=(), repr=False)
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        key = self._key or (int(self.stream_id),)
        self._key = key
        ss = np.random.SeedSequence(int(self.seed), spawn_key=key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, label) -> "RandomStream":
        sub = stream_id_for(label) if isinstance(label, str) else int(label)
        return RandomStream(self.seed, sub, _key=self._key + (sub,))

    # thin delegation for the draws used across the package
    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.generator.choice(a, size=size, replace=replace, p=p)

    def poisson(self, lam, size=None):
        return self.generator.poisson(lam, size)

    def gamma(self, shape, scale=1.0, size=None):
        return self.generator.gamma(shape, scale, size)

    def noncentral_chisquare(self, df, nonc, size=None):
        return self.generator.noncentral_chisquare(df, nonc, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def permutation(self, x):
        return self.generator.permutation(x)
