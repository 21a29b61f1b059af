"""Streaming statistics and discrete 1-D filters.

Provides the pieces the rate monitor composes every sampling period:
Welford-style online moments, a sliding sample window, a discrete
Gaussian smoothing kernel, a Laplacian-of-Gaussian change-rate kernel,
valid-mode convolution (no padding), and the Gaussian 95th-quantile
estimate built from streaming moments.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: z-score of the 95th percentile of a unit Gaussian.
Z95 = 1.64485


class InsufficientDataError(ValueError):
    """Raised when a statistic is requested before enough samples exist."""


@dataclass
class OnlineMoments:
    """Single-pass mean/variance accumulator (Welford).

    ``m2`` is the running sum of squared deviations from the current mean,
    so ``variance == m2 / (n - 1)`` for ``n >= 2``.
    """

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    _mean_c: float = field(default=0.0, repr=False, compare=False)

    def update(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        # compensated mean update: uncorrected drift in the mean feeds the
        # deviation products and wrecks m2 on large-offset streams
        y = delta / self.n - self._mean_c
        t = self.mean + y
        self._mean_c = (t - self.mean) - y
        self.mean = t
        self.m2 += delta * (x - self.mean)

    def update_many(self, xs: Iterable[float]) -> None:
        for x in xs:
            self.update(x)

    @property
    def variance(self) -> float:
        """Sample variance (n-1 denominator)."""
        if self.n < 2:
            raise InsufficientDataError("variance needs at least 2 samples")
        return self.m2 / (self.n - 1)

    @property
    def variance_population(self) -> float:
        if self.n < 1:
            raise InsufficientDataError("variance needs at least 1 sample")
        return self.m2 / self.n

    @property
    def stddev(self) -> float:
        return math.sqrt(self.variance)

    def merge(self, other: "OnlineMoments") -> "OnlineMoments":
        """Combine two accumulators as if their streams were concatenated.

        Chan et al. pairwise update; exact up to rounding.
        """
        if other.n == 0:
            return OnlineMoments(self.n, self.mean, self.m2)
        if self.n == 0:
            return OnlineMoments(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return OnlineMoments(n, mean, m2)

    def reset(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self._mean_c = 0.0


def update_moments(m: OnlineMoments, x: float) -> OnlineMoments:
    """Functional form of the Welford update; mutates and returns ``m``."""
    m.update(x)
    return m


@dataclass(frozen=True)
class FilterKernel:
    """Symmetric discrete kernel, weights indexed x in [-radius, radius]."""

    radius: int
    weights: tuple[float, ...]
    normalized: bool

    def __post_init__(self) -> None:
        if len(self.weights) != 2 * self.radius + 1:
            raise ValueError("kernel weight count must be 2*radius + 1")

    @property
    def weight_sum(self) -> float:
        return math.fsum(self.weights)


def gaussian_kernel(radius: int, normalize: bool = True) -> FilterKernel:
    """Discrete unit-sigma Gaussian smoothing kernel.

    Raw weights are exp(-x^2/2)/sqrt(2*pi); with ``normalize`` they are
    rescaled to sum to one so the filter preserves a constant signal.
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    raw = [math.exp(-(x * x) / 2.0) / _SQRT_2PI for x in range(-radius, radius + 1)]
    if normalize:
        total = math.fsum(raw)
        raw = [w / total for w in raw]
    return FilterKernel(radius=radius, weights=tuple(raw), normalized=normalize)


def log_kernel(sigma: float = 0.5, radius: int = 1) -> FilterKernel:
    """Discrete Laplacian-of-Gaussian kernel.

    weight(x) = x^2 exp(-x^2/(2 s^2)) / (sqrt(2 pi) s^5)
                  - exp(-x^2/(2 s^2)) / (sqrt(2 pi) s^3)

    The response measures the local rate of change of a signal; it is
    near zero only where the signal is both flat and small.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    s3 = sigma**3
    s5 = sigma**5
    weights = []
    for x in range(-radius, radius + 1):
        g = math.exp(-(x * x) / (2.0 * sigma * sigma))
        weights.append((x * x) * g / (_SQRT_2PI * s5) - g / (_SQRT_2PI * s3))
    return FilterKernel(radius=radius, weights=tuple(weights), normalized=False)


def convolve_valid(values: Sequence[float], kernel: FilterKernel) -> list[float]:
    """Valid-mode (no padding) convolution of ``values`` with ``kernel``.

    Output length is ``len(values) - 2*radius``; an input too short for
    even one output yields an empty list rather than an error.
    """
    r = kernel.radius
    n = len(values)
    if n <= 2 * r:
        return []
    w = kernel.weights
    out = []
    for i in range(r, n - r):
        acc = 0.0
        for k in range(-r, r + 1):
            acc += values[i + k] * w[k + r]
        out.append(acc)
    return out


class SampleWindow:
    """Sliding FIFO window of the last ``w`` transaction counts.

    ``filtered(kernel)`` returns the valid-mode filtered image of the
    current contents (empty until the window exceeds 2*radius values).
    """

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("window size must be >= 1")
        self.size = size
        self._values: deque[float] = deque(maxlen=size)

    def push(self, value: float) -> None:
        self._values.append(value)

    def values(self) -> list[float]:
        return list(self._values)

    def filtered(self, kernel: FilterKernel) -> list[float]:
        return convolve_valid(list(self._values), kernel)

    @property
    def full(self) -> bool:
        return len(self._values) == self.size

    def __len__(self) -> int:
        return len(self._values)


def quantile95(moments: OnlineMoments) -> float:
    """Gaussian 95th-quantile estimate: mean + 1.64485 * stddev."""
    if moments.n < 2:
        raise InsufficientDataError("quantile95 needs at least 2 samples")
    return moments.mean + Z95 * moments.stddev
