"""Asymptotic CUSUM tests calibrated by a simulated Brownian bridge.

Under no change, ``sqrt(T) * CUSUM / sigma`` converges to
``max_{a<=t<=b} |B0(t)| / (t(1-t))^(1-delta)`` where ``B0`` is a standard
Brownian bridge; :func:`simulate_bridge_null` samples that maximum on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .exact import TestOutcome
from .statistics import BINARY, CusumConfig, cusum_statistic

__all__ = [
    "BridgeNull",
    "simulate_bridge_null",
    "bridge_paths",
    "kolmogorov_sf",
    "kolmogorov_isf",
    "asymptotic_cusum_test",
    "default_window",
]

DEFAULT_GRID = 1000
DEFAULT_BRIDGE_MC = 100_000
_CHUNK_BYTES = 64 * 2**20


@dataclass(frozen=True)
class BridgeNull:
    delta: float
    a: float
    b: float
    grid_size: int
    samples: np.ndarray = field(repr=False)
    mc_count: int
    seed: int

    def quantile(self, q):
        k = min(int(np.floor(q * self.mc_count)), self.mc_count - 1)
        return float(self.samples[max(k, 0)])

    def upper_pvalue(self, observed):
        n_ge = self.mc_count - np.searchsorted(self.samples, observed, side="left")
        return (1.0 + n_ge) / (self.mc_count + 1.0)


def default_window(T):
    """The full scan ``(1/T, (T-1)/T)`` used when no trimming is requested."""
    return 1.0 / T, (T - 1.0) / T


def _grid_window(a, b, grid_size):
    lo = max(1, int(round(a * grid_size)))
    hi = min(grid_size - 1, int(round(b * grid_size)))
    if lo > hi:
        raise ConfigurationError(f"window ({a}, {b}) is empty on a grid of {grid_size}")
    return lo, hi


def bridge_paths(n, grid_size, rng):
    """``n`` Brownian-bridge paths on ``{0, 1/N, ..., 1}``, shape ``(n, N + 1)``.

    A Gaussian random walk with step variance ``1/N`` pinned at ``t = 1`` by
    subtracting ``t`` times its terminal value.
    """
    steps = rng.standard_normal((n, grid_size)) / math.sqrt(grid_size)
    walk = np.zeros((n, grid_size + 1))
    np.cumsum(steps, axis=1, out=walk[:, 1:])
    t = np.linspace(0.0, 1.0, grid_size + 1)
    walk -= t * walk[:, -1:]
    return walk


def simulate_bridge_null(delta, a, b, grid_size=DEFAULT_GRID, mc_count=DEFAULT_BRIDGE_MC,
                         seed=0):
    """Sample ``max_{a<=t<=b} |B0(t)| / (t(1-t))^(1-delta)`` on a uniform grid."""
    if not 0.0 <= delta <= 1.0:
        raise ConfigurationError(f"delta must lie in [0, 1], got {delta}")
    if not 0.0 < a < b < 1.0:
        raise ConfigurationError(f"need 0 < a < b < 1, got a={a}, b={b}")
    if grid_size < 200:
        raise ConfigurationError(f"grid_size must be at least 200, got {grid_size}")
    if mc_count < 1:
        raise ConfigurationError("mc_count must be positive")
    lo, hi = _grid_window(a, b, grid_size)
    t = np.arange(lo, hi + 1) / grid_size
    scale = (t * (1.0 - t)) ** (1.0 - delta)
    chunk = max(1, _CHUNK_BYTES // (8 * (grid_size + 1)))
    out = np.empty(mc_count)
    for k, start in enumerate(range(0, mc_count, chunk)):
        size = min(chunk, mc_count - start)
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(k,)))
        path = bridge_paths(size, grid_size, rng)
        out[start : start + size] = (np.abs(path[:, lo : hi + 1]) / scale).max(axis=1)
    out.sort()
    out.setflags(write=False)
    return BridgeNull(float(delta), float(a), float(b), int(grid_size), out, int(mc_count),
                      int(seed))


def kolmogorov_sf(x, terms=100):
    """``P(sup |B0| > x) = 2 sum_{k>=1} (-1)^(k+1) exp(-2 k^2 x^2)``."""
    k = np.arange(1, terms + 1)
    return float(2.0 * np.sum((-1.0) ** (k + 1) * np.exp(-2.0 * k**2 * x**2)))


def kolmogorov_isf(p):
    """Upper ``p``-quantile of the supremum of ``|B0|`` on ``[0, 1]``."""
    from scipy.optimize import brentq

    return brentq(lambda x: kolmogorov_sf(x) - p, 0.2, 5.0, xtol=1e-12)


def asymptotic_cusum_test(series, delta, alpha, null):
    """Brownian-bridge CUSUM test with a plug-in variance.

    The standardized statistic is ``sqrt(T) * CUSUM / sigma_hat`` with
    ``sigma_hat^2 = p(1-p)`` for binary data and ``lambda_hat`` for counts.
    The CUSUM scan uses the same window ``(null.a, null.b)`` as the bridge null.
    """
    if abs(null.delta - delta) > 1e-12:
        raise ConfigurationError(
            f"bridge null was simulated for delta={null.delta}, test asks for {delta}"
        )
    T = series.T
    rate = series.total / T
    var = rate * (1.0 - rate) if series.kind == BINARY else rate
    cs = cusum_statistic(series, CusumConfig(delta, null.a, null.b))
    if var <= 0.0:
        return TestOutcome(0.0, 1.0, False, alpha, cs.argmax_t, null)
    z = math.sqrt(T) * cs.value / math.sqrt(var)
    p = float(null.upper_pvalue(z))
    return TestOutcome(z, p, p <= alpha, alpha, cs.argmax_t, null)
