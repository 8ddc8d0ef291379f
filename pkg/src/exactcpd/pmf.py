"""Log-space PMFs and conditional samplers for the exact tests.

Given the total ``S_T``, a Bernoulli series is a uniformly random arrangement
of ``S_T`` ones and a Poisson series is multinomial with equal cell
probabilities. The partial sums ``S_i`` are then hypergeometric and binomial
respectively.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .errors import ParameterError

__all__ = [
    "log_binom",
    "hypergeometric_log_pmf",
    "binomial_log_pmf",
    "hypergeometric_log_pmf_support",
    "binomial_log_pmf_support",
    "sample_binary_given_total",
    "sample_counts_given_total",
    "sample_binary_batch",
    "sample_counts_batch",
]


def log_binom(n, k):
    """Natural log of the binomial coefficient, ``-inf`` outside ``0 <= k <= n``."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    inside = (k >= 0) & (k <= n)
    kk = np.where(inside, k, 0.0)
    out = gammaln(n + 1) - gammaln(kk + 1) - gammaln(n - kk + 1)
    out = np.where(inside, out, -np.inf)
    return out[()] if out.ndim == 0 else out


def _check_int(name, value, low=0):
    if int(value) != value or value < low:
        raise ParameterError(f"{name} must be an integer >= {low}, got {value!r}")
    return int(value)


def hypergeometric_log_pmf(q, i, K, T):
    """Log of ``P(S_i = q)`` when ``K`` ones are spread uniformly over ``T`` slots.

    Parameters
    ----------
    q : int or array of int
        Number of ones among the first ``i`` positions. Values outside the
        support give ``-inf``.
    i : int
        Sample size (prefix length).
    K : int
        Total number of ones.
    T : int
        Population size.
    """
    T = _check_int("T", T)
    i = _check_int("i", i)
    K = _check_int("K", K)
    if i > T or K > T:
        raise ParameterError(f"need i <= T and K <= T, got i={i}, K={K}, T={T}")
    q = np.asarray(q)
    out = log_binom(K, q) + log_binom(T - K, i - q) - log_binom(T, i)
    out = np.where(np.isfinite(out), np.minimum(out, 0.0), -np.inf)
    return float(out) if out.ndim == 0 else out


def binomial_log_pmf(q, n, p):
    """Log of the Binomial(n, p) PMF at ``q``; degenerate ``p`` in {0, 1} is exact."""
    n = _check_int("n", n)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p!r}")
    q = np.asarray(q)
    qf = q.astype(float)
    inside = (qf >= 0) & (qf <= n)
    if p == 0.0:
        out = np.where(qf == 0, 0.0, -np.inf)
    elif p == 1.0:
        out = np.where(qf == n, 0.0, -np.inf)
    else:
        qq = np.where(inside, qf, 0.0)
        out = log_binom(n, qq) + qq * np.log(p) + (n - qq) * np.log1p(-p)
        out = np.where(inside, np.minimum(out, 0.0), -np.inf)
    return float(out) if out.ndim == 0 else out


def hypergeometric_log_pmf_support(i, K, T):
    """Return ``(q, log_pmf)`` over the full support of ``S_i`` given ``S_T = K``."""
    lo, hi = max(0, i - (T - K)), min(i, K)
    q = np.arange(lo, hi + 1)
    return q, hypergeometric_log_pmf(q, i, K, T)


def binomial_log_pmf_support(n, p):
    q = np.arange(n + 1)
    return q, binomial_log_pmf(q, n, p)


def sample_binary_given_total(T, s_total, rng):
    """Uniformly random 0/1 vector of length ``T`` with exactly ``s_total`` ones."""
    T = _check_int("T", T, low=2)
    s_total = _check_int("s_total", s_total)
    if s_total > T:
        raise ParameterError(f"s_total={s_total} exceeds T={T}")
    x = np.zeros(T, dtype=np.int64)
    x[rng.choice(T, size=s_total, replace=False)] = 1
    return x


def sample_counts_given_total(T, s_total, rng):
    """Multinomial(s_total; 1/T, ..., 1/T) counts, the Poisson law given the total."""
    T = _check_int("T", T, low=2)
    s_total = _check_int("s_total", s_total)
    epochs = rng.integers(0, T, size=s_total)
    return np.bincount(epochs, minlength=T).astype(np.int64)


def sample_binary_batch(T, s_total, size, rng):
    """``size`` independent draws of :func:`sample_binary_given_total`, shape ``(size, T)``."""
    if not 0 <= s_total <= T:
        raise ParameterError(f"s_total={s_total} outside [0, {T}]")
    base = np.zeros((size, T), dtype=np.int8)
    base[:, :s_total] = 1
    return rng.permuted(base, axis=1)


def sample_counts_batch(T, s_total, size, rng):
    """``size`` multinomial draws with equal cell probabilities, shape ``(size, T)``."""
    if s_total < 0:
        raise ParameterError(f"s_total must be >= 0, got {s_total}")
    return rng.multinomial(s_total, np.full(T, 1.0 / T), size=size)
