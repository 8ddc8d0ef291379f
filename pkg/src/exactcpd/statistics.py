"""Single-channel changepoint statistics and location estimators.

Every statistic is a function of the partial sums ``S_t``. The batch kernels
(``*_batch``) take an integer array of shape ``(n, T)`` holding ``n`` series and
evaluate all of them at once; the single-series functions wrap them so that an
observed statistic and its Monte Carlo null are computed by identical code.

Time indices are 1-based throughout: a changepoint estimate ``t`` means the
first segment is ``X_1, ..., X_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import xlogy

from .errors import ConfigurationError, KindError, ParameterError
from .pmf import binomial_log_pmf_support, hypergeometric_log_pmf_support

__all__ = [
    "BINARY",
    "COUNT",
    "ChannelSeries",
    "CusumConfig",
    "StatisticValue",
    "as_series",
    "cusum_statistic",
    "lr_statistic_binary",
    "lr_statistic_count",
    "lr_statistic",
    "minp_pvalue_vector",
    "minp_pvalue_table",
    "estimate_changepoint",
    "cusum_batch",
    "lr_batch",
    "minp_batch",
]

BINARY = "binary"
COUNT = "count"
KINDS = (BINARY, COUNT)

# relative tolerance when two PMF values are treated as tied
PMF_TIE_RTOL = 1e-9
# relative tolerance for ties between objective values when picking argmax/argmin
_ARG_RTOL = 1e-12


@dataclass(frozen=True)
class ChannelSeries:
    """A binary or count time series ``X_1, ..., X_T``."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KindError(f"kind must be one of {KINDS}, got {self.kind!r}")
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise ParameterError("a channel series must be one-dimensional")
        if v.size < 2:
            raise ParameterError(f"need T >= 2, got T={v.size}")
        if not np.all(np.equal(np.mod(v, 1), 0)):
            raise ParameterError("series entries must be integers")
        v = v.astype(np.int64)
        if v.min() < 0:
            raise ParameterError("series entries must be non-negative")
        if self.kind == BINARY and v.max() > 1:
            raise KindError("binary series must contain only 0 and 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def T(self):
        return self.values.size

    @property
    def total(self):
        return int(self.values.sum())

    @property
    def partial_sums(self):
        return np.cumsum(self.values)

    def is_degenerate(self):
        """True when the conditional null law given ``S_T`` is a point mass."""
        s = self.total
        return s == 0 or (self.kind == BINARY and s == self.T)


def as_series(x, kind=None):
    if isinstance(x, ChannelSeries):
        if kind is not None and kind != x.kind:
            raise KindError(f"expected a {kind} series, got {x.kind}")
        return x
    if kind is None:
        raise KindError("kind is required when passing a raw array")
    return ChannelSeries(np.asarray(x), kind)


@dataclass(frozen=True)
class CusumConfig:
    """Weight exponent ``delta`` and scan window ``a*T <= t <= b*T``.

    Leaving ``a`` and ``b`` unset scans every split point ``1 <= t <= T-1``.
    """

    delta: float = 1.0
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError(f"delta must lie in [0, 1], got {self.delta}")
        for name in ("a", "b"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v < 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1), got {v}")
        if self.a is not None and self.b is not None and self.a >= self.b:
            raise ConfigurationError(f"need a < b, got a={self.a}, b={self.b}")

    def scan_range(self, T):
        """Inclusive integer range ``(lo, hi)`` of split points for length ``T``."""
        lo = 1 if self.a is None else max(1, math.ceil(self.a * T - 1e-9))
        hi = T - 1 if self.b is None else min(T - 1, math.floor(self.b * T + 1e-9))
        if lo > hi:
            raise ConfigurationError(
                f"empty CUSUM scan range for T={T}, a={self.a}, b={self.b}"
            )
        return lo, hi


@dataclass(frozen=True)
class StatisticValue:
    value: float
    argmax_t: int


def _first_extreme(obj, lo, largest=True, scale_floor=1.0):
    """Value and 1-based index of the first (near-)extreme entry along the last axis.

    Entries within ``_ARG_RTOL * max(|extreme|, scale_floor)`` of the extreme
    count as ties; p-values use ``scale_floor=0`` so tiny values stay distinct.
    """
    ext = obj.max(axis=-1) if largest else obj.min(axis=-1)
    tol = _ARG_RTOL * np.maximum(np.abs(ext), scale_floor)
    if largest:
        hit = obj >= (ext - tol)[..., None]
    else:
        hit = obj <= (ext + tol)[..., None]
    return ext, np.argmax(hit, axis=-1) + lo


def _partial_sums(X):
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    return np.cumsum(X, axis=-1, dtype=np.int64)


def cusum_objective(S, delta, lo=1, hi=None):
    """CUSUM objective for split points ``lo..hi`` given partial sums ``S`` (n, T)."""
    T = S.shape[-1]
    hi = T - 1 if hi is None else hi
    t = np.arange(lo, hi + 1, dtype=np.int64)
    ST = S[:, -1:]
    num = np.abs(T * S[:, lo - 1 : hi] - t * ST)
    obj = num / (t * (T - t)).astype(float)
    if delta:
        obj = obj * ((t / T) * (1.0 - t / T)) ** delta
    return obj


def cusum_batch(X, delta, lo=1, hi=None, return_argmax=False):
    """CUSUM statistics for each row of ``X`` (shape ``(n, T)``)."""
    S = _partial_sums(X)
    obj = cusum_objective(S, delta, lo, hi)
    val, arg = _first_extreme(obj, lo, largest=True)
    return (val, arg) if return_argmax else val


def _lr_objective(S, kind):
    """Split-point objective ``t*F(S_t/t) + (T-t)*F(rest)`` for t = 1..T-1."""
    T = S.shape[-1]
    t = np.arange(1, T, dtype=float)
    left = S[:, :-1].astype(float)
    right = S[:, -1:] - left
    # t*H(S_t/t) = -S log(S/t) - (t-S) log((t-S)/t); t*G(S_t/t) = S - S log(S/t)
    if kind == BINARY:
        obj = -(
            xlogy(left, left / t)
            + xlogy(t - left, (t - left) / t)
            + xlogy(right, right / (T - t))
            + xlogy(T - t - right, (T - t - right) / (T - t))
        )
    else:
        obj = (left + right) - xlogy(left, left / t) - xlogy(right, right / (T - t))
    return obj


def _lr_null_term(S, kind):
    T = S.shape[-1]
    tot = S[:, -1].astype(float)
    if kind == BINARY:
        return -(xlogy(tot, tot / T) + xlogy(T - tot, (T - tot) / T))
    return tot - xlogy(tot, tot / T)


def lr_batch(X, kind, return_argmax=False):
    """Likelihood-ratio statistics ``-2(l0 - l1)`` for each row of ``X``."""
    S = _partial_sums(X)
    obj = _lr_objective(S, kind)
    best, arg = _first_extreme(obj, 1, largest=False)
    val = 2.0 * (_lr_null_term(S, kind) - best)
    return (val, arg) if return_argmax else val


@lru_cache(maxsize=4096)
def _minp_table(kind, T, s_total):
    table = np.ones((T - 1, s_total + 1))
    for i in range(1, T):
        if kind == BINARY:
            q, logf = hypergeometric_log_pmf_support(i, s_total, T)
        else:
            q, logf = binomial_log_pmf_support(s_total, i / T)
        keep = np.isfinite(logf)
        q, logf = q[keep], logf[keep]
        order = np.argsort(logf, kind="stable")
        sorted_logf = logf[order]
        cum = np.cumsum(np.exp(sorted_logf))
        # include every support point whose mass is <= f(s), up to a relative tie tolerance
        idx = np.searchsorted(sorted_logf, logf + PMF_TIE_RTOL, side="right") - 1
        table[i - 1, q] = np.minimum(cum[idx], 1.0)
    table.setflags(write=False)
    return table


def minp_pvalue_table(kind, T, s_total):
    """Conditional p-values ``p_i(s)`` for every split ``i`` and prefix total ``s``.

    Row ``i-1`` holds the two-sided PMF-ordering p-value of ``S_i = s`` against
    Hypergeometric(i, S_T, T) for binary data, or Binomial(S_T, i/T) for counts.
    Entries for ``s`` outside the support are 1.
    """
    if kind not in KINDS:
        raise KindError(f"unknown kind {kind!r}")
    return _minp_table(kind, int(T), int(s_total))


def minp_batch(X, kind, return_argmin=False):
    """Minimum conditional p-value over split points for rows sharing one ``S_T``."""
    S = _partial_sums(X)
    T = S.shape[-1]
    totals = np.unique(S[:, -1])
    if totals.size != 1:
        raise ParameterError("minp_batch needs rows with a common total")
    table = minp_pvalue_table(kind, T, int(totals[0]))
    P = table[np.arange(T - 1), S[:, :-1]]
    val, arg = _first_extreme(P, 1, largest=False, scale_floor=0.0)
    return (val, arg) if return_argmin else val


def cusum_statistic(series, cfg=None):
    """Weighted CUSUM ``max_t [t/T (1 - t/T)]^delta |S_t/t - (S_T - S_t)/(T - t)|``."""
    cfg = cfg or CusumConfig()
    lo, hi = cfg.scan_range(series.T)
    val, arg = cusum_batch(series.values, cfg.delta, lo, hi, return_argmax=True)
    return StatisticValue(float(val[0]), int(arg[0]))


def lr_statistic_binary(series):
    """Bernoulli likelihood-ratio statistic; ``argmax_t`` maximizes the profile likelihood."""
    if series.kind != BINARY:
        raise KindError("lr_statistic_binary needs a binary series")
    val, arg = lr_batch(series.values, BINARY, return_argmax=True)
    return StatisticValue(float(val[0]), int(arg[0]))


def lr_statistic_count(series):
    """Poisson likelihood-ratio statistic; ``argmax_t`` maximizes the profile likelihood."""
    if series.kind != COUNT:
        raise KindError("lr_statistic_count needs a count series")
    val, arg = lr_batch(series.values, COUNT, return_argmax=True)
    return StatisticValue(float(val[0]), int(arg[0]))


def lr_statistic(series):
    if series.kind == BINARY:
        return lr_statistic_binary(series)
    return lr_statistic_count(series)


def minp_pvalue_vector(series):
    """Conditional p-values ``p_1, ..., p_{T-1}`` of the prefix sums given ``S_T``."""
    table = minp_pvalue_table(series.kind, series.T, series.total)
    S = series.partial_sums
    return table[np.arange(series.T - 1), S[:-1]].copy()


def estimate_changepoint(series, method, cfg=None):
    """Estimate the changepoint location from a test objective.

    Parameters
    ----------
    series : ChannelSeries
    method : {"cusum", "lr", "minp"}
        ``cusum`` uses the maximizer of the CUSUM objective (with ``cfg``),
        ``lr`` the maximizer of the profile likelihood and ``minp`` the index of
        the smallest conditional p-value. Ties go to the smallest index.
    cfg : CusumConfig, optional
    """
    if method == "cusum":
        return cusum_statistic(series, cfg).argmax_t
    if method == "lr":
        return lr_statistic(series).argmax_t
    if method == "minp":
        p = minp_pvalue_vector(series)
        return int(np.argmax(p <= p.min() * (1 + _ARG_RTOL))) + 1
    raise ConfigurationError(f"unknown estimation method {method!r}")
