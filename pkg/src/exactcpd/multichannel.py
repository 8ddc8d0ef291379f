"""Multichannel changepoint testing: per-channel exact tests with FDR control
("local" testing) and the permutation test on the global CUSUM statistic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import KindError, ParameterError
from .exact import DEFAULT_MC_COUNT, canonical_statistic, exact_pvalues
from .multitest import PValueSet, RejectionSet, apply_fdr
from .statistics import BINARY, KINDS

__all__ = [
    "ChannelMatrix",
    "LocalResult",
    "GlobalResult",
    "TruthSpec",
    "Metrics",
    "local_test",
    "global_cusum_statistic",
    "global_permutation_test",
    "global_permutation_pvalues",
    "evaluate_metrics",
    "location_histogram",
]

_TIE_RTOL = 1e-12
# elements per permutation batch, bounds memory
_BATCH_ELEMS = 4_000_000


@dataclass(frozen=True)
class ChannelMatrix:
    """``m`` channels observed at ``T`` common epochs (one row per channel)."""

    data: np.ndarray
    kind: str
    channel_ids: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KindError(f"kind must be one of {KINDS}, got {self.kind!r}")
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ParameterError("channel data must be a 2-D array (m x T)")
        if d.size and not np.all(np.equal(np.mod(d, 1), 0)):
            raise ParameterError("channel data must be integers")
        d = d.astype(np.int64)
        if d.size and d.min() < 0:
            raise ParameterError("channel data must be non-negative")
        if self.kind == BINARY and d.size and d.max() > 1:
            raise KindError("binary channels must contain only 0 and 1")
        ids = self.channel_ids
        ids = tuple(str(j + 1) for j in range(d.shape[0])) if ids is None else tuple(ids)
        if len(ids) != d.shape[0]:
            raise ParameterError("channel_ids must have one entry per row")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "channel_ids", ids)

    @property
    def m(self):
        return self.data.shape[0]

    @property
    def T(self):
        return self.data.shape[1]

    def subset(self, rows):
        rows = list(rows)
        return ChannelMatrix(self.data[rows], self.kind, tuple(self.channel_ids[j] for j in rows))


@dataclass(frozen=True)
class LocalResult:
    pvals: PValueSet
    rejections: RejectionSet
    changepoint_estimates: dict
    channel_test: str = ""

    @property
    def global_reject(self):
        return len(self.rejections) > 0


@dataclass(frozen=True)
class GlobalResult:
    statistic: float
    delta: float
    p_value: float
    reject: bool
    permutations: int

    @property
    def global_reject(self):
        return self.reject


@dataclass(frozen=True)
class TruthSpec:
    """Which channels (0-based row indices) truly change, and where."""

    changed_channels: frozenset
    tau: object = None

    def __post_init__(self):
        object.__setattr__(self, "changed_channels", frozenset(int(j) for j in self.changed_channels))


@dataclass(frozen=True)
class Metrics:
    """Replicate averages; ``tpr`` and ``fdr`` are ``None`` for global tests."""

    p_gcd: float
    tpr: float | None
    fdr: float | None
    replicates: int
    se: dict = field(default_factory=dict)


def local_test(matrix, channel_test="minp", fdr="bh", alpha=0.1, mc_count=DEFAULT_MC_COUNT,
               seed=0, cache=None):
    """Test every channel exactly, then control FDR across channels.

    Parameters
    ----------
    matrix : ChannelMatrix
    channel_test : str
        ``minp``, ``lr`` or a CUSUM label such as ``cu1``.
    fdr : {"bh", "abh", "sts"}
    alpha : float
    mc_count, seed : int
        Calibration size and seed; calibrations are shared across channels with
        the same total.
    cache : CalibrationCache, False or None
    """
    stat = canonical_statistic(channel_test)
    pv, est = exact_pvalues(matrix.data, matrix.kind, stat, mc_count, seed, cache)
    pset = PValueSet(pv, matrix.channel_ids)
    rej = apply_fdr(fdr, pset, alpha)
    estimates = {matrix.channel_ids[j]: int(est[j]) for j in sorted(rej.rejected)}
    return LocalResult(pset, rej, estimates, stat)


def _weights(T, delta):
    t = np.arange(1, T)
    w = ((t / T) * (1.0 - t / T)) ** delta if delta else np.ones(T - 1)
    return w / (t * (T - t))


def _sq_norms_direct(X, perms):
    """``||T S_t - t S_T||^2`` over channels for each permutation, shape ``(b, T-1)``."""
    T = X.shape[1]
    S = np.cumsum(X[:, perms], axis=2)  # (m, b, T)
    t = np.arange(1, T)
    num = T * S[:, :, :-1] - t * S[:, :, -1:]
    return np.einsum("ibt,ibt->bt", num, num)


def _sq_norms_gram(G, perms):
    """Same as :func:`_sq_norms_direct` from the time Gram matrix ``G = X^T X``."""
    T = G.shape[0]
    Gp = G[perms[:, :, None], perms[:, None, :]]  # (b, T, T)
    C = np.cumsum(np.cumsum(Gp, axis=1), axis=2)
    t = np.arange(1, T)
    Q = C[:, t - 1, t - 1]
    R = C[:, t - 1, -1]
    U = C[:, -1:, -1]
    return T * T * Q - 2 * T * t * R + t * t * U


def _global_stats(X, perms, deltas):
    m, T = X.shape
    if T <= m:
        G = X.T @ X
        sq = np.concatenate([
            _sq_norms_gram(G, perms[i : i + max(1, _BATCH_ELEMS // (T * T))])
            for i in range(0, len(perms), max(1, _BATCH_ELEMS // (T * T)))
        ])
    else:
        step = max(1, _BATCH_ELEMS // (m * T))
        sq = np.concatenate([_sq_norms_direct(X, perms[i : i + step])
                             for i in range(0, len(perms), step)])
    root = np.sqrt(sq.astype(float))
    return {d: (root * _weights(T, d)).max(axis=1) for d in deltas}


def global_cusum_statistic(matrix, delta):
    """``max_t [t/T (1-t/T)]^delta * ||prefix mean - suffix mean||_2`` over ``1 <= t <= T-1``."""
    data = matrix.data if isinstance(matrix, ChannelMatrix) else np.asarray(matrix, np.int64)
    perms = np.arange(data.shape[1])[None, :]
    return float(_global_stats(data, perms, [delta])[delta][0])


def global_permutation_pvalues(matrix, deltas, B=1000, seed=0, randomized=False):
    """Permutation p-values of the global CUSUM for several ``delta`` sharing permutations.

    Returns a dict ``delta -> (observed, p_value)``.
    """
    if B < 99:
        raise ParameterError(f"need at least 99 permutations, got {B}")
    data = matrix.data if isinstance(matrix, ChannelMatrix) else np.asarray(matrix, np.int64)
    T = data.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    perms = np.empty((B + 1, T), dtype=np.intp)
    perms[0] = np.arange(T)
    perms[1:] = rng.permuted(np.tile(np.arange(T), (B, 1)), axis=1)
    stats = _global_stats(data, perms, list(deltas))
    u = rng.random() if randomized else None
    out = {}
    for d, vals in stats.items():
        obs, null = vals[0], vals[1:]
        tol = _TIE_RTOL * max(abs(obs), 1.0)
        n_gt = int(np.count_nonzero(null > obs + tol))
        n_eq = int(np.count_nonzero(np.abs(null - obs) <= tol))
        if randomized:
            p = (n_gt + u * (n_eq + 1)) / (B + 1)
        else:
            p = (1 + n_gt + n_eq) / (B + 1)
        out[d] = (float(obs), float(p))
    return out


def global_permutation_test(matrix, delta=1.0, B=1000, alpha=0.1, seed=0, randomized=False):
    """Permutation test of "no change in any channel" with the global CUSUM.

    Time points are permuted jointly across channels. By default the p-value is
    ``(1 + #{permuted >= observed}) / (B + 1)``; ``randomized=True`` splits ties
    with an auxiliary uniform so the size is exactly ``alpha``.
    """
    obs, p = global_permutation_pvalues(matrix, [delta], B, seed, randomized)[delta]
    return GlobalResult(obs, float(delta), p, p <= alpha, B)


def evaluate_metrics(results, truth):
    """Average P(gCD), TPR and FDR over replicate results sharing one truth.

    ``TPR = mean(TP) / max(1, n_cp)`` and ``FDR = mean(FP / max(1, |R|))``.
    Every rate ``r`` gets the standard error ``sqrt(r (1 - r) / replicates)``.
    """
    results = list(results)
    n = len(results)
    if n == 0:
        raise ParameterError("no replicate results to evaluate")
    gcd = np.array([r.global_reject for r in results], dtype=float)
    p_gcd = float(gcd.mean())
    se = {"p_gcd": float(np.sqrt(p_gcd * (1 - p_gcd) / n))}
    if all(isinstance(r, GlobalResult) for r in results):
        return Metrics(p_gcd, None, None, n, se)
    n_cp = len(truth.changed_channels)
    tp = np.empty(n)
    fdp = np.empty(n)
    for k, r in enumerate(results):
        rej = r.rejections.rejected
        hits = len(rej & truth.changed_channels)
        tp[k] = hits
        fdp[k] = (len(rej) - hits) / max(1, len(rej))
    tpr = float(tp.mean() / max(1, n_cp))
    fdr = float(fdp.mean())
    se["tpr"] = float(np.sqrt(tpr * (1 - tpr) / n))
    se["fdr"] = float(np.sqrt(fdr * (1 - fdr) / n))
    return Metrics(p_gcd, tpr, fdr, n, se)


def location_histogram(result):
    """Sorted ``(location, number of rejected channels estimating it)`` pairs."""
    return sorted(Counter(result.changepoint_estimates.values()).items())
