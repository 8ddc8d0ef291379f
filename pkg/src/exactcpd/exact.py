"""Monte Carlo calibration of exact conditional tests.

Given ``S_T`` the null law of any statistic is free of the nuisance rate, so a
single Monte Carlo sample per ``(kind, T, S_T)`` calibrates every series with
that total. Null draws are generated in fixed-size chunks, each from its own
``SeedSequence`` child, so a calibration depends only on its key and never on
the order in which calibrations are requested or on worker count.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, KindError
from .pmf import sample_binary_batch, sample_counts_batch
from .statistics import (
    BINARY,
    COUNT,
    KINDS,
    ChannelSeries,
    CusumConfig,
    cusum_batch,
    lr_batch,
    minp_batch,
)

__all__ = [
    "DEFAULT_MC_COUNT",
    "MIN_MC_COUNT",
    "CACHE_FORMAT_VERSION",
    "NullCalibration",
    "TestOutcome",
    "CalibrationCache",
    "canonical_statistic",
    "default_cache",
    "calibrate_null",
    "calibrate_many",
    "statistic_batch",
    "exact_test",
    "minp_multiplicity_test",
    "exact_pvalues",
]

DEFAULT_MC_COUNT = 50_000
MIN_MC_COUNT = 1000
CACHE_FORMAT_VERSION = 1
CACHE_ENV = "EXACTCPD_CACHE_DIR"
_CHUNK = 10_000
_KIND_CODE = {BINARY: 1, COUNT: 2}
# ties between an observed statistic and a null draw are decided with this tolerance
_TIE_RTOL = 1e-10

_ALIASES = {
    "lr": "lr",
    "minp": "minp",
    "minp_min": "minp",
    "cu05": "cusum(0.5)",
    "cu.5": "cusum(0.5)",
    "cu1": "cusum(1)",
}


def canonical_statistic(label):
    """Normalize a statistic label to ``lr``, ``minp`` or ``cusum(<delta>)``.

    Accepts the short names ``cu05``/``cu.5``/``cu1`` and ``cusum:<delta>``.
    """
    key = str(label).strip().lower()
    if key in _ALIASES:
        return _ALIASES[key]
    for prefix in ("cusum(", "cusum:"):
        if key.startswith(prefix):
            body = key[len(prefix) :].rstrip(")")
            try:
                delta = float(body)
            except ValueError:
                break
            CusumConfig(delta)
            return f"cusum({delta:g})"
    raise ConfigurationError(f"unknown statistic {label!r}")


def _cusum_delta(stat):
    return float(stat[len("cusum(") : -1])


def statistic_batch(stat, kind, X, return_index=False):
    """Evaluate a (canonical) statistic on every row of ``X``.

    For ``minp`` the value is the smallest conditional p-value and rows must
    share one total; for the others larger values are more extreme.
    """
    if stat == "lr":
        return lr_batch(X, kind, return_argmax=return_index)
    if stat == "minp":
        return minp_batch(X, kind, return_argmin=return_index)
    return cusum_batch(X, _cusum_delta(stat), return_argmax=return_index)


@dataclass(frozen=True)
class NullCalibration:
    """Sorted Monte Carlo sample of a statistic under the conditional null."""

    statistic_id: str
    kind: str
    T: int
    s_total: int
    samples: np.ndarray = field(repr=False)
    mc_count: int
    seed: int

    def quantile(self, q):
        """Empirical quantile using the pure order statistic at rank ``floor(q*n)``."""
        k = min(int(np.floor(q * self.mc_count)), self.mc_count - 1)
        return float(self.samples[max(k, 0)])

    def upper_pvalue(self, observed):
        """``(1 + #{null >= observed}) / (n + 1)``, vectorized over ``observed``."""
        obs = np.asarray(observed, dtype=float)
        cut = obs - _TIE_RTOL * np.maximum(np.abs(obs), 1.0)
        n_ge = self.mc_count - np.searchsorted(self.samples, cut, side="left")
        return (1.0 + n_ge) / (self.mc_count + 1.0)

    def lower_pvalue(self, observed):
        """``(1 + #{null <= observed}) / (n + 1)``, vectorized over ``observed``."""
        obs = np.asarray(observed, dtype=float)
        cut = obs + _TIE_RTOL * np.maximum(np.abs(obs), 1.0)
        n_le = np.searchsorted(self.samples, cut, side="right")
        return (1.0 + n_le) / (self.mc_count + 1.0)


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    p_value: float
    reject: bool
    alpha: float
    changepoint_estimate: int
    calibration: object = field(default=None, repr=False)

    __test__ = False


class CalibrationCache:
    """Thread-safe store of calibrations, optionally persisted to a directory.

    On disk each entry is an ``.npz`` archive holding ``samples`` as
    little-endian float64 and ``meta``, a JSON string with the format version
    and the full key. Files live under ``<directory>/v<version>/``.
    """

    def __init__(self, directory=None):
        self._mem = {}
        self._lock = threading.Lock()
        self.directory = Path(directory) if directory else None

    def __len__(self):
        return len(self._mem)

    def clear(self):
        with self._lock:
            self._mem.clear()

    def _path(self, key):
        stat, kind, T, s, n, seed = key
        name = f"{stat}_{kind}_T{T}_S{s}_n{n}_seed{seed}.npz"
        return self.directory / f"v{CACHE_FORMAT_VERSION}" / name

    def get(self, key):
        hit = self._mem.get(key)
        if hit is not None or self.directory is None:
            return hit
        path = self._path(key)
        if not path.exists():
            return None
        cal = load_calibration(path)
        if cal is not None:
            self.put(key, cal, persist=False)
        return cal

    def put(self, key, cal, persist=True):
        with self._lock:
            cal = self._mem.setdefault(key, cal)
        if persist and self.directory is not None:
            path = self._path(key)
            if not path.exists():
                save_calibration(cal, path)
        return cal


def save_calibration(cal, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": CACHE_FORMAT_VERSION,
        "statistic_id": cal.statistic_id,
        "kind": cal.kind,
        "T": cal.T,
        "s_total": cal.s_total,
        "mc_count": cal.mc_count,
        "seed": cal.seed,
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        np.savez(fh, samples=cal.samples.astype("<f8"), meta=np.array(json.dumps(meta)))
    os.replace(tmp, path)


def load_calibration(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != CACHE_FORMAT_VERSION:
            return None
        samples = z["samples"].astype(float)
    samples.setflags(write=False)
    return NullCalibration(
        meta["statistic_id"], meta["kind"], meta["T"], meta["s_total"],
        samples, meta["mc_count"], meta["seed"],
    )


_default_cache = None


def default_cache():
    """Process-wide cache; persisted when ``EXACTCPD_CACHE_DIR`` is set."""
    global _default_cache
    if _default_cache is None:
        _default_cache = CalibrationCache(os.environ.get(CACHE_ENV) or None)
    return _default_cache


def _draw_chunks(kind, T, s_total, mc_count, seed):
    entropy = [int(seed), _KIND_CODE[kind], int(T), int(s_total)]
    sampler = sample_binary_batch if kind == BINARY else sample_counts_batch
    for k, start in enumerate(range(0, mc_count, _CHUNK)):
        size = min(_CHUNK, mc_count - start)
        rng = np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(k,)))
        yield sampler(T, s_total, size, rng)


def _check_request(kind, T, s_total, mc_count):
    if kind not in KINDS:
        raise KindError(f"unknown kind {kind!r}")
    if mc_count < MIN_MC_COUNT:
        raise ConfigurationError(
            f"mc_count={mc_count} is too coarse; need at least {MIN_MC_COUNT}"
        )
    if T < 2 or s_total < 0 or (kind == BINARY and s_total > T):
        raise ConfigurationError(f"invalid (T, s_total) = ({T}, {s_total}) for {kind}")


def calibrate_many(statistic_ids, kind, T, s_total, mc_count=DEFAULT_MC_COUNT,
                   seed=0, cache=None):
    """Calibrate several statistics from one shared set of null draws.

    Returns a dict mapping canonical statistic ids to :class:`NullCalibration`.
    """
    cache = default_cache() if cache is None else cache
    stats = [canonical_statistic(s) for s in statistic_ids]
    _check_request(kind, T, s_total, mc_count)
    out, missing = {}, []
    for stat in stats:
        key = (stat, kind, T, s_total, mc_count, seed)
        hit = cache.get(key) if cache is not False else None
        if hit is None:
            missing.append(stat)
        else:
            out[stat] = hit
    if missing:
        parts = {stat: [] for stat in missing}
        for X in _draw_chunks(kind, T, s_total, mc_count, seed):
            for stat in missing:
                parts[stat].append(statistic_batch(stat, kind, X))
        for stat in missing:
            samples = np.sort(np.concatenate(parts[stat]))
            samples.setflags(write=False)
            cal = NullCalibration(stat, kind, T, s_total, samples, mc_count, seed)
            if cache is not False:
                cal = cache.put((stat, kind, T, s_total, mc_count, seed), cal)
            out[stat] = cal
    return out


def calibrate_null(statistic_id, kind, T, s_total, mc_count=DEFAULT_MC_COUNT,
                   seed=0, cache=None):
    """Monte Carlo null sample of a statistic conditional on ``S_T = s_total``.

    Parameters
    ----------
    statistic_id : str
        ``lr``, ``minp`` (the minimum conditional p-value) or ``cusum(<delta>)``.
    kind : {"binary", "count"}
    T, s_total : int
    mc_count : int
        Number of null draws, at least 1000.
    seed : int
    cache : CalibrationCache, False or None
        ``None`` uses :func:`default_cache`; ``False`` disables caching.
    """
    stat = canonical_statistic(statistic_id)
    return calibrate_many([stat], kind, T, s_total, mc_count, seed, cache)[stat]


def exact_test(series, statistic_id, alpha=0.1, mc_count=DEFAULT_MC_COUNT, seed=0,
               cache=None):
    """Exact conditional test based on the LR or a CUSUM statistic.

    The Monte Carlo p-value is ``(1 + #{null >= observed}) / (mc_count + 1)`` and
    the test rejects when it is at most ``alpha``.
    """
    stat = canonical_statistic(statistic_id)
    if stat == "minp":
        return minp_multiplicity_test(series, alpha, mc_count, seed, cache)
    value, arg = statistic_batch(stat, series.kind, series.values, return_index=True)
    value, arg = float(value[0]), int(arg[0])
    if series.is_degenerate():
        return TestOutcome(value, 1.0, False, alpha, arg, None)
    cal = calibrate_null(stat, series.kind, series.T, series.total, mc_count, seed, cache)
    p = float(cal.upper_pvalue(value))
    return TestOutcome(value, p, p <= alpha, alpha, arg, cal)


def minp_multiplicity_test(series, alpha=0.1, mc_count=DEFAULT_MC_COUNT, seed=0,
                           cache=None):
    """minP test: reject when the smallest split p-value is below its null α-quantile.

    ``statistic`` is the observed minimum p-value; ``p_value`` is the Monte
    Carlo p-value ``(1 + #{null <= observed}) / (mc_count + 1)``.
    """
    value, arg = minp_batch(series.values, series.kind, return_argmin=True)
    value, arg = float(value[0]), int(arg[0])
    if series.is_degenerate():
        return TestOutcome(value, 1.0, False, alpha, arg, None)
    cal = calibrate_null("minp", series.kind, series.T, series.total, mc_count, seed, cache)
    threshold = cal.quantile(alpha)
    p = float(cal.lower_pvalue(value))
    return TestOutcome(value, p, bool(value <= threshold), alpha, arg, cal)


def exact_pvalues(X, kind, statistic_id, mc_count=DEFAULT_MC_COUNT, seed=0, cache=None):
    """Exact Monte Carlo p-values and changepoint estimates for every row of ``X``.

    Rows are grouped by their total so each ``(T, S_T)`` is calibrated once.
    Degenerate rows get p-value 1 and estimate 1.

    Returns
    -------
    pvals : ndarray of float, shape (m,)
    estimates : ndarray of int, shape (m,)
    """
    stat = canonical_statistic(statistic_id)
    X = np.asarray(X, dtype=np.int64)
    m, T = X.shape
    totals = X.sum(axis=1)
    pvals = np.ones(m)
    est = np.ones(m, dtype=np.int64)
    for s in np.unique(totals):
        s = int(s)
        if s == 0 or (kind == BINARY and s == T):
            continue
        rows = np.flatnonzero(totals == s)
        val, arg = statistic_batch(stat, kind, X[rows], return_index=True)
        cal = calibrate_null(stat, kind, T, s, mc_count, seed, cache)
        pvals[rows] = cal.lower_pvalue(val) if stat == "minp" else cal.upper_pvalue(val)
        est[rows] = arg
    return pvals, est
