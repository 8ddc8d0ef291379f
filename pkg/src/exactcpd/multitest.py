"""FDR-controlling step-up procedures: BH, adaptive BH and Storey-Taylor-Siegmund."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = ["PValueSet", "RejectionSet", "bh", "abh", "sts", "hb_null_count", "FDR_METHODS",
           "apply_fdr"]


@dataclass(frozen=True)
class PValueSet:
    p: np.ndarray
    channel_ids: tuple = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1:
            raise ParameterError("p-values must form a vector")
        if p.size and (np.any(p <= 0) or np.any(p > 1) or np.any(np.isnan(p))):
            raise ParameterError("p-values must lie in (0, 1]")
        ids = self.channel_ids
        ids = tuple(range(p.size)) if ids is None else tuple(ids)
        if len(ids) != p.size:
            raise ParameterError("channel_ids and p have different lengths")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "channel_ids", ids)

    def __len__(self):
        return self.p.size


@dataclass(frozen=True)
class RejectionSet:
    """Indices (0-based, into the p-value vector) of rejected hypotheses."""

    rejected: frozenset
    method: str
    alpha: float
    m0_estimate: float | None = None

    def __len__(self):
        return len(self.rejected)

    def mask(self, m):
        out = np.zeros(m, dtype=bool)
        out[list(self.rejected)] = True
        return out


def _as_array(pvals):
    return pvals.p if isinstance(pvals, PValueSet) else PValueSet(pvals).p


def _step_up(p, thresholds):
    """Reject the ``k`` smallest p-values, ``k = max{i : p_(i) <= thresholds[i-1]}``."""
    m = p.size
    if m == 0:
        return frozenset()
    order = np.argsort(p, kind="stable")
    below = np.flatnonzero(p[order] <= thresholds)
    if below.size == 0:
        return frozenset()
    cut = p[order][below[-1]]
    # ties with the last rejected p-value are rejected too
    return frozenset(np.flatnonzero(p <= cut).tolist())


def bh(pvals, alpha):
    """Benjamini-Hochberg step-up at level ``alpha``."""
    p = _as_array(pvals)
    m = p.size
    return RejectionSet(_step_up(p, alpha * np.arange(1, m + 1) / max(m, 1)), "bh", alpha)


def hb_null_count(p):
    """Hochberg-Benjamini lowest-slope estimate of the number of true nulls.

    With slopes ``s_i = (1 - p_(i)) / (m + 1 - i)``, take the first ``i >= 2``
    with ``s_i < s_{i-1}`` and return ``min(m, ceil(1/s_i) + 1)``; ``m`` when
    the slopes never decrease.
    """
    p = np.sort(np.asarray(p, dtype=float))
    m = p.size
    if m == 0:
        return 0
    slopes = (1.0 - p) / (m + 1 - np.arange(1, m + 1))
    drop = np.flatnonzero(slopes[1:] < slopes[:-1])
    if drop.size == 0:
        return m
    s = slopes[drop[0] + 1]
    if s <= 0:
        return m
    return int(min(m, max(1, math.ceil(1.0 / s) + 1)))


def abh(pvals, alpha):
    """Adaptive BH: BH at level ``alpha * m / m0_hat`` with the lowest-slope ``m0_hat``."""
    p = _as_array(pvals)
    m = p.size
    m0 = hb_null_count(p)
    if m == 0:
        return RejectionSet(frozenset(), "abh", alpha, 0)
    level = alpha * m / m0
    rej = _step_up(p, level * np.arange(1, m + 1) / m)
    return RejectionSet(rej, "abh", alpha, m0)


def sts(pvals, alpha, lam=0.5):
    """Storey-Taylor-Siegmund adaptive step-up.

    ``m0_hat = (#{p > lam} + 1) / (1 - lam)``; thresholds ``i * alpha / m0_hat``;
    p-values above ``lam`` are never rejected.
    """
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"lambda must lie in (0, 1), got {lam}")
    p = _as_array(pvals)
    m = p.size
    m0 = (np.count_nonzero(p > lam) + 1) / (1.0 - lam)
    rej = _step_up(p, alpha * np.arange(1, m + 1) / m0)
    rej = frozenset(j for j in rej if p[j] <= lam)
    return RejectionSet(rej, "sts", alpha, float(m0))


FDR_METHODS = {"bh": bh, "abh": abh, "sts": sts}


def apply_fdr(method, pvals, alpha):
    try:
        fn = FDR_METHODS[method.lower()]
    except KeyError:
        raise ParameterError(f"unknown FDR method {method!r}") from None
    return fn(pvals, alpha)
