"""Order statistics and concentration quantities for bounded losses.

The quantile and truncated mean act on empirical loss samples: the
beta-quantile is the smallest order statistic whose empirical CDF reaches
beta, and the beta-truncated mean is the partial-sum optimum
min { sum_i a_i x_i : 0 <= a_i <= 1/n, sum_i a_i = beta }, i.e. the
contribution of the leftmost beta probability mass.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptyInputError, ParameterError

# Absorbs floating error in beta * n before taking floor/ceil; the truncated
# mean is continuous at integer beta * n, so the shift cannot change values.
_INDEX_TOL = 1e-9


def _as_sample(values) -> np.ndarray:
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise EmptyInputError("empty loss sample")
    return x


def beta_quantile(values, beta: float) -> float:
    """Smallest value c with empirical Pr(X <= c) >= beta.

    Equals the order statistic x_(k) with k = ceil(beta * n).
    """
    x = _as_sample(values)
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"beta must be in (0, 1], got {beta}")
    n = x.size
    k = int(math.ceil(beta * n - _INDEX_TOL))
    k = min(max(k, 1), n)
    return float(np.sort(x)[k - 1])


def beta_truncated_mean(values, beta: float) -> float:
    """Mean contribution of the smallest beta fraction of the sample.

    With j = floor(beta * n) and ascending order statistics x_(1..n):
    (1/n) * sum_{i<=j} x_(i) + (beta - j/n) * x_(j+1), the second term absent
    when j = n.
    """
    x = _as_sample(values)
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must be in [0, 1], got {beta}")
    n = x.size
    j = int(math.floor(beta * n + _INDEX_TOL))
    j = min(max(j, 0), n)
    x = np.sort(x)
    total = float(x[:j].sum()) / n
    if j < n:
        total += (beta - j / n) * float(x[j])
    return total


def bhc_lambda(K: int, n: int, delta: float) -> float:
    """Multinomial cell-frequency deviation radius sqrt((2K ln2 + 2 ln(1/delta)) / n)."""
    if K < 1:
        raise ParameterError("K must be at least 1")
    if n < 1:
        raise ParameterError("n must be at least 1")
    if not 0.0 < delta <= 1.0:
        raise ParameterError(f"delta must be in (0, 1], got {delta}")
    return math.sqrt((2.0 * K * math.log(2.0) + 2.0 * math.log(1.0 / delta)) / n)


def multinomial_deviation(counts, probs) -> float:
    """L1 deviation sum_i |counts_i / n - probs_i| between cell frequencies
    and cell probabilities."""
    c = np.asarray(counts, dtype=float).ravel()
    p = np.asarray(probs, dtype=float).ravel()
    if c.size != p.size:
        raise ParameterError("counts and probs must have the same length")
    if (c < 0).any():
        raise ParameterError("counts must be non-negative")
    n = c.sum()
    if n < 1:
        raise ParameterError("counts must sum to at least 1")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ParameterError("probs must sum to 1 within 1e-9")
    return float(np.abs(c / n - p).sum())
