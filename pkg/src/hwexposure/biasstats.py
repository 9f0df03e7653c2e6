"""Classical measurement-error analysis and rank-sum comparison.

The surrogate exposure Z is the home-based value, the reference X is the
home-work blend, and the error E = Z - X. Moments are worker-weighted and
population-normalized (divide by the summed weight, not weight - 1): the
worker table is a census of the modeled population, not a sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DegenerateVarianceError, DomainError, EmptyPopulationError


@dataclass(frozen=True)
class ErrorMoments:
    """Weighted second moments of the classical error model."""

    sigma2: float  # variance of the reference X
    phi: float     # covariance of (X, E)
    omega2: float  # variance of the error E


@dataclass(frozen=True)
class RankSumResult:
    u: float       # rank-sum statistic of the first sample
    z: float       # tie-corrected normal score with continuity correction
    p_value: float  # two-sided


def error_moments(surrogate: Sequence[float], reference: Sequence[float],
                  weights: Sequence[float]) -> ErrorMoments:
    """Weighted moments of X and E = Z - X over paired observations.

    Two-pass central moments over geoid-sorted inputs keep the computation
    deterministic and Cauchy-Schwarz-consistent.
    """
    z = np.asarray(surrogate, dtype=np.float64)
    x = np.asarray(reference, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not (z.shape == x.shape == w.shape):
        raise ContractError("surrogate, reference and weights must align")
    keep = w > 0
    z, x, w = z[keep], x[keep], w[keep]
    total = float(np.sum(w))
    if z.size == 0 or total <= 0.0:
        raise EmptyPopulationError("total weight is zero")
    e = z - x
    mean_x = float(np.sum(w * x)) / total
    mean_e = float(np.sum(w * e)) / total
    dx = x - mean_x
    de = e - mean_e
    sigma2 = float(np.sum(w * dx * dx)) / total
    omega2 = float(np.sum(w * de * de)) / total
    phi = float(np.sum(w * dx * de)) / total
    if sigma2 == 0.0:
        raise DegenerateVarianceError("reference exposure has zero variance")
    return ErrorMoments(sigma2=sigma2, phi=phi, omega2=max(omega2, 0.0))


def bias_factor(moments: ErrorMoments) -> float:
    """Multiplier on regression slopes when the surrogate replaces the reference.

    (sigma2 + phi) / (sigma2 + 2 phi + omega2); the denominator is the
    variance of the surrogate and must be positive.
    """
    denominator = moments.sigma2 + 2.0 * moments.phi + moments.omega2
    if denominator <= 0.0:
        raise DomainError(f"surrogate variance must be positive, got {denominator}")
    return (moments.sigma2 + moments.phi) / denominator


# The normal approximation is poor for very small samples (it can be off by
# more than 0.1 from the permutation p when one sample has a single element),
# so "auto" switches to exact enumeration for small untied samples, the same
# policy R's wilcox.test uses. Production-scale inputs always take the normal
# path.
_EXACT_MAX_N = 25


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float],
                      method: str = "auto") -> RankSumResult:
    """Rank-sum test of two samples.

    Mid-ranks for ties and a tie-corrected normal z with 0.5 continuity
    correction. ``method`` is "auto" (exact permutation p for untied samples
    with at most 25 pooled values, normal tail otherwise), "normal", or
    "exact" (untied samples only).
    """
    return wilcoxon_rank_sum_grouped(a, [1] * len(a), b, [1] * len(b), method=method)


def wilcoxon_rank_sum_grouped(
    values_a: Sequence[float],
    counts_a: Sequence[int],
    values_b: Sequence[float],
    counts_b: Sequence[int],
    method: str = "auto",
) -> RankSumResult:
    """Rank-sum test on frequency-weighted samples.

    Equivalent to expanding each value ``count`` times; rank sums use exact
    integer arithmetic, so U_a + U_b = n_a * n_b holds exactly.
    """
    if method not in ("auto", "normal", "exact"):
        raise ContractError(f"unknown method {method!r}")
    tally: dict[float, list[int]] = {}
    for values, counts, side in ((values_a, counts_a, 0), (values_b, counts_b, 1)):
        for value, count in zip(values, counts):
            count = int(count)
            if count < 0:
                raise ContractError(f"negative count {count}")
            if count == 0:
                continue
            tally.setdefault(float(value), [0, 0])[side] += count
    n_a = sum(ca for ca, _ in tally.values())
    n_b = sum(cb for _, cb in tally.values())
    if n_a == 0 or n_b == 0:
        raise ContractError("both samples must be non-empty")
    cum = 0
    two_rank_sum_a = 0  # 2 * rank sum of sample a, exact integer
    tie_cubes = 0
    for value in sorted(tally):
        ca, cb = tally[value]
        t = ca + cb
        two_rank_sum_a += ca * (2 * cum + t + 1)
        tie_cubes += t * t * t - t
        cum += t
    n = n_a + n_b
    u = (two_rank_sum_a - n_a * (n_a + 1)) / 2.0
    mean_u = n_a * n_b / 2.0
    var_u = (n_a * n_b / 12.0) * ((n + 1) - tie_cubes / (n * (n - 1)))
    if var_u <= 0.0:
        return RankSumResult(u=u, z=0.0, p_value=1.0)
    deviation = u - mean_u
    if deviation > 0.0:
        z = (deviation - 0.5) / math.sqrt(var_u)
    elif deviation < 0.0:
        z = (deviation + 0.5) / math.sqrt(var_u)
    else:
        z = 0.0
    untied = all(ca + cb == 1 for ca, cb in tally.values())
    if method == "exact" or (method == "auto" and untied and n <= _EXACT_MAX_N):
        if not untied:
            raise ContractError("exact method requires untied samples")
        p = _exact_two_sided_p(n_a, n_b, u)
    else:
        p = min(math.erfc(abs(z) / math.sqrt(2.0)), 1.0)
    return RankSumResult(u=u, z=z, p_value=p)


def _exact_two_sided_p(n_a: int, n_b: int, u: float) -> float:
    """Permutation p for untied samples: P(|U - mean| >= |u - mean|).

    ``counts[v]`` enumerates rank subsets of size n_a with statistic v, built
    by pooling one rank at a time (largest rank goes to a: adds n_b wins).
    """
    counts = _u_counts(n_a, n_b)
    # work with 2U as integers: |2u - n_a*n_b| is exact
    observed = abs(int(round(2 * u)) - n_a * n_b)
    hits = sum(c for v, c in enumerate(counts) if abs(2 * v - n_a * n_b) >= observed)
    return hits / math.comb(n_a + n_b, n_a)


def _u_counts(n_a: int, n_b: int) -> list[int]:
    counts = {(0, 0): [1]}  # (m, n) -> count of subsets by U value
    for m in range(n_a + 1):
        for n in range(n_b + 1):
            if (m, n) in counts:
                continue
            table = [0] * (m * n + 1)
            if m > 0:
                for v, c in enumerate(counts[(m - 1, n)]):
                    table[v + n] += c
            if n > 0:
                for v, c in enumerate(counts[(m, n - 1)]):
                    table[v] += c
            counts[(m, n)] = table
    return counts[(n_a, n_b)]
