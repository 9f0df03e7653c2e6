"""Between-group disparity and inequality metrics: extreme-group gaps,
composition-ranked exposure curves, concentration-decile population shares,
the Atkinson index on inverse concentrations, state-normalized disparities,
and policy-threshold exceedance shares with their coefficient of variation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DomainError,
    EmptyPopulationError,
    InsufficientGroupsError,
    InsufficientTractsError,
)
from .exposure import ExposureRecord

# (geoid, group fraction, group count, concentration) for composition curves;
# (geoid, group count, total count, concentration) for concentration deciles.
CompositionTract = tuple[str, float, float, float]
CountTract = tuple[str, float, float, float]


@dataclass(frozen=True)
class GapResult:
    """Most- vs least-exposed group within one characteristic."""

    characteristic: str
    most_exposed: str
    least_exposed: str
    absolute_diff: float
    percent_diff: float
    ratio: float


@dataclass(frozen=True)
class PercentileBin:
    index: int  # 1-based bin position
    n_tracts: int
    exposure: float  # NaN when the bin holds no group population


@dataclass(frozen=True)
class PercentileBinCurve:
    group: str
    locus: str
    bins: tuple[PercentileBin, ...]


@dataclass(frozen=True)
class DecileShares:
    group: str
    locus: str
    bin_means: tuple[float, ...]
    difference: float  # top decile mean fraction minus bottom decile


def extreme_group_gap(records: Sequence[ExposureRecord], national_mean: float) -> GapResult:
    """Gap between the highest- and lowest-mean groups of one characteristic.

    Ties are broken by ascending group label. percent_diff is expressed as a
    percentage of the supplied national mean.
    """
    if len(records) < 2:
        raise InsufficientGroupsError(
            f"need >= 2 groups, got {len(records)}"
        )
    characteristics = {r.characteristic for r in records}
    if len(characteristics) != 1:
        raise ContractError(f"records span multiple characteristics: {sorted(characteristics)}")
    if national_mean <= 0.0:
        raise DomainError(f"national mean must be positive, got {national_mean}")
    ordered = sorted(records, key=lambda r: r.group)
    most = max(ordered, key=lambda r: r.mean)
    least = min(ordered, key=lambda r: r.mean)
    diff = most.mean - least.mean
    return GapResult(
        characteristic=characteristics.pop(),
        most_exposed=most.group,
        least_exposed=least.group,
        absolute_diff=diff,
        percent_diff=100.0 * diff / national_mean,
        ratio=most.mean / least.mean if least.mean > 0.0 else math.inf,
    )


def _bin_sizes(n_items: int, n_bins: int) -> list[int]:
    # As equal as possible; the remainder goes to the leading bins.
    base, extra = divmod(n_items, n_bins)
    return [base + 1 if i < extra else base for i in range(n_bins)]


def percentile_bin_curve(
    tracts: Sequence[CompositionTract],
    n_bins: int,
    group: str = "all",
    locus: str = "H",
) -> PercentileBinCurve:
    """Group-weighted exposure per composition-ranked tract bin.

    Tracts are sorted by the group's population fraction (ties by geoid) and
    split into ``n_bins`` contiguous bins; each bin's exposure is the
    group-count-weighted mean concentration over its tracts.
    """
    if n_bins < 2:
        raise ContractError(f"n_bins must be >= 2, got {n_bins}")
    if len(tracts) < n_bins:
        raise InsufficientTractsError(
            f"need >= {n_bins} tracts for {n_bins} bins, got {len(tracts)}"
        )
    ordered = sorted(tracts, key=lambda t: (t[1], t[0]))
    bins = []
    start = 0
    for index, size in enumerate(_bin_sizes(len(ordered), n_bins), start=1):
        chunk = ordered[start:start + size]
        start += size
        counts = np.array([t[2] for t in chunk], dtype=np.float64)
        concs = np.array([t[3] for t in chunk], dtype=np.float64)
        total = float(np.sum(counts))
        exposure = float(np.sum(concs * counts)) / total if total > 0.0 else math.nan
        bins.append(PercentileBin(index=index, n_tracts=size, exposure=exposure))
    return PercentileBinCurve(group=group, locus=locus, bins=tuple(bins))


def decile_contrast(curve: PercentileBinCurve) -> float:
    """Top-decile exposure minus bottom-decile exposure; needs exactly 10 bins."""
    if len(curve.bins) != 10:
        raise ContractError(f"decile contrast needs 10 bins, got {len(curve.bins)}")
    return curve.bins[-1].exposure - curve.bins[0].exposure


def population_share_by_concentration_decile(
    tracts: Sequence[CountTract],
    group: str = "all",
    locus: str = "H",
) -> DecileShares:
    """Mean group fraction per concentration-ranked tract decile.

    Tracts are ranked by concentration (ties by geoid) into 10 bins; each
    bin's value is the unweighted mean of per-tract group fractions. Also
    returns the top-minus-bottom decile difference.
    """
    if len(tracts) < 10:
        raise InsufficientTractsError(f"need >= 10 tracts, got {len(tracts)}")
    for geoid, _, total, _ in tracts:
        if total <= 0:
            raise ValueError(f"tract {geoid}: total count must be positive")
    ordered = sorted(tracts, key=lambda t: (t[3], t[0]))
    means = []
    start = 0
    for size in _bin_sizes(len(ordered), 10):
        chunk = ordered[start:start + size]
        start += size
        fracs = np.array([t[1] / t[2] for t in chunk], dtype=np.float64)
        means.append(float(np.mean(fracs)))
    return DecileShares(
        group=group,
        locus=locus,
        bin_means=tuple(means),
        difference=means[-1] - means[0],
    )


def atkinson(shares: Sequence[float], values: Sequence[float], epsilon: float) -> float:
    """Between-group Atkinson index with aversion parameter ``epsilon``.

    ``shares`` are population fractions (positive, summing to 1); ``values``
    are positive group means. epsilon = 1 uses the geometric-mean limit.
    """
    f = np.asarray(shares, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if f.size == 0 or f.size != y.size:
        raise DomainError(f"need matching non-empty shares/values, got {f.size}/{y.size}")
    if (f <= 0.0).any():
        raise DomainError("population shares must be positive")
    if abs(float(np.sum(f)) - 1.0) > 1e-9:
        raise DomainError(f"population shares must sum to 1, got {float(np.sum(f))}")
    if (y <= 0.0).any():
        raise DomainError("group values must be positive")
    if epsilon < 0.0:
        raise DomainError(f"aversion parameter must be >= 0, got {epsilon}")
    if epsilon == 0.0:
        return 0.0  # reduces to 1 - sum(f*y)/ybar, identically zero
    f = f / float(np.sum(f))
    ybar = float(np.sum(f * y))
    ratio = y / ybar
    if epsilon == 1.0:
        ai = 1.0 - math.exp(float(np.sum(f * np.log(ratio))))
    else:
        power = 1.0 - epsilon
        ai = 1.0 - float(np.sum(f * ratio ** power)) ** (1.0 / power)
    return max(ai, 0.0)


@dataclass(frozen=True)
class AtkinsonResult:
    year: int
    characteristic: str
    locus: str
    stratum: str
    epsilon: float
    value: float


def atkinson_pipeline(records: Iterable[ExposureRecord],
                      epsilons: Sequence[float]) -> list[AtkinsonResult]:
    """Atkinson index on inverse group-mean concentrations per aversion value.

    Records are grouped by (year, characteristic, locus, stratum); the total-
    population group is ignored. Inverting the concentrations makes larger
    index values mean worse inequality, matching the income-style convention.
    """
    grouped: dict[tuple[int, str, str, str], list[ExposureRecord]] = {}
    for record in records:
        if record.characteristic == "all":
            continue
        key = (record.year, record.characteristic, record.locus, record.stratum)
        grouped.setdefault(key, []).append(record)
    results = []
    for key in sorted(grouped):
        members = sorted(grouped[key], key=lambda r: r.group)
        total = sum(r.weight for r in members)
        shares = [r.weight / total for r in members]
        for r in members:
            if r.mean <= 0.0:
                raise DomainError(
                    f"group {r.group_key} has non-positive mean {r.mean}; "
                    "cannot invert concentrations"
                )
        inverse = [1.0 / r.mean for r in members]
        year, characteristic, locus, stratum = key
        for eps in epsilons:
            results.append(AtkinsonResult(
                year=year,
                characteristic=characteristic,
                locus=locus,
                stratum=stratum,
                epsilon=eps,
                value=atkinson(shares, inverse, eps),
            ))
    return results


def state_disparity(group_mean: float, state_mean: float, national_mean: float) -> float:
    """Group-minus-state exposure gap, normalized by the national mean."""
    if national_mean <= 0.0:
        raise DomainError(f"national mean must be positive, got {national_mean}")
    return (group_mean - state_mean) / national_mean


def threshold_share(values: Sequence[float], weights: Sequence[float],
                    threshold: float) -> float:
    """Percent of the weighted population with value strictly above threshold."""
    vals = np.asarray(values, dtype=np.float64)
    wts = np.asarray(weights, dtype=np.float64)
    total = float(np.sum(wts))
    if vals.size == 0 or total <= 0.0:
        raise EmptyPopulationError("total weight is zero")
    return 100.0 * float(np.sum(wts[vals > threshold])) / total


def cov_of_shares(qs: Sequence[float]) -> float:
    """Coefficient of variation of per-group exceedance shares.

    Uses the population variance (divide by the group count): the groups are
    the full population of interest, not a sample.
    """
    q = np.asarray(qs, dtype=np.float64)
    if q.size < 2:
        raise InsufficientGroupsError(f"need >= 2 groups, got {q.size}")
    mean = float(np.mean(q))
    if mean <= 0.0:
        raise DomainError("mean exceedance share is zero; CoV undefined")
    return math.sqrt(float(np.var(q))) / mean
