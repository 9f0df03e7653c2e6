"""Population-weighted exposure statistics: home (H), work (W), and the
time-weighted home-work blend (HW), plus the H-minus-HW misclassification
error, for the total population and demographic subgroups.

Reductions run over geoid-sorted numpy arrays with numpy's pairwise
summation, so results are deterministic for any thread count upstream.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyPopulationError
from .ingest import ODMatrix, WorkerTable, GroupSchema, RESIDENCE
from .zonal import TractSurface

logger = logging.getLogger(__name__)

LOCUS_HOME = "H"
LOCUS_WORK = "W"
LOCUS_BLEND = "HW"
ALL_STRATUM = "all"
ALL_GROUP = ("all", "all")  # (characteristic, group label) of the total population


@dataclass(frozen=True)
class HWWeights:
    """Time split between home and work tracts (fractions of the year)."""

    home_fraction: float = 0.794
    work_fraction: float = 0.206

    def __post_init__(self) -> None:
        if not (0.0 < self.home_fraction < 1.0 and 0.0 < self.work_fraction < 1.0):
            raise ValueError("fractions must lie strictly between 0 and 1")
        if self.home_fraction + self.work_fraction != 1.0:
            raise ValueError("fractions must sum to 1 exactly")


DEFAULT_HW_WEIGHTS = HWWeights()


@dataclass(frozen=True)
class ExposureRecord:
    """Weighted exposure summary for one (group, locus, stratum)."""

    year: int
    characteristic: str
    group: str
    locus: str
    stratum: str
    mean: float
    p10: float
    p90: float
    weight: float

    def __post_init__(self) -> None:
        if self.p10 > self.p90:
            raise ValueError(f"p10 {self.p10} > p90 {self.p90}")
        if self.weight < 0:
            raise ValueError(f"negative weight {self.weight}")

    @property
    def group_key(self) -> str:
        return format_group(self.characteristic, self.group)


@dataclass(frozen=True)
class ErrorRecord:
    """Misclassification error H - HW for one (group, stratum)."""

    year: int
    characteristic: str
    group: str
    stratum: str
    error: float
    percent_error: float

    @property
    def group_key(self) -> str:
        return format_group(self.characteristic, self.group)


def format_group(characteristic: str, group: str) -> str:
    return "all" if (characteristic, group) == ALL_GROUP else f"{characteristic}:{group}"


def hw_blend(h: float, w: float, weights: HWWeights = DEFAULT_HW_WEIGHTS) -> float:
    """Time-weighted blend of home and work concentrations.

    Computed as h + work_fraction * (w - h), which equals
    home_fraction * h + work_fraction * w because the fractions sum to 1,
    and keeps hw_blend(h, h) == h exact in floating point.
    """
    return h + weights.work_fraction * (w - h)


def population_weighted_mean(values: Mapping[str, float],
                             weights: Mapping[str, float]) -> float:
    """sum(value * weight) / sum(weight) over tracts present in ``values``.

    Weights keyed by tracts absent from ``values`` (excluded tracts) are
    dropped with a log entry. Raises EmptyPopulationError when no weight
    remains.
    """
    vals = []
    wts = []
    dropped = 0.0
    for geoid in sorted(weights):
        w = weights[geoid]
        if geoid in values:
            vals.append(values[geoid])
            wts.append(w)
        else:
            dropped += w
    if dropped:
        logger.warning("dropped %s worker-weight on tracts without concentrations", dropped)
    return _weighted_mean(np.asarray(vals, dtype=np.float64),
                          np.asarray(wts, dtype=np.float64))


def _weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    total = float(np.sum(weights))
    if len(values) == 0 or total <= 0.0:
        raise EmptyPopulationError("total weight is zero")
    mean = float(np.sum(values * weights)) / total
    # Mathematically mean lies in [min, max]; clamp away float drift.
    return min(max(mean, float(values.min())), float(values.max()))


def weighted_percentile(values: Sequence[float], weights: Sequence[float], p: float) -> float:
    """Left-continuous inverse CDF with frequency weights, no interpolation.

    Returns the smallest value whose cumulative weight reaches ``p`` times the
    total weight. Ties in value are irrelevant to the result; the stable sort
    keeps the caller's (geoid-ascending) order deterministic.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    vals = np.asarray(values, dtype=np.float64)
    wts = np.asarray(weights, dtype=np.float64)
    keep = wts > 0
    vals, wts = vals[keep], wts[keep]
    total = float(np.sum(wts))
    if vals.size == 0 or total <= 0.0:
        raise EmptyPopulationError("total weight is zero")
    order = np.argsort(vals, kind="stable")
    vals, wts = vals[order], wts[order]
    cum = np.cumsum(wts)
    idx = int(np.searchsorted(cum, p * total, side="left"))
    return float(vals[min(idx, vals.size - 1)])


@dataclass(frozen=True)
class AlignedTable:
    """Worker table joined against a tract surface, geoid-ascending."""

    geoids: tuple[str, ...]
    concentrations: np.ndarray
    totals: np.ndarray
    category_counts: dict[str, np.ndarray]
    dropped_weight: int


def align_table(surface: TractSurface, table: WorkerTable) -> AlignedTable:
    """Join table rows to surface concentrations, dropping unresolvable tracts."""
    geoids = []
    dropped = 0
    for geoid, row in table.rows.items():
        if geoid in surface.entries:
            geoids.append(geoid)
        else:
            dropped += row.total
    geoids.sort()
    conc = np.array([surface.entries[g] for g in geoids], dtype=np.float64)
    totals = np.array([table.rows[g].total for g in geoids], dtype=np.int64)
    codes = sorted({code for g in geoids for code in table.rows[g].counts})
    cats = {
        code: np.array([table.rows[g].counts.get(code, 0) for g in geoids], dtype=np.int64)
        for code in codes
    }
    if dropped:
        logger.debug(
            "%s table %d: dropped %d workers on tracts without concentrations",
            table.role, table.year, dropped,
        )
    return AlignedTable(tuple(geoids), conc, totals, cats, dropped)


@dataclass(frozen=True)
class ResolvedPairs:
    """OD matrix joined against a tract surface, (home, work)-ascending."""

    home_geoids: tuple[str, ...]
    home_values: np.ndarray
    work_values: np.ndarray
    totals: np.ndarray
    category_counts: dict[str, np.ndarray]
    dropped_weight: int


def resolve_pairs(surface: TractSurface, od: ODMatrix) -> ResolvedPairs:
    """Join OD pairs to surface concentrations, dropping unresolvable pairs."""
    keys = []
    dropped = 0
    for (home, work), entry in od.entries.items():
        if home in surface.entries and work in surface.entries:
            keys.append((home, work))
        else:
            dropped += entry.total
    keys.sort()
    home_vals = np.array([surface.entries[h] for h, _ in keys], dtype=np.float64)
    work_vals = np.array([surface.entries[w] for _, w in keys], dtype=np.float64)
    totals = np.array([od.entries[k].total for k in keys], dtype=np.int64)
    codes = sorted({code for k in keys for code in od.entries[k].counts})
    cats = {
        code: np.array([od.entries[k].counts.get(code, 0) for k in keys], dtype=np.int64)
        for code in codes
    }
    if dropped:
        logger.debug(
            "OD %d: dropped %d workers on pairs touching tracts without concentrations",
            od.year, dropped,
        )
    return ResolvedPairs(tuple(h for h, _ in keys), home_vals, work_vals, totals, cats, dropped)


def _stratum_masks(geoids: Sequence[str], classification: Mapping[str, str] | None,
                   strata: Sequence[str]) -> dict[str, np.ndarray]:
    masks = {}
    n = len(geoids)
    for stratum in strata:
        if stratum == ALL_STRATUM:
            masks[stratum] = np.ones(n, dtype=bool)
        else:
            if classification is None:
                continue
            masks[stratum] = np.array(
                [classification.get(g) == stratum for g in geoids], dtype=bool
            )
    return masks


def _iter_groups(schemas: Sequence[GroupSchema], totals: np.ndarray,
                 category_counts: Mapping[str, np.ndarray]):
    yield ALL_GROUP[0], ALL_GROUP[1], totals
    for schema in schemas:
        for code, label in schema.categories:
            if code in category_counts:
                yield schema.characteristic, label, category_counts[code]


def compute_group_exposures(
    surface: TractSurface,
    table: WorkerTable,
    schemas: Sequence[GroupSchema],
    classification: Mapping[str, str] | None = None,
    strata: Sequence[str] = (ALL_STRATUM,),
) -> list[ExposureRecord]:
    """One ExposureRecord per (group, stratum) at the table's locus.

    The locus is H for residence tables and W for workplace tables. Groups
    with zero weight in a stratum are omitted with a log entry.
    """
    if surface.year != table.year:
        raise ValueError(f"surface year {surface.year} != table year {table.year}")
    aligned = align_table(surface, table)
    locus = LOCUS_HOME if table.role == RESIDENCE else LOCUS_WORK
    masks = _stratum_masks(aligned.geoids, classification, strata)
    records = []
    for stratum, mask in masks.items():
        conc = aligned.concentrations[mask]
        for characteristic, label, weights in _iter_groups(
            schemas, aligned.totals, aligned.category_counts
        ):
            w = weights[mask]
            if int(w.sum()) == 0:
                logger.debug(
                    "skipping zero-weight group %s (%s, %s)",
                    format_group(characteristic, label), locus, stratum,
                )
                continue
            records.append(ExposureRecord(
                year=table.year,
                characteristic=characteristic,
                group=label,
                locus=locus,
                stratum=stratum,
                mean=_weighted_mean(conc, w.astype(np.float64)),
                p10=weighted_percentile(conc, w, 0.10),
                p90=weighted_percentile(conc, w, 0.90),
                weight=float(w.sum()),
            ))
    return records


def compute_hw_exposures(
    surface: TractSurface,
    od: ODMatrix,
    schemas: Sequence[GroupSchema],
    weights: HWWeights = DEFAULT_HW_WEIGHTS,
    classification: Mapping[str, str] | None = None,
    strata: Sequence[str] = (ALL_STRATUM,),
) -> tuple[list[ExposureRecord], list[ErrorRecord]]:
    """Exposure records at loci H, W, and HW over the OD population, plus the
    H-minus-HW error per (group, stratum).

    H, W, and HW are aggregated over the same resolvable pairs, so the error
    identity error = work_fraction * (H - W) holds to float precision. Strata
    are assigned by residential (home-tract) location.
    """
    if surface.year != od.year:
        raise ValueError(f"surface year {surface.year} != OD year {od.year}")
    pairs = resolve_pairs(surface, od)
    if len(pairs.totals) == 0 or int(pairs.totals.sum()) == 0:
        raise EmptyPopulationError("no resolvable OD pairs with workers")
    # Same form as hw_blend so per-pair blends match the scalar op bit for bit.
    blended = pairs.home_values + weights.work_fraction * (pairs.work_values - pairs.home_values)
    masks = _stratum_masks(pairs.home_geoids, classification, strata)
    records: list[ExposureRecord] = []
    errors: list[ErrorRecord] = []
    for stratum, mask in masks.items():
        vh = pairs.home_values[mask]
        vw = pairs.work_values[mask]
        vb = blended[mask]
        for characteristic, label, group_counts in _iter_groups(
            schemas, pairs.totals, pairs.category_counts
        ):
            w = group_counts[mask]
            if int(w.sum()) == 0:
                logger.debug(
                    "skipping zero-weight OD group %s (%s)",
                    format_group(characteristic, label), stratum,
                )
                continue
            wf = w.astype(np.float64)
            h_mean = _weighted_mean(vh, wf)
            w_mean = _weighted_mean(vw, wf)
            hw_mean = _weighted_mean(vb, wf)
            for locus, vals, mean in (
                (LOCUS_HOME, vh, h_mean),
                (LOCUS_WORK, vw, w_mean),
                (LOCUS_BLEND, vb, hw_mean),
            ):
                records.append(ExposureRecord(
                    year=od.year,
                    characteristic=characteristic,
                    group=label,
                    locus=locus,
                    stratum=stratum,
                    mean=mean,
                    p10=weighted_percentile(vals, w, 0.10),
                    p90=weighted_percentile(vals, w, 0.90),
                    weight=float(w.sum()),
                ))
            error = h_mean - hw_mean
            if h_mean != 0.0:
                percent = 100.0 * error / h_mean
            else:
                percent = math.nan
                logger.warning("H mean is zero; percent error undefined")
            errors.append(ErrorRecord(
                year=od.year,
                characteristic=characteristic,
                group=label,
                stratum=stratum,
                error=error,
                percent_error=percent,
            ))
    return records, errors
