"""Zonal aggregation of a concentration grid over tract polygons, plus
urban/rural classification against a mask polygon set.

Cell weights are exact coverage areas from the clipping kernel: the zonal
value is sum(value * covered_area) / sum(covered_area) over non-nodata cells.
Tracts with zero valid coverage are excluded rather than failing the run.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DegenerateGeometryError, FormatError, SchemaError
from .geometry import PolygonPart, TractGeometry, cell_coverage, overlap_area, parts_bbox
from .grids import ConcentrationGrid

logger = logging.getLogger(__name__)

URBAN = "urban"
RURAL = "rural"


@dataclass(frozen=True)
class TractSurface:
    """Per-tract zonal concentrations for one year."""

    year: int
    entries: dict[str, float]
    excluded: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        overlap = set(self.entries) & set(self.excluded)
        if overlap:
            raise SchemaError(f"tracts both valued and excluded: {sorted(overlap)[:5]}")
        bad = [g for g, v in self.entries.items() if v < 0 or math.isnan(v)]
        if bad:
            raise SchemaError(f"negative/NaN concentrations for {bad[:5]}")


@dataclass(frozen=True)
class UrbanMask:
    """Urban-area polygons plus the tract classification derived from them."""

    polygons: tuple[PolygonPart, ...]
    classification: dict[str, str] = field(default_factory=dict)


def zonal_weighted_mean(grid: ConcentrationGrid, tract: TractGeometry) -> float | None:
    """Coverage-weighted mean of grid values under the tract polygon.

    Only cells whose extent intersects the tract bounding box are visited;
    nodata cells contribute neither value nor weight. Returns None when no
    valid coverage exists (the no-coverage signal).
    """
    minx, miny, maxx, maxy = parts_bbox(tract.parts)
    col0 = max(int(math.floor((minx - grid.origin_x) / grid.cell_width)), 0)
    col1 = min(int(math.ceil((maxx - grid.origin_x) / grid.cell_width)), grid.n_cols)
    row0 = max(int(math.floor((miny - grid.origin_y) / grid.cell_height)), 0)
    row1 = min(int(math.ceil((maxy - grid.origin_y) / grid.cell_height)), grid.n_rows)
    cell_area = grid.cell_width * grid.cell_height
    num = 0.0
    den = 0.0
    vmin = math.inf
    vmax = -math.inf
    for row in range(row0, row1):
        for col in range(col0, col1):
            if grid.nodata[row, col]:
                continue
            frac = cell_coverage(tract.parts, grid.cell_rect(row, col))
            if frac == 0.0:
                continue
            value = float(grid.values[row, col])
            area = frac * cell_area
            num += value * area
            den += area
            vmin = min(vmin, value)
            vmax = max(vmax, value)
    if den == 0.0:
        return None
    # The weighted mean lies in [vmin, vmax] mathematically; clamp float drift.
    return min(max(num / den, vmin), vmax)


def build_tract_surface(
    grid: ConcentrationGrid,
    tracts: Sequence[TractGeometry],
    year: int,
    threads: int = 1,
) -> TractSurface:
    """Evaluate zonal_weighted_mean for every tract.

    Tracts may be evaluated in parallel; results are merged in ascending geoid
    order so the output is identical for any thread count.
    """
    if not tracts:
        raise SchemaError("tract list is empty")
    geoids = [t.geoid for t in tracts]
    if len(set(geoids)) != len(geoids):
        dupes = sorted({g for g in geoids if geoids.count(g) > 1})
        raise SchemaError(f"duplicate tract geoids: {dupes[:5]}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            means = list(pool.map(lambda t: zonal_weighted_mean(grid, t), tracts))
    else:
        means = [zonal_weighted_mean(grid, t) for t in tracts]

    entries: dict[str, float] = {}
    excluded: list[str] = []
    for tract, mean in sorted(zip(tracts, means), key=lambda pair: pair[0].geoid):
        if mean is None:
            excluded.append(tract.geoid)
        else:
            entries[tract.geoid] = mean
    if excluded:
        logger.warning("%d tract(s) with no valid grid coverage excluded", len(excluded))
    return TractSurface(year=year, entries=entries, excluded=tuple(excluded))


def classify_urban(tract: TractGeometry, mask_polygons: Sequence[PolygonPart]) -> str:
    """'urban' when at least half the tract area overlaps the mask polygons."""
    area = tract.area()
    if area <= 0.0:
        raise DegenerateGeometryError(f"tract {tract.geoid} has zero area")
    frac = overlap_area(tract.parts, mask_polygons) / area
    return URBAN if frac >= 0.5 else RURAL


def classify_tracts(
    tracts: Sequence[TractGeometry],
    mask_polygons: Sequence[PolygonPart],
    threads: int = 1,
) -> dict[str, str]:
    """Classify every tract against the mask; keyed by geoid, ascending."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            labels = list(pool.map(lambda t: classify_urban(t, mask_polygons), tracts))
    else:
        labels = [classify_urban(t, mask_polygons) for t in tracts]
    return dict(sorted((t.geoid, lab) for t, lab in zip(tracts, labels)))


def build_urban_mask(
    mask_polygons: Sequence[PolygonPart],
    tracts: Sequence[TractGeometry],
    threads: int = 1,
) -> UrbanMask:
    """Bundle the mask polygons with the classification of the given tracts."""
    return UrbanMask(
        polygons=tuple(mask_polygons),
        classification=classify_tracts(tracts, mask_polygons, threads=threads),
    )


def write_surface_csv(surface: TractSurface, path: str) -> None:
    """Emit the surface as CSV with header ``geoid,year,pm25``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["geoid", "year", "pm25"])
        for geoid in sorted(surface.entries):
            writer.writerow([geoid, surface.year, repr(float(surface.entries[geoid]))])


def read_surface_csv(path: str) -> TractSurface:
    """Read a surface emitted by write_surface_csv."""
    entries: dict[str, float] = {}
    year: int | None = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["geoid", "year", "pm25"]:
            raise FormatError(f"{path}: expected header 'geoid,year,pm25'")
        for row in reader:
            year = int(row["year"])
            entries[row["geoid"]] = float(row["pm25"])
    if year is None:
        raise FormatError(f"{path}: no data rows")
    return TractSurface(year=year, entries=entries)
