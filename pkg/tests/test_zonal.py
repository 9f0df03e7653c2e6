"""Grid readers and zonal aggregation, checked against point-sampling oracles."""
from __future__ import annotations

import numpy as np
import pytest

from helpers import points_in_parts, random_star_polygon

from hwexposure.errors import FormatError, SchemaError
from hwexposure.geometry import PolygonPart, TractGeometry
from hwexposure.grids import ConcentrationGrid, read_asc, read_xyz_csv
from hwexposure.zonal import (
    build_tract_surface,
    classify_tracts,
    classify_urban,
    read_surface_csv,
    write_surface_csv,
    zonal_weighted_mean,
)


def make_grid(values, origin=(0.0, 0.0), cell=1.0, nodata=None):
    arr = np.asarray(values, dtype=np.float64)
    mask = np.zeros(arr.shape, dtype=bool) if nodata is None else np.asarray(nodata, dtype=bool)
    return ConcentrationGrid(
        origin_x=origin[0],
        origin_y=origin[1],
        cell_width=cell,
        cell_height=cell,
        n_rows=arr.shape[0],
        n_cols=arr.shape[1],
        values=np.where(mask, 0.0, arr),
        nodata=mask,
    )


def square(x0, y0, x1, y1):
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0))


def rect_tract(geoid, x0, y0, x1, y1):
    return TractGeometry(geoid=geoid, parts=(PolygonPart(exterior=square(x0, y0, x1, y1)),))


# ----------------------------------------------------------------------------
# grid readers
# ----------------------------------------------------------------------------

ASC_TEXT = """ncols 3
nrows 2
xllcorner 10.0
yllcorner 20.0
cellsize 2.0
NODATA_value -9999
1.5 2.5 -9999
4.0 5.0 6.0
"""


def test_read_asc(tmp_path):
    path = tmp_path / "grid.asc"
    path.write_text(ASC_TEXT)
    grid = read_asc(str(path))
    assert (grid.n_rows, grid.n_cols) == (2, 3)
    assert grid.extent == (10.0, 20.0, 16.0, 24.0)
    # file is top-down; bottom row (row 0) holds the last data line
    assert grid.values[0].tolist() == [4.0, 5.0, 6.0]
    assert grid.values[1].tolist() == [1.5, 2.5, 0.0]
    assert grid.nodata[1].tolist() == [False, False, True]


def test_read_asc_missing_header(tmp_path):
    path = tmp_path / "bad.asc"
    path.write_text("ncols 2\nnrows 1\ncellsize 1.0\n1 2\n")
    with pytest.raises(FormatError):
        read_asc(str(path))


def test_read_asc_wrong_cell_count(tmp_path):
    path = tmp_path / "bad.asc"
    path.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n")
    with pytest.raises(FormatError):
        read_asc(str(path))


def test_read_xyz_csv(tmp_path):
    path = tmp_path / "grid.csv"
    # centers of a 2x2 unit grid, one cell missing -> nodata
    path.write_text("x,y,value\n0.5,0.5,1.0\n1.5,0.5,2.0\n0.5,1.5,3.0\n")
    grid = read_xyz_csv(str(path))
    assert (grid.n_rows, grid.n_cols) == (2, 2)
    assert grid.extent == (0.0, 0.0, 2.0, 2.0)
    assert grid.values[0].tolist() == [1.0, 2.0]
    assert grid.nodata[1].tolist() == [False, True]


def test_read_xyz_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("lon,lat,val\n0,0,1\n")
    with pytest.raises(FormatError):
        read_xyz_csv(str(path))


def test_negative_concentration_rejected():
    with pytest.raises(FormatError):
        make_grid([[-1.0]])


# ----------------------------------------------------------------------------
# zonal_weighted_mean
# ----------------------------------------------------------------------------

def test_zonal_single_cell_identity():
    grid = make_grid([[9.5]])
    tract = rect_tract("06037000100", 0.0, 0.0, 1.0, 1.0)
    assert zonal_weighted_mean(grid, tract) == 9.5


def test_zonal_two_equal_cells():
    grid = make_grid([[8.0, 10.0]])
    tract = rect_tract("06037000100", 0.0, 0.0, 2.0, 1.0)
    assert zonal_weighted_mean(grid, tract) == 9.0


def test_zonal_partial_coverage_weighting():
    # covers all of cell 0 and half of cell 1 -> (8*1 + 10*0.5) / 1.5
    grid = make_grid([[8.0, 10.0]])
    tract = rect_tract("06037000100", 0.0, 0.0, 1.5, 1.0)
    assert zonal_weighted_mean(grid, tract) == pytest.approx(13.0 / 1.5)


def test_zonal_skips_nodata():
    grid = make_grid([[8.0, 12.0]], nodata=[[False, True]])
    tract = rect_tract("06037000100", 0.0, 0.0, 2.0, 1.0)
    assert zonal_weighted_mean(grid, tract) == 8.0


def test_zonal_no_coverage_returns_none():
    grid = make_grid([[8.0]], nodata=[[True]])
    tract = rect_tract("06037000100", 0.0, 0.0, 1.0, 1.0)
    assert zonal_weighted_mean(grid, tract) is None


def test_zonal_outside_grid_returns_none():
    grid = make_grid([[8.0]])
    tract = rect_tract("06037000100", 5.0, 5.0, 6.0, 6.0)
    assert zonal_weighted_mean(grid, tract) is None


def test_zonal_within_value_range():
    rng = np.random.default_rng(3)
    grid = make_grid(rng.uniform(4.0, 16.0, size=(20, 20)))
    for _ in range(10):
        poly = random_star_polygon(rng, rng.uniform(4, 16), rng.uniform(4, 16), 0.5, 3.5, 8)
        tract = TractGeometry(geoid="06037000100", parts=(PolygonPart(exterior=tuple(poly)),))
        mean = zonal_weighted_mean(grid, tract)
        assert grid.values.min() <= mean <= grid.values.max()


def test_zonal_translation_invariance():
    rng = np.random.default_rng(4)
    values = rng.uniform(2.0, 12.0, size=(12, 12))
    poly = random_star_polygon(rng, 6.0, 6.0, 1.0, 4.0, 9)
    tract = TractGeometry(geoid="06037000100", parts=(PolygonPart(exterior=tuple(poly)),))
    base = zonal_weighted_mean(make_grid(values), tract)
    dx, dy = 137.25, -58.5
    moved_tract = TractGeometry(
        geoid="06037000100",
        parts=(PolygonPart(exterior=tuple((x + dx, y + dy) for x, y in poly)),),
    )
    moved = zonal_weighted_mean(make_grid(values, origin=(dx, dy)), moved_tract)
    assert moved == pytest.approx(base, rel=1e-12)


def monte_carlo_zonal(grid, parts, rng, n_points=200_000):
    """Uniform points inside the polygon, averaging covering-cell values.

    Rejection-samples from the bounding box; independent of the clipping
    kernel (ray-casting membership plus direct cell indexing).
    """
    minx = min(x for p in parts for x, _ in p.exterior)
    maxx = max(x for p in parts for x, _ in p.exterior)
    miny = min(y for p in parts for _, y in p.exterior)
    maxy = max(y for p in parts for _, y in p.exterior)
    total = 0.0
    count = 0
    need = n_points
    while need > 0:
        batch = max(need * 2, 10_000)
        px = rng.uniform(minx, maxx, size=batch)
        py = rng.uniform(miny, maxy, size=batch)
        keep = points_in_parts(px, py, parts)
        px, py = px[keep][:need], py[keep][:need]
        cols = np.floor((px - grid.origin_x) / grid.cell_width).astype(int)
        rows = np.floor((py - grid.origin_y) / grid.cell_height).astype(int)
        inb = (cols >= 0) & (cols < grid.n_cols) & (rows >= 0) & (rows < grid.n_rows)
        cols, rows = cols[inb], rows[inb]
        valid = ~grid.nodata[rows, cols]
        total += grid.values[rows[valid], cols[valid]].sum()
        count += int(valid.sum())
        need -= len(px)
    return total / count


def test_zonal_monte_carlo_oracle():
    rng = np.random.default_rng(11)
    grid = make_grid(rng.uniform(8.0, 12.0, size=(50, 50)))
    for _ in range(6):
        cx, cy = rng.uniform(8, 42, size=2)
        poly = random_star_polygon(rng, cx, cy, 1.0, 6.0, 9)
        tract = TractGeometry(geoid="06037000100", parts=(PolygonPart(exterior=tuple(poly)),))
        exact = zonal_weighted_mean(grid, tract)
        sampled = monte_carlo_zonal(grid, tract.parts, rng)
        assert exact == pytest.approx(sampled, rel=2e-3)


def test_zonal_holed_multipart_tract_vs_oracle():
    rng = np.random.default_rng(12)
    grid = make_grid(rng.uniform(5.0, 15.0, size=(20, 20)))
    holed = PolygonPart(
        exterior=square(2.0, 2.0, 9.0, 9.0),
        holes=(square(4.0, 4.0, 6.5, 7.0),),
    )
    island = PolygonPart(exterior=tuple(random_star_polygon(rng, 14.0, 14.0, 1.0, 4.0, 8)))
    tract = TractGeometry(geoid="06037000100", parts=(holed, island))
    exact = zonal_weighted_mean(grid, tract)
    sampled = monte_carlo_zonal(grid, tract.parts, rng, n_points=400_000)
    assert exact == pytest.approx(sampled, rel=2e-3)


# ----------------------------------------------------------------------------
# build_tract_surface
# ----------------------------------------------------------------------------

def test_surface_uniform_field():
    grid = make_grid(np.full((4, 4), 7.8))
    tract = rect_tract("06037000100", 0.5, 0.5, 3.5, 3.5)
    surface = build_tract_surface(grid, [tract], year=2011)
    assert surface.entries == {"06037000100": 7.8}
    assert surface.excluded == ()


def test_surface_excludes_nodata_tract():
    values = np.full((4, 4), 7.8)
    nodata = np.zeros((4, 4), dtype=bool)
    nodata[:2, :2] = True
    grid = make_grid(values, nodata=nodata)
    tracts = [
        rect_tract("06037000100", 0.0, 0.0, 2.0, 2.0),  # all nodata
        rect_tract("06037000200", 2.0, 2.0, 4.0, 4.0),
    ]
    surface = build_tract_surface(grid, tracts, year=2011)
    assert surface.excluded == ("06037000100",)
    assert surface.entries == {"06037000200": 7.8}


def test_surface_duplicate_geoid():
    grid = make_grid([[1.0]])
    tracts = [rect_tract("06037000100", 0, 0, 1, 1), rect_tract("06037000100", 0, 0, 1, 1)]
    with pytest.raises(SchemaError):
        build_tract_surface(grid, tracts, year=2011)


def test_surface_empty_tract_list():
    grid = make_grid([[1.0]])
    with pytest.raises(SchemaError):
        build_tract_surface(grid, [], year=2011)


def test_surface_matches_per_tract_oracle_and_threads():
    rng = np.random.default_rng(8)
    grid = make_grid(rng.uniform(5.0, 15.0, size=(6, 6)))
    tracts = [
        rect_tract(f"060370001{i:02d}", col * 2.0, row * 2.0, col * 2.0 + 2.0, row * 2.0 + 2.0)
        for i, (row, col) in enumerate((r, c) for r in range(3) for c in range(3))
    ]
    surface = build_tract_surface(grid, tracts, year=2011)
    for tract in tracts:
        assert surface.entries[tract.geoid] == zonal_weighted_mean(grid, tract)
    for threads in (2, 4):
        threaded = build_tract_surface(grid, tracts, year=2011, threads=threads)
        assert threaded == surface


# ----------------------------------------------------------------------------
# urban classification
# ----------------------------------------------------------------------------

def urban_mask_parts():
    return [PolygonPart(exterior=((0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0), (0.0, 0.0)))]


def test_classify_fully_inside():
    tract = rect_tract("06037000100", 2.0, 2.0, 4.0, 4.0)
    assert classify_urban(tract, urban_mask_parts()) == "urban"


def test_classify_disjoint():
    tract = rect_tract("06037000100", 20.0, 20.0, 22.0, 22.0)
    assert classify_urban(tract, urban_mask_parts()) == "rural"


def test_classify_sixty_percent_overlap():
    # tract spans x in [8.8, 10.8]; mask covers x <= 10 -> 60% of tract area
    tract = rect_tract("06037000100", 8.8, 2.0, 10.8, 4.0)
    assert classify_urban(tract, urban_mask_parts()) == "urban"
    # shift so only 40% overlaps
    tract = rect_tract("06037000100", 9.2, 2.0, 11.2, 4.0)
    assert classify_urban(tract, urban_mask_parts()) == "rural"


def test_classify_sixty_percent_monte_carlo_oracle():
    rng = np.random.default_rng(21)
    mask_poly = random_star_polygon(rng, 5.0, 5.0, 2.0, 5.0, 9)
    mask = [PolygonPart(exterior=tuple(mask_poly))]
    tract_poly = random_star_polygon(rng, 6.0, 5.0, 1.0, 3.0, 8)
    tract = TractGeometry(geoid="06037000100", parts=(PolygonPart(exterior=tuple(tract_poly)),))
    px = rng.uniform(0.0, 12.0, size=500_000)
    py = rng.uniform(0.0, 12.0, size=500_000)
    in_tract = points_in_parts(px, py, tract.parts)
    in_both = in_tract & points_in_parts(px, py, mask)
    sampled_frac = in_both.sum() / in_tract.sum()
    from hwexposure.geometry import overlap_area

    exact_frac = overlap_area(tract.parts, mask) / tract.area()
    assert exact_frac == pytest.approx(sampled_frac, abs=0.01)
    assert classify_urban(tract, mask) == ("urban" if exact_frac >= 0.5 else "rural")


def test_classify_tracts_sorted_and_threaded():
    tracts = [
        rect_tract("06037000200", 20.0, 20.0, 22.0, 22.0),
        rect_tract("06037000100", 2.0, 2.0, 4.0, 4.0),
    ]
    got = classify_tracts(tracts, urban_mask_parts())
    assert got == {"06037000100": "urban", "06037000200": "rural"}
    assert list(got) == ["06037000100", "06037000200"]
    assert classify_tracts(tracts, urban_mask_parts(), threads=3) == got


def test_build_urban_mask_bundles_classification():
    from hwexposure.zonal import build_urban_mask

    tracts = [rect_tract("06037000100", 2.0, 2.0, 4.0, 4.0)]
    mask = build_urban_mask(urban_mask_parts(), tracts)
    assert mask.classification == {"06037000100": "urban"}
    assert len(mask.polygons) == 1


# ----------------------------------------------------------------------------
# surface csv round trip
# ----------------------------------------------------------------------------

def test_surface_csv_roundtrip(tmp_path):
    surface = build_tract_surface(
        make_grid([[9.5, 10.25], [7.75, 8.0]]),
        [rect_tract("06037000100", 0, 0, 1, 1), rect_tract("06037000200", 1, 1, 2, 2)],
        year=2013,
    )
    path = tmp_path / "surface.csv"
    write_surface_csv(surface, str(path))
    back = read_surface_csv(str(path))
    assert back.year == 2013
    assert back.entries == surface.entries
