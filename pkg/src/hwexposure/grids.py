"""Gridded concentration surfaces: the in-memory raster type plus readers for
ESRI ASCII Grid (.asc) files and an (x, y, value) CSV fallback.

Grids are stored bottom-up: row 0 spans [origin_y, origin_y + cell_height).
ESRI ASCII files list the top row first, so the reader flips them.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

_ASC_KEYWORDS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True)
class ConcentrationGrid:
    """A regular raster of annual-average concentrations (ug/m3) with a nodata mask."""

    origin_x: float
    origin_y: float
    cell_width: float
    cell_height: float
    n_rows: int
    n_cols: int
    values: np.ndarray  # float64, shape (n_rows, n_cols), row 0 at the bottom
    nodata: np.ndarray  # bool, same shape; True where the cell has no data

    def __post_init__(self) -> None:
        if self.cell_width <= 0 or self.cell_height <= 0:
            raise FormatError("cell dimensions must be positive")
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise FormatError("grid dimensions must be positive")
        shape = (self.n_rows, self.n_cols)
        if self.values.shape != shape or self.nodata.shape != shape:
            raise FormatError(
                f"value/nodata arrays must have shape {shape}, "
                f"got {self.values.shape} and {self.nodata.shape}"
            )
        valid = self.values[~self.nodata]
        if valid.size and (valid < 0).any():
            raise FormatError("concentrations must be non-negative")
        self.values.setflags(write=False)
        self.nodata.setflags(write=False)

    def cell_rect(self, row: int, col: int) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the cell at (row, col)."""
        x0 = self.origin_x + col * self.cell_width
        y0 = self.origin_y + row * self.cell_height
        return (x0, y0, x0 + self.cell_width, y0 + self.cell_height)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + self.n_cols * self.cell_width,
            self.origin_y + self.n_rows * self.cell_height,
        )


def read_asc(path: str) -> ConcentrationGrid:
    """Read an ESRI ASCII Grid.

    Recognized header keywords: ncols, nrows, xllcorner, yllcorner, cellsize,
    NODATA_value (optional, default -9999). Data rows follow, top row first.
    """
    header: dict[str, float] = {}
    data: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            key = tokens[0].lower()
            if not data and key in _ASC_KEYWORDS:
                if len(tokens) != 2:
                    raise FormatError(f"{path}:{lineno}: malformed header line {line!r}")
                header[key] = float(tokens[1])
            else:
                try:
                    data.extend(float(t) for t in tokens)
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: non-numeric cell value") from exc
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise FormatError(f"{path}: missing required header keyword {key!r}")
    n_cols, n_rows = int(header["ncols"]), int(header["nrows"])
    if len(data) != n_rows * n_cols:
        raise FormatError(
            f"{path}: expected {n_rows * n_cols} cell values, got {len(data)}"
        )
    nodata_value = header.get("nodata_value", -9999.0)
    values = np.array(data, dtype=np.float64).reshape(n_rows, n_cols)
    values = values[::-1].copy()  # file is top-down; store bottom-up
    nodata = values == nodata_value
    values = np.where(nodata, 0.0, values)
    return ConcentrationGrid(
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"],
        cell_width=header["cellsize"],
        cell_height=header["cellsize"],
        n_rows=n_rows,
        n_cols=n_cols,
        values=values,
        nodata=nodata,
    )


def read_xyz_csv(path: str) -> ConcentrationGrid:
    """Read a grid from a CSV with header ``x,y,value``.

    Points are cell centers on a regular lattice; spacing is inferred from the
    distinct coordinates. Lattice positions absent from the file become nodata.
    """
    xs: list[float] = []
    ys: list[float] = []
    vs: list[float] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "y", "value"]:
            raise FormatError(f"{path}: expected header 'x,y,value'")
        for row in reader:
            xs.append(float(row["x"]))
            ys.append(float(row["y"]))
            vs.append(float(row["value"]))
    if not xs:
        raise FormatError(f"{path}: no data rows")
    ux = np.unique(np.array(xs))
    uy = np.unique(np.array(ys))
    cell_w = _uniform_spacing(ux, path, "x")
    cell_h = _uniform_spacing(uy, path, "y")
    n_cols = int(round((ux[-1] - ux[0]) / cell_w)) + 1
    n_rows = int(round((uy[-1] - uy[0]) / cell_h)) + 1
    values = np.zeros((n_rows, n_cols), dtype=np.float64)
    nodata = np.ones((n_rows, n_cols), dtype=bool)
    for x, y, v in zip(xs, ys, vs):
        col = int(round((x - ux[0]) / cell_w))
        row = int(round((y - uy[0]) / cell_h))
        values[row, col] = v
        nodata[row, col] = False
    return ConcentrationGrid(
        origin_x=ux[0] - cell_w / 2.0,
        origin_y=uy[0] - cell_h / 2.0,
        cell_width=cell_w,
        cell_height=cell_h,
        n_rows=n_rows,
        n_cols=n_cols,
        values=values,
        nodata=nodata,
    )


def _uniform_spacing(coords: np.ndarray, path: str, axis: str) -> float:
    if coords.size == 1:
        return 1.0  # single row/column: spacing is arbitrary, use unit cells
    diffs = np.diff(coords)
    step = diffs.min()
    if step <= 0 or not np.allclose(np.round(diffs / step), diffs / step, atol=1e-6):
        raise FormatError(f"{path}: {axis} coordinates are not on a regular lattice")
    return float(step)
