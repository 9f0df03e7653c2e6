"""Shared test utilities: polygon generators and point-in-polygon oracle.

points_in_ring implements an even-odd crossing test, deliberately independent
of the package's half-plane clipping kernel so it can serve as an oracle.
"""
from __future__ import annotations

import math

import numpy as np


def random_star_polygon(rng, cx, cy, r_lo, r_hi, n_verts):
    """Random simple polygon: jittered even angular spacing keeps gaps < pi."""
    jitter = rng.uniform(0.08, 0.92, size=n_verts)
    angles = 2.0 * math.pi * (np.arange(n_verts) + jitter) / n_verts
    radii = rng.uniform(r_lo, r_hi, size=n_verts)
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(angles, radii)]


def points_in_ring(px: np.ndarray, py: np.ndarray, ring) -> np.ndarray:
    """Vectorized even-odd crossing test for a single ring."""
    verts = list(ring)
    if verts[0] == verts[-1]:
        verts = verts[:-1]
    inside = np.zeros(px.shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        crosses = (y0 > py) != (y1 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (x1 - x0) * (py - y0) / (y1 - y0) + x0
        inside ^= crosses & (px < xint)
    return inside


def points_in_parts(px: np.ndarray, py: np.ndarray, parts) -> np.ndarray:
    """Membership in a polygon set with holes (exterior minus holes, any part)."""
    inside = np.zeros(px.shape, dtype=bool)
    for part in parts:
        member = points_in_ring(px, py, part.exterior)
        for hole in part.holes:
            member &= ~points_in_ring(px, py, hole)
        inside |= member
    return inside
