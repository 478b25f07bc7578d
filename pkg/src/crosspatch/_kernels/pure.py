"""NumPy fallback for the hot rasterization and contour kernels.

Semantics are kept bit-identical to the compiled extension in ``_core.pyx``:
the same crossing formula ``x1 + (yc - y1) / (y2 - y1) * (x2 - x1)``, the
same half-open edge rule, and the same orientation tests. The equivalence
test suite asserts bitwise agreement between the two backends.

Conventions:
  * the grid cell at (row, col) has its center at (col + 0.5, row + 0.5);
  * a cell is set iff its center is inside the polygon under the even-odd
    rule (horizontal ray toward +x, half-open vertex rule);
  * polygon vertices are an implicitly closed loop (last connects to first).
"""

from __future__ import annotations

import math

import numpy as np


def fill_polygon(xs: np.ndarray, ys: np.ndarray, height: int, width: int) -> np.ndarray:
    """Rasterize a closed polygon into a {0,1} uint8 grid of shape (height, width).

    Vertices outside the frame are fine; only in-frame cell centers are tested.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    out = np.zeros((height, width), dtype=np.uint8)
    m = xs.shape[0]
    if m < 3:
        return out
    x2 = np.roll(xs, -1)
    y2 = np.roll(ys, -1)

    row_lo = max(0, math.ceil(float(ys.min()) - 0.5))
    row_hi = min(height - 1, math.ceil(float(ys.max()) - 0.5) - 1)
    for row in range(row_lo, row_hi + 1):
        yc = row + 0.5
        crossing = (ys > yc) != (y2 > yc)
        if not crossing.any():
            continue
        y1c = ys[crossing]
        cx = xs[crossing] + (yc - y1c) / (y2[crossing] - y1c) * (x2[crossing] - xs[crossing])
        cx.sort()
        # Half-open rule gives an even crossing count for a closed loop.
        for k in range(0, cx.shape[0] - 1, 2):
            col_lo = max(0, math.ceil(cx[k] - 0.5))
            col_hi = min(width - 1, math.ceil(cx[k + 1] - 0.5) - 1)
            if col_lo <= col_hi:
                out[row, col_lo : col_hi + 1] = 1
    return out


def polyline_is_simple(xs: np.ndarray, ys: np.ndarray) -> bool:
    """True iff no two non-adjacent edges of the closed polyline intersect.

    Edge i runs from vertex i to vertex (i+1) mod m. Adjacent edges (sharing
    an endpoint, including the wrap-around pair) are skipped. Collinear
    touching counts as an intersection.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    m = xs.shape[0]
    if m < 4:
        return True
    ax, ay = xs, ys
    bx, by = np.roll(xs, -1), np.roll(ys, -1)

    # d[i, j] = orient(edge i start, edge i end, point of edge j)
    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    d1 = orient(ax[:, None], ay[:, None], bx[:, None], by[:, None], ax[None, :], ay[None, :])
    d2 = orient(ax[:, None], ay[:, None], bx[:, None], by[:, None], bx[None, :], by[None, :])
    d3 = orient(ax[None, :], ay[None, :], bx[None, :], by[None, :], ax[:, None], ay[:, None])
    d4 = orient(ax[None, :], ay[None, :], bx[None, :], by[None, :], bx[:, None], by[:, None])

    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )

    def on_segment(px, py, qx, qy, rx, ry):
        return (
            (np.minimum(px, qx) <= rx)
            & (rx <= np.maximum(px, qx))
            & (np.minimum(py, qy) <= ry)
            & (ry <= np.maximum(py, qy))
        )

    touch = (
        ((d1 == 0) & on_segment(ax[:, None], ay[:, None], bx[:, None], by[:, None], ax[None, :], ay[None, :]))
        | ((d2 == 0) & on_segment(ax[:, None], ay[:, None], bx[:, None], by[:, None], bx[None, :], by[None, :]))
        | ((d3 == 0) & on_segment(ax[None, :], ay[None, :], bx[None, :], by[None, :], ax[:, None], ay[:, None]))
        | ((d4 == 0) & on_segment(ax[None, :], ay[None, :], bx[None, :], by[None, :], bx[:, None], by[:, None]))
    )

    hit = proper | touch
    idx = np.arange(m)
    adjacent = (idx[:, None] == idx[None, :]) | ((idx[:, None] + 1) % m == idx[None, :]) | (
        (idx[None, :] + 1) % m == idx[:, None]
    )
    hit &= ~adjacent
    return not bool(hit.any())
