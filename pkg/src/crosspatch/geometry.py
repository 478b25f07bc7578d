"""Closed smooth contours from anchor points, and their binary-mask rasters.

Coordinate conventions used throughout the package:
  * points are (x, y) with x along columns and y along rows (y grows down);
  * the raster cell at (row, col) has its center at (col + 0.5, row + 0.5);
  * contours are sampled clockwise starting from the northmost arc.

A contour is built from n anchor points: segment i interpolates from anchor
i to anchor i+1 (indices mod n) on the centripetal Catmull-Rom curve whose
control points are anchors i-1, i, i+1, i+2. Centripetal parameterization
(alpha = 0.5) is what rules out cusps and loops inside a segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import _kernels

CATMULL_ROM_ALPHA = 0.5
DEFAULT_SAMPLES_PER_SEGMENT = 32


@dataclass(frozen=True)
class BinaryMask:
    """h x w raster over {0, 1}, stored as uint8."""

    bits: np.ndarray

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:  # type: ignore[override]
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))


@dataclass(frozen=True)
class ClosedContour:
    """Ordered sampled segments forming one closed loop.

    segments[i] is a (samples, 2) array running from anchors[i] to
    anchors[(i+1) % n]; the shared endpoints are stored in both segments.
    """

    segments: list[np.ndarray]
    anchors: np.ndarray

    def loop_vertices(self) -> np.ndarray:
        """Closed polygon vertices: each segment minus its duplicated endpoint."""
        return np.concatenate([seg[:-1] for seg in self.segments], axis=0)

    def translated(self, dx: float, dy: float) -> "ClosedContour":
        d = np.array([dx, dy], dtype=np.float64)
        return ClosedContour([seg + d for seg in self.segments], self.anchors + d)


def initial_anchors(center, radius: float, n: int) -> np.ndarray:
    """Starting anchor layout: midpoints of consecutive equal points on a circle.

    The n equal points sit on the circle of the given radius at uniform
    angular spacing; each anchor is the chord midpoint of two consecutive
    ones, so all anchors lie at distance radius*cos(pi/n) from the center.
    """
    if n < 4:
        raise ValueError(f"need at least 4 anchors, got {n}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    pts = equal_points(center, radius, n)
    return (pts + np.roll(pts, -1, axis=0)) / 2.0


def equal_points(center, radius: float, n: int) -> np.ndarray:
    """The n uniform circle points the anchor layout is derived from.

    Point j sits at angle pi/2 - 2*pi*j/n, i.e. clockwise from north in a
    y-up frame (counterclockwise on screen with y down).
    """
    cx, cy = float(center[0]), float(center[1])
    j = np.arange(n, dtype=np.float64)
    ang = np.pi / 2.0 - 2.0 * np.pi * j / n
    return np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)], axis=1)


def spline_segment(p0, p1, p2, p3, samples: int) -> np.ndarray:
    """Sample the centripetal Catmull-Rom curve from p1 to p2.

    Returns a (samples, 2) array; the first and last rows are set to p1 and
    p2 exactly. Consecutive coincident control points collapse a knot
    interval and are rejected.
    """
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")
    pts = np.array([p0, p1, p2, p3], dtype=np.float64)
    d = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
    if np.any(d == 0.0):
        raise ValueError("coincident consecutive control points")

    t = np.zeros(4)
    t[1:] = np.cumsum(d**CATMULL_ROM_ALPHA)
    t0, t1, t2, t3 = t
    u = np.linspace(t1, t2, samples)[:, None]

    # Barry-Goldman pyramid
    a1 = (t1 - u) / (t1 - t0) * pts[0] + (u - t0) / (t1 - t0) * pts[1]
    a2 = (t2 - u) / (t2 - t1) * pts[1] + (u - t1) / (t2 - t1) * pts[2]
    a3 = (t3 - u) / (t3 - t2) * pts[2] + (u - t2) / (t3 - t2) * pts[3]
    b1 = (t2 - u) / (t2 - t0) * a1 + (u - t0) / (t2 - t0) * a2
    b2 = (t3 - u) / (t3 - t1) * a2 + (u - t1) / (t3 - t1) * a3
    out = (t2 - u) / (t2 - t1) * b1 + (u - t1) / (t2 - t1) * b2

    out[0] = pts[1]
    out[-1] = pts[2]
    return out


def close_contour(anchors: np.ndarray, samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT) -> ClosedContour:
    """Connect anchors into a closed loop of centripetal Catmull-Rom segments."""
    anchors = np.asarray(anchors, dtype=np.float64)
    n = anchors.shape[0]
    if n < 4:
        raise ValueError(f"need at least 4 anchors, got {n}")
    segments = []
    for i in range(n):
        seg = spline_segment(
            anchors[(i - 1) % n],
            anchors[i],
            anchors[(i + 1) % n],
            anchors[(i + 2) % n],
            samples_per_segment,
        )
        segments.append(seg)
    return ClosedContour(segments, anchors.copy())


def rasterize_polygon(vertices: np.ndarray, height: int, width: int) -> BinaryMask:
    """Even-odd fill of a closed polygon; out-of-frame portions are clipped."""
    if height <= 0 or width <= 0:
        raise ValueError("image dimensions must be positive")
    vertices = np.asarray(vertices, dtype=np.float64)
    bits = _kernels.fill_polygon(vertices[:, 0], vertices[:, 1], height, width)
    return BinaryMask(bits)


def rasterize(contour: ClosedContour, height: int, width: int) -> BinaryMask:
    """Binary mask of the contour interior: 1 where the cell center is inside."""
    return rasterize_polygon(contour.loop_vertices(), height, width)


def contour_is_simple(contour: ClosedContour) -> bool:
    """True iff no two non-adjacent edges of the sampled loop intersect."""
    v = contour.loop_vertices()
    return bool(_kernels.polyline_is_simple(v[:, 0], v[:, 1]))


def save_mask_png(mask: BinaryMask, path) -> None:
    """Write the mask as an 8-bit grayscale PNG with values {0, 255}."""
    Image.fromarray((mask.bits * 255).astype(np.uint8), mode="L").save(path)


def load_mask_png(path) -> BinaryMask:
    arr = np.asarray(Image.open(path).convert("L"))
    return BinaryMask((arr >= 128).astype(np.uint8))


def save_contour_txt(contour: ClosedContour, path) -> None:
    """Write sampled loop vertices as 'x,y' lines (cutting template export)."""
    v = contour.loop_vertices()
    with open(path, "w") as fh:
        for x, y in v:
            fh.write(f"{x:.6f},{y:.6f}\n")
