"""Per-anchor feasible regions and feasibility repair.

Each anchor of a patch owns a wedge-shaped region: between its two sector
lines, outside an inner exclusion circle, and inside a rectangular outer
border obtained by shrinking the target's detection box about its center.
Keeping every anchor in its own wedge preserves the angular order of the
anchors, which is what keeps the interpolated contour from crossing itself.

Line j passes through the region center and equal point j; its unit normal
is the equal-point direction rotated clockwise, so for a point inside wedge
j the signed distance to line j is positive and to line j+1 negative. The
product test alone also admits the antipodal wedge (both signs flip), so
wedge membership additionally requires a positive component along the wedge
bisector.

Anchor slots are 0-indexed everywhere: slot j is the wedge between lines j
and (j + 1) mod n, home of the j-th starting anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import equal_points, initial_anchors


@dataclass(frozen=True)
class FeasibleRegion:
    """Sector lines, exclusion radii and outer border for one patch's anchors."""

    center: np.ndarray          # (2,) circle center
    radius: float               # initial-circle radius
    inner_radius: float         # exclusion radius, < radius*cos(pi/n)
    n: int                      # anchors / sectors per patch
    lines: np.ndarray           # (n, 3) rows (a, b, c) with a*x + b*y + c = 0, a^2+b^2 = 1
    equal_points: np.ndarray    # (n, 2) uniform circle points
    bisectors: np.ndarray       # (n, 2) unit wedge bisector directions
    outer: tuple[float, float, float, float]  # (x_l, x_r, y_d, y_u), inclusive


@dataclass(frozen=True)
class FeasibilityVerdict:
    sector_ok: bool
    annulus_ok: bool
    outer_ok: bool

    @property
    def rho(self) -> int:
        return int(self.sector_ok and self.annulus_ok and self.outer_ok)


def build_region(
    center,
    radius: float,
    inner_fraction: float,
    n: int,
    detection_box,
    shrink: float,
) -> FeasibleRegion:
    """Construct the feasibility geometry for one patch.

    detection_box is (x1, y1, x2, y2); the outer border is that box scaled by
    `shrink` about its own center.
    """
    if n < 4:
        raise ValueError(f"need at least 4 sectors, got {n}")
    if not 0.0 < inner_fraction <= 0.5:
        raise ValueError(f"inner_fraction must be in (0, 0.5], got {inner_fraction}")
    if not 0.0 < shrink <= 1.0:
        raise ValueError(f"shrink must be in (0, 1], got {shrink}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    inner_radius = inner_fraction * radius
    if inner_radius >= radius * math.cos(math.pi / n):
        raise ValueError("inner radius reaches the initial anchors; shrink inner_fraction")

    c = np.asarray(center, dtype=np.float64)
    eq = equal_points(c, radius, n)
    u = (eq - c) / radius                      # unit directions to equal points
    normals = np.stack([u[:, 1], -u[:, 0]], axis=1)  # rotated clockwise (y-up frame)
    cc = -(normals @ c)
    lines = np.concatenate([normals, cc[:, None]], axis=1)

    mid = (eq + np.roll(eq, -1, axis=0)) / 2.0 - c
    bis = mid / np.linalg.norm(mid, axis=1, keepdims=True)

    x1, y1, x2, y2 = (float(v) for v in detection_box)
    bx, by = (x1 + x2) / 2.0, (y1 + y2) / 2.0
    hw, hh = (x2 - x1) / 2.0 * shrink, (y2 - y1) / 2.0 * shrink
    outer = (bx - hw, bx + hw, by - hh, by + hh)
    if outer[0] >= outer[1] or outer[2] >= outer[3]:
        raise ValueError("degenerate outer border")

    return FeasibleRegion(
        center=c,
        radius=float(radius),
        inner_radius=float(inner_radius),
        n=n,
        lines=lines,
        equal_points=eq,
        bisectors=bis,
        outer=outer,
    )


def line_value(region: FeasibleRegion, j: int, p) -> float:
    a, b, c = region.lines[j % region.n]
    return float(a * p[0] + b * p[1] + c)


def signed_distances(region: FeasibleRegion, j: int, p) -> tuple[float, float]:
    """Signed distances from p to sector lines j and j+1 (unit-norm lines)."""
    return line_value(region, j, p), line_value(region, j + 1, p)


def feasible(region: FeasibleRegion, j: int, p) -> FeasibilityVerdict:
    """Wedge, annulus and outer-border membership for anchor slot j."""
    left, right = signed_distances(region, j, p)
    rel = np.asarray(p, dtype=np.float64) - region.center
    sector_ok = bool(left * right < 0.0 and float(rel @ region.bisectors[j % region.n]) > 0.0)
    annulus_ok = bool(math.hypot(rel[0], rel[1]) > region.inner_radius)
    x_l, x_r, y_d, y_u = region.outer
    outer_ok = bool(x_l <= p[0] <= x_r and y_d <= p[1] <= y_u)
    return FeasibilityVerdict(sector_ok, annulus_ok, outer_ok)


def repair(region: FeasibleRegion, j: int, proposed, fallback, max_steps: int = 8) -> np.ndarray:
    """Return `proposed` if feasible, else bisect toward the feasible `fallback`.

    The first feasible midpoint iterate wins; after max_steps the fallback is
    returned unchanged.
    """
    fallback = np.asarray(fallback, dtype=np.float64)
    if not feasible(region, j, fallback).rho:
        raise ValueError("repair fallback must itself be feasible")
    cur = np.asarray(proposed, dtype=np.float64)
    if feasible(region, j, cur).rho:
        return cur
    for _ in range(max_steps):
        cur = (cur + fallback) / 2.0
        if feasible(region, j, cur).rho:
            return cur
    return fallback.copy()


def random_feasible_point(region: FeasibleRegion, j: int, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """Uniform sample over anchor slot j's feasible region (rejection from the outer box)."""
    x_l, x_r, y_d, y_u = region.outer
    for _ in range(max_tries):
        p = np.array([rng.uniform(x_l, x_r), rng.uniform(y_d, y_u)])
        if feasible(region, j, p).rho:
            return p
    raise RuntimeError("could not sample a feasible point; region nearly empty")


def region_initial_anchors(region: FeasibleRegion) -> np.ndarray:
    """The anchor layout this region was built around (always feasible)."""
    return initial_anchors(region.center, region.radius, region.n)
