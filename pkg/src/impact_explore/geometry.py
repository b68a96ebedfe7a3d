"""Planar geometry kernels: angle wrapping, ray casting, swept-disc collision.

Walls are line segments stored as float64 arrays of shape (N, 4) holding
(x1, y1, x2, y2) in meters. All angles are degrees unless a name says
otherwise. The world frame is x-east / y-north with headings measured
counterclockwise from +x.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "wrap_angle",
    "rotate",
    "ray_depths",
    "first_contact",
    "point_segment_distance",
    "segment_cells",
]


def wrap_angle(theta_deg):
    """Wrap an angle (scalar or array) in degrees to (-180, 180]."""
    wrapped = -((180.0 - np.asarray(theta_deg, dtype=np.float64)) % 360.0 - 180.0)
    if np.ndim(theta_deg) == 0:
        return float(wrapped)
    return wrapped


def rotate(vec_x, vec_y, theta_deg):
    """Rotate vector(s) counterclockwise by ``theta_deg``."""
    rad = math.radians(theta_deg)
    c, s = math.cos(rad), math.sin(rad)
    return c * vec_x - s * vec_y, s * vec_x + c * vec_y


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def ray_depths(origin, directions, segments, max_range):
    """Distance from ``origin`` to the first segment hit along each ray.

    ``directions`` is (R, 2) of unit vectors; returns (R,) depths capped at
    ``max_range``. Rays that hit nothing report exactly ``max_range``.
    """
    directions = np.asarray(directions, dtype=np.float64)
    depths = np.full(directions.shape[0], float(max_range))
    if segments.shape[0] == 0:
        return depths
    ox, oy = float(origin[0]), float(origin[1])
    ax, ay = segments[:, 0], segments[:, 1]
    sx, sy = segments[:, 2] - ax, segments[:, 3] - ay
    qx, qy = ax - ox, ay - oy
    dx = directions[:, 0][:, None]
    dy = directions[:, 1][:, None]
    denom = _cross(dx, dy, sx[None, :], sy[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(qx[None, :], qy[None, :], sx[None, :], sy[None, :]) / denom
        u = _cross(qx[None, :], qy[None, :], dx, dy) / denom
    valid = (np.abs(denom) > 1e-14) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(valid, t, np.inf)
    np.minimum(depths, t.min(axis=1), out=depths)
    return depths


def first_contact(start, disp, segments, radius):
    """First parameter t in [0, 1] where a disc moving ``start + t*disp``
    touches any segment, or None when the sweep is collision free.

    Only approaching contacts count: a disc already within ``radius`` of a
    segment may still move away from it.
    """
    if segments.shape[0] == 0:
        return None
    px, py = float(start[0]), float(start[1])
    mx, my = float(disp[0]), float(disp[1])
    move2 = mx * mx + my * my
    if move2 == 0.0:
        return None

    ax, ay = segments[:, 0], segments[:, 1]
    bx, by = segments[:, 2], segments[:, 3]
    ex, ey = bx - ax, by - ay
    seg_len = np.hypot(ex, ey)
    ok = seg_len > 1e-12
    ux = np.where(ok, ex / np.where(ok, seg_len, 1.0), 0.0)
    uy = np.where(ok, ey / np.where(ok, seg_len, 1.0), 0.0)

    best = np.inf

    # Contact with the segment interior: signed perpendicular distance
    # f(t) = f0 + t*f1 crosses +/- radius while the tangential coordinate
    # stays within [0, seg_len].
    f0 = _cross(px - ax, py - ay, ux, uy)
    f1 = _cross(mx, my, ux, uy)
    s0 = (px - ax) * ux + (py - ay) * uy
    s1 = mx * ux + my * uy
    for sign in (1.0, -1.0):
        target = sign * radius
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (target - f0) / f1
        approach = sign * f1 < 0.0
        s_at = s0 + t * s1
        valid = ok & approach & np.isfinite(t) & (t >= 0.0) & (t <= 1.0)
        valid &= (s_at >= 0.0) & (s_at <= seg_len)
        if np.any(valid):
            best = min(best, float(t[valid].min()))
    # Already overlapping the interior band and moving inward.
    inside = ok & (np.abs(f0) < radius) & (s0 >= 0.0) & (s0 <= seg_len)
    inside &= f0 * f1 < 0.0
    if np.any(inside):
        best = 0.0

    # Contact with segment endpoints: quadratic |p + t*m - e|^2 = r^2.
    for epx, epy in ((ax, ay), (bx, by)):
        wx, wy = px - epx, py - epy
        b = 2.0 * (mx * wx + my * wy)
        cc = wx * wx + wy * wy - radius * radius
        disc = b * b - 4.0 * move2 * cc
        has = disc >= 0.0
        sq = np.sqrt(np.where(has, disc, 0.0))
        t = (-b - sq) / (2.0 * move2)
        valid = has & (t >= 0.0) & (t <= 1.0) & (cc > 0.0)
        if np.any(valid):
            best = min(best, float(t[valid].min()))
        overlap = has & (cc <= 0.0) & (b < 0.0)
        if np.any(overlap):
            best = 0.0

    return None if best is np.inf or not math.isfinite(best) else best


def point_segment_distance(points, segments):
    """Min distance from each point (M, 2) to any segment (N, 4) -> (M,)."""
    points = np.asarray(points, dtype=np.float64)
    out = np.full(points.shape[0], np.inf)
    if segments.shape[0] == 0:
        return out
    px, py = points[:, 0], points[:, 1]
    for k in range(segments.shape[0]):
        ax, ay, bx, by = segments[k]
        ex, ey = bx - ax, by - ay
        ll = ex * ex + ey * ey
        if ll < 1e-18:
            d = np.hypot(px - ax, py - ay)
        else:
            t = np.clip(((px - ax) * ex + (py - ay) * ey) / ll, 0.0, 1.0)
            d = np.hypot(px - (ax + t * ex), py - (ay + t * ey))
        np.minimum(out, d, out=out)
    return out


def segment_cells(segments, origin, resolution, shape):
    """Boolean grid marking every cell a segment passes through.

    Cells are indexed (ix, iy) with cell (0, 0) spanning
    [origin, origin + resolution) on both axes. Sampling step is a quarter
    cell, dense enough that walls raster without pinholes.
    """
    grid = np.zeros(shape, dtype=bool)
    step = resolution / 4.0
    ox, oy = origin
    for k in range(segments.shape[0]):
        ax, ay, bx, by = segments[k]
        length = math.hypot(bx - ax, by - ay)
        n = max(2, int(length / step) + 1)
        t = np.linspace(0.0, 1.0, n)
        xs = ax + t * (bx - ax)
        ys = ay + t * (by - ay)
        ix = np.floor((xs - ox) / resolution).astype(np.int64)
        iy = np.floor((ys - oy) / resolution).astype(np.int64)
        keep = (ix >= 0) & (ix < shape[0]) & (iy >= 0) & (iy < shape[1])
        grid[ix[keep], iy[keep]] = True
    return grid
