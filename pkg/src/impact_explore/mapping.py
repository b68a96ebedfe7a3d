"""Occupancy mapping: local map projection, registration, pose tracking.

Maps are float32 arrays with two channels: [..., 0] occupied probability,
[..., 1] explored probability, both in [0, 1] with explored >= occupied.

Local maps are (V, V, 2) in the agent frame: axis 0 is forward distance
(the agent sits at the near edge), axis 1 is lateral with +left increasing,
centered at index V//2. Global maps are (W, W, 2) in the estimated frame
with estimated (0, 0) at cell (W//2, W//2). One cell covers
``resolution`` (5 cm) squared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import rotate, wrap_angle
from .worldsim import Observation, OdometryDelta, Pose, SensorConfig

__all__ = [
    "MapConfig",
    "PoseSearchConfig",
    "AugmentedMap",
    "new_local_map",
    "new_global_map",
    "project_local_map",
    "update_pose",
    "correct_pose",
    "register_local_map",
    "augment_map",
    "maxpool_to",
    "action_cell_of_pool_index",
    "global_cell_of",
    "world_of_global_cell",
    "explored_area_m2",
    "write_pgm",
    "export_map_pgm",
]


class PoseOutOfBoundsError(ValueError):
    """Registration pose falls outside the global map."""


@dataclass
class MapConfig:
    resolution: float = 0.05
    local_size: int = 101  # V
    global_size: int = 961  # W
    policy_size: int = 240  # H


@dataclass
class PoseSearchConfig:
    """Search window for map-alignment pose correction."""

    window_xy: float = 0.05  # meters, +/-
    window_theta: float = 2.0  # degrees, +/-
    steps_xy: int = 5
    steps_theta: int = 5
    min_points: int = 8  # occupied scan cells needed before correcting
    min_overlap: float = 0.25  # fraction of scan points on explored map


@dataclass
class AugmentedMap:
    """Global policy input: the 4-channel full map and the (H, H, 8) stack
    of agent-centered crop plus max-pooled full map."""

    full: np.ndarray  # (W, W, 4)
    policy_input: np.ndarray  # (H, H, 8)


def new_local_map(v: int) -> np.ndarray:
    return np.zeros((v, v, 2), dtype=np.float32)


def new_global_map(w: int) -> np.ndarray:
    return np.zeros((w, w, 2), dtype=np.float32)


def _local_cell(fwd, lat, v, res):
    """Agent-frame point -> local map index arrays (may be out of range)."""
    i = np.floor(fwd / res).astype(np.int64)
    j = np.floor(lat / res + 0.5).astype(np.int64) + v // 2
    return i, j


def local_cell_center(i, j, v, res):
    return (i + 0.5) * res, (j - v // 2) * res


def project_local_map(obs: Observation, sensor: SensorConfig, cfg: MapConfig) -> np.ndarray:
    """Rasterize a depth scan into a fresh local map.

    Cells along each ray up to the hit are marked explored and free; the
    hit cell is explored and occupied; everything beyond stays unknown.
    """
    v, res = cfg.local_size, cfg.resolution
    local = new_local_map(v)
    bearings = np.radians(sensor.bearings())
    cos_b, sin_b = np.cos(bearings), np.sin(bearings)
    depth = obs.depth

    step_len = res / 2.0
    n_steps = int(np.ceil(sensor.max_range / step_len)) + 1
    ts = np.arange(n_steps) * step_len
    tt = np.broadcast_to(ts, (len(bearings), n_steps))
    free = tt <= (depth[:, None] - 1e-9)
    i, j = _local_cell(tt * cos_b[:, None], tt * sin_b[:, None], v, res)
    ok = free & (i >= 0) & (i < v) & (j >= 0) & (j < v)
    local[i[ok], j[ok], 1] = 1.0

    hit = depth < sensor.max_range - 1e-9
    if np.any(hit):
        hi, hj = _local_cell(depth[hit] * cos_b[hit], depth[hit] * sin_b[hit], v, res)
        ok = (hi >= 0) & (hi < v) & (hj >= 0) & (hj < v)
        local[hi[ok], hj[ok], 0] = 1.0
        local[hi[ok], hj[ok], 1] = 1.0
    return local


def update_pose(prev: Pose, delta: OdometryDelta) -> Pose:
    """Dead-reckoning update: rotate the body-frame delta into the world
    frame of the prior pose, add, and renormalize the heading."""
    wx, wy = rotate(delta.dx, delta.dy, prev.theta)
    return Pose(prev.x + wx, prev.y + wy, prev.theta + delta.dtheta)


def global_cell_of(x: float, y: float, w: int, res: float) -> tuple[int, int]:
    """Estimated-frame point -> global cell; (0,0) lands on (W//2, W//2)."""
    return (
        int(math.floor(x / res + 0.5)) + w // 2,
        int(math.floor(y / res + 0.5)) + w // 2,
    )


def world_of_global_cell(i, j, w: int, res: float):
    """Center coordinates of a global cell in the estimated frame."""
    return (np.asarray(i) - w // 2) * res, (np.asarray(j) - w // 2) * res


def _scan_points(local: np.ndarray, res: float, channel: int):
    """Agent-frame centers of cells set on the given channel."""
    v = local.shape[0]
    idx = np.argwhere(local[:, :, channel] >= 0.5)
    fwd = (idx[:, 0] + 0.5) * res
    lat = (idx[:, 1] - v // 2) * res
    return fwd, lat


def correct_pose(
    guess: Pose,
    local: np.ndarray,
    global_map: np.ndarray,
    search: PoseSearchConfig | None = None,
    res: float = 0.05,
) -> Pose:
    """Scan-to-map alignment over a small pose window around ``guess``.

    Scores candidate poses by how well the scan's occupied cells land on
    already-mapped occupied cells; returns the guess untouched when the map
    offers no evidence (too few scan points, or too little of the scan
    falls on explored map). Never returns a pose outside the window.
    """
    search = search or PoseSearchConfig()
    w = global_map.shape[0]
    fwd, lat = _scan_points(local, res, channel=0)
    if fwd.shape[0] < search.min_points:
        return guess

    def sample(channel, pose_x, pose_y, pose_t):
        c, s = math.cos(math.radians(pose_t)), math.sin(math.radians(pose_t))
        gx = pose_x + c * fwd - s * lat
        gy = pose_y + s * fwd + c * lat
        i = np.floor(gx / res + 0.5).astype(np.int64) + w // 2
        j = np.floor(gy / res + 0.5).astype(np.int64) + w // 2
        ok = (i >= 0) & (i < w) & (j >= 0) & (j < w)
        vals = np.zeros(fwd.shape[0], dtype=np.float32)
        vals[ok] = global_map[i[ok], j[ok], channel]
        return vals

    overlap = float(np.mean(sample(1, guess.x, guess.y, guess.theta) >= 0.5))
    if overlap < search.min_overlap:
        return guess

    dxs = np.linspace(-search.window_xy, search.window_xy, search.steps_xy)
    dts = np.linspace(-search.window_theta, search.window_theta, search.steps_theta)
    if search.window_xy == 0:
        dxs = np.array([0.0])
    if search.window_theta == 0:
        dts = np.array([0.0])

    best = (-np.inf, np.inf, guess)
    for dt in dts:
        for dx in dxs:
            for dy in dxs:
                score = float(np.mean(sample(0, guess.x + dx, guess.y + dy, guess.theta + dt)))
                # Ties prefer the smallest perturbation, so a featureless
                # plateau leaves the guess unchanged.
                key = abs(dx) + abs(dy) + abs(dt) * (res / 2.0)
                if score > best[0] + 1e-12 or (abs(score - best[0]) <= 1e-12 and key < best[1]):
                    best = (score, key, Pose(guess.x + dx, guess.y + dy, guess.theta + dt))
    return best[2]


def register_local_map(global_map: np.ndarray, local: np.ndarray, pose: Pose, res: float = 0.05) -> np.ndarray:
    """Fuse a local map into the global map (in place) at the given pose.

    Fusion is cell-wise max on both channels, so registration is idempotent
    and the explored channel never decreases. Raises if the pose itself is
    off the map; footprint spilling past the edge is clipped.
    """
    w = global_map.shape[0]
    v = local.shape[0]
    pi, pj = global_cell_of(pose.x, pose.y, w, res)
    if not (0 <= pi < w and 0 <= pj < w):
        raise PoseOutOfBoundsError(f"pose ({pose.x:.2f}, {pose.y:.2f}) outside global map")

    rad = math.radians(pose.theta)
    c, s = math.cos(rad), math.sin(rad)
    half = v // 2
    # Bounding box of the rotated local footprint, in global cells.
    corners_f = np.array([0.0, v * res, 0.0, v * res])
    corners_l = np.array([-(half + 0.5) * res, -(half + 0.5) * res, (half + 0.5) * res, (half + 0.5) * res])
    cx = pose.x + c * corners_f - s * corners_l
    cy = pose.y + s * corners_f + c * corners_l
    i0 = max(0, int(math.floor(cx.min() / res + 0.5)) + w // 2 - 1)
    i1 = min(w, int(math.floor(cx.max() / res + 0.5)) + w // 2 + 2)
    j0 = max(0, int(math.floor(cy.min() / res + 0.5)) + w // 2 - 1)
    j1 = min(w, int(math.floor(cy.max() / res + 0.5)) + w // 2 + 2)
    if i0 >= i1 or j0 >= j1:
        return global_map

    gi, gj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    gx = (gi - w // 2) * res
    gy = (gj - w // 2) * res
    # Inverse transform into the agent frame, then to local indices.
    relx, rely = gx - pose.x, gy - pose.y
    fwd = c * relx + s * rely
    lat = -s * relx + c * rely
    li = np.floor(fwd / res).astype(np.int64)
    lj = np.floor(lat / res + 0.5).astype(np.int64) + half
    ok = (li >= 0) & (li < v) & (lj >= 0) & (lj < v)

    target = global_map[i0:i1, j0:j1]
    for ch in range(2):
        vals = np.zeros(gi.shape, dtype=np.float32)
        vals[ok] = local[li[ok], lj[ok], ch]
        np.maximum(target[:, :, ch], vals, out=target[:, :, ch])

    # Forward-scatter occupied cells so thin walls survive rotation aliasing.
    fwd_o, lat_o = _scan_points(local, res, channel=0)
    if fwd_o.shape[0]:
        gx = pose.x + c * fwd_o - s * lat_o
        gy = pose.y + s * fwd_o + c * lat_o
        oi = np.floor(gx / res + 0.5).astype(np.int64) + w // 2
        oj = np.floor(gy / res + 0.5).astype(np.int64) + w // 2
        ok = (oi >= 0) & (oi < w) & (oj >= 0) & (oj < w)
        global_map[oi[ok], oj[ok], 0] = 1.0
        global_map[oi[ok], oj[ok], 1] = 1.0
    return global_map


def maxpool_to(grid: np.ndarray, out_size: int) -> np.ndarray:
    """Max-pool (W, W, C) down to (H, H, C) by partitioning rows/columns at
    floor(i * W / H) boundaries (every input cell lands in one window)."""
    w = grid.shape[0]
    if out_size == w:
        return grid.copy()
    starts = (np.arange(out_size) * w) // out_size
    pooled = np.maximum.reduceat(grid, starts, axis=0)
    pooled = np.maximum.reduceat(pooled, starts, axis=1)
    return pooled


def action_cell_of_pool_index(gi: int, gj: int, w: int, h: int) -> tuple[int, int]:
    """Center global cell of a pooled window: the inverse of the pooling
    transform used to map H x H policy actions onto the global map."""
    return (int(((gi + 0.5) * w) // h), int(((gj + 0.5) * w) // h))


def augment_map(
    global_map: np.ndarray,
    pose: Pose,
    visited: np.ndarray,
    cfg: MapConfig,
) -> AugmentedMap:
    """Stack the global map with the agent one-hot and visited mask, then
    build the policy input: agent-centered H x H crop concatenated with the
    max-pooled full map (H, H, 8)."""
    w, h, res = cfg.global_size, cfg.policy_size, cfg.resolution
    pi, pj = global_cell_of(pose.x, pose.y, w, res)
    if not (0 <= pi < w and 0 <= pj < w):
        raise PoseOutOfBoundsError("pose outside global map")

    full = np.zeros((w, w, 4), dtype=np.float32)
    full[:, :, :2] = global_map
    full[pi, pj, 2] = 1.0
    full[:, :, 3] = visited

    crop = np.zeros((h, h, 4), dtype=np.float32)
    half = h // 2
    si0, si1 = pi - half, pi - half + h
    sj0, sj1 = pj - half, pj - half + h
    ci0, cj0 = max(0, -si0), max(0, -sj0)
    gi0, gj0 = max(0, si0), max(0, sj0)
    gi1, gj1 = min(w, si1), min(w, sj1)
    crop[ci0 : ci0 + (gi1 - gi0), cj0 : cj0 + (gj1 - gj0)] = full[gi0:gi1, gj0:gj1]

    pooled = maxpool_to(full, h)
    return AugmentedMap(full=full, policy_input=np.concatenate([crop, pooled], axis=2))


def explored_area_m2(global_map: np.ndarray, res: float = 0.05) -> float:
    """Area the agent's own map marks explored, in square meters."""
    return float(np.count_nonzero(global_map[:, :, 1] >= 0.5)) * res * res


def write_pgm(array: np.ndarray, path) -> None:
    """Write a [0, 1] array as binary PGM (P5), row 0 at the top."""
    img = np.clip(np.asarray(array, dtype=np.float64), 0.0, 1.0)
    data = (img * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def export_map_pgm(global_map: np.ndarray, base_path: str, trajectory=None, res: float = 0.05) -> list[str]:
    """Export explored/occupied channels plus a human-readable overlay
    (explored white, occupied black, unknown gray, trajectory mid-gray)."""
    w = global_map.shape[0]
    # Transpose + flip so +x is right and +y is up in the image.
    occ = np.flipud(global_map[:, :, 0].T)
    expl = np.flipud(global_map[:, :, 1].T)
    overlay = np.full((w, w), 0.5)
    overlay[expl >= 0.5] = 1.0
    overlay[occ >= 0.5] = 0.0
    if trajectory is not None:
        for x, y in trajectory:
            i, j = global_cell_of(x, y, w, res)
            if 0 <= i < w and 0 <= j < w:
                overlay[w - 1 - j, i] = 0.3
    paths = []
    for name, img in (("occupied", occ), ("explored", expl), ("overlay", overlay)):
        path = f"{base_path}_{name}.pgm"
        write_pgm(img, path)
        paths.append(path)
    return paths
