"""Procedural multi-room floorplans and their ground-truth rasters.

A floorplan is a set of wall segments plus derived data: a traversable-cell
mask at the map resolution (a cell is traversable iff it keeps at least the
agent radius of clearance from every wall) and a list of spawn poses. Plans
are generated by recursive splitting of the bounding rectangle, with a door
cut into every interior wall so the rooms stay connected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import point_segment_distance, segment_cells

MAP_RESOLUTION = 0.05  # meters per map cell, shared across the stack
AGENT_RADIUS = 0.18

# Ground-truth cell classes.
GT_OUTSIDE = 0
GT_FREE = 1
GT_OCCUPIED = 2


class GenerationError(RuntimeError):
    """Floorplan generation failed after bounded retries."""


@dataclass
class GenConfig:
    """Room-splitting parameters (meters)."""

    width: float = 15.0
    height: float = 15.0
    min_rooms: int = 4
    max_rooms: int = 8
    min_room_size: float = 3.0
    door_width: float = 0.9
    n_spawns: int = 8
    max_retries: int = 25

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("bounds must be positive")
        if not (1 <= self.min_rooms <= self.max_rooms):
            raise ValueError("need 1 <= min_rooms <= max_rooms")
        if self.min_room_size <= 0 or self.door_width <= 0:
            raise ValueError("room and door sizes must be positive")
        if self.min_room_size > min(self.width, self.height):
            raise ValueError("min room size exceeds the bounds")


@dataclass
class FloorPlan:
    """Ground-truth world: walls, bounds, clearance mask, spawn poses."""

    walls: np.ndarray  # (N, 4) segments, meters
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    traversable: np.ndarray  # bool (nx, ny) at MAP_RESOLUTION
    spawns: list[tuple[float, float, float]]  # (x, y, theta_deg)
    resolution: float = MAP_RESOLUTION
    agent_radius: float = AGENT_RADIUS
    _classes: np.ndarray | None = field(default=None, repr=False)

    @property
    def origin(self) -> tuple[float, float]:
        return self.bounds[0], self.bounds[1]

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.bounds[0] + (ix + 0.5) * self.resolution,
            self.bounds[1] + (iy + 0.5) * self.resolution,
        )

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (
            int(math.floor((x - self.bounds[0]) / self.resolution)),
            int(math.floor((y - self.bounds[1]) / self.resolution)),
        )

    def is_traversable(self, x: float, y: float) -> bool:
        ix, iy = self.cell_of(x, y)
        if 0 <= ix < self.traversable.shape[0] and 0 <= iy < self.traversable.shape[1]:
            return bool(self.traversable[ix, iy])
        return False

    def world_classes(self) -> np.ndarray:
        """Per-cell ground truth: outside / free interior / wall."""
        if self._classes is None:
            self._classes = _classify_cells(self)
        return self._classes

    def to_json(self) -> str:
        payload = {
            "bounds": list(self.bounds),
            "walls": [[float(v) for v in seg] for seg in self.walls],
            "spawns": [[float(v) for v in sp] for sp in self.spawns],
        }
        return json.dumps(payload, indent=2)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text: str, agent_radius: float = AGENT_RADIUS) -> "FloorPlan":
        payload = json.loads(text)
        walls = np.asarray(payload["walls"], dtype=np.float64).reshape(-1, 4)
        bounds = tuple(float(v) for v in payload["bounds"])
        spawns = [tuple(float(v) for v in sp) for sp in payload["spawns"]]
        traversable = _traversable_mask(walls, bounds, agent_radius)
        return cls(walls, bounds, traversable, spawns, MAP_RESOLUTION, agent_radius)

    @classmethod
    def load(cls, path, agent_radius: float = AGENT_RADIUS) -> "FloorPlan":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read(), agent_radius)


def _grid_shape(bounds, resolution):
    nx = int(round((bounds[2] - bounds[0]) / resolution))
    ny = int(round((bounds[3] - bounds[1]) / resolution))
    return nx, ny


def _traversable_mask(walls, bounds, agent_radius, resolution=MAP_RESOLUTION):
    nx, ny = _grid_shape(bounds, resolution)
    xs = bounds[0] + (np.arange(nx) + 0.5) * resolution
    ys = bounds[1] + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    dist = point_segment_distance(pts, walls).reshape(nx, ny)
    clearance = agent_radius + 0.02
    mask = dist >= clearance
    # Stay clear of the outer boundary as well.
    mask &= (gx >= bounds[0] + clearance) & (gx <= bounds[2] - clearance)
    mask &= (gy >= bounds[1] + clearance) & (gy <= bounds[3] - clearance)
    return mask


def _flood_components(mask):
    """Label 4-connected components of a boolean grid."""
    from scipy import ndimage

    labels, count = ndimage.label(mask, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
    return labels, count


def _split_rooms(rng, cfg):
    """Recursively split the bounding rectangle; returns interior wall specs
    as (axis, coord, lo, hi) with a door interval cut later."""
    target = int(rng.integers(cfg.min_rooms, cfg.max_rooms + 1))
    rooms = [(0.0, 0.0, cfg.width, cfg.height)]
    walls = []
    while len(rooms) < target:
        # Split the room with the longest splittable side.
        order = sorted(
            range(len(rooms)),
            key=lambda i: max(rooms[i][2] - rooms[i][0], rooms[i][3] - rooms[i][1]),
            reverse=True,
        )
        done = True
        for idx in order:
            x0, y0, x1, y1 = rooms[idx]
            w, h = x1 - x0, y1 - y0
            axis = 0 if w >= h else 1
            side = w if axis == 0 else h
            if side < 2 * cfg.min_room_size:
                continue
            cut = float(rng.uniform(cfg.min_room_size, side - cfg.min_room_size))
            if axis == 0:
                xc = x0 + cut
                rooms[idx] = (x0, y0, xc, y1)
                rooms.append((xc, y0, x1, y1))
                walls.append((0, xc, y0, y1))
            else:
                yc = y0 + cut
                rooms[idx] = (x0, y0, x1, yc)
                rooms.append((x0, yc, x1, y1))
                walls.append((1, yc, x0, x1))
            done = False
            break
        if done:
            break
    return rooms, walls


def _wall_segments(rng, cfg, interior):
    segs = [
        (0.0, 0.0, cfg.width, 0.0),
        (cfg.width, 0.0, cfg.width, cfg.height),
        (cfg.width, cfg.height, 0.0, cfg.height),
        (0.0, cfg.height, 0.0, 0.0),
    ]
    for axis, coord, lo, hi in interior:
        span = hi - lo
        door = min(cfg.door_width, 0.5 * span)
        start = float(rng.uniform(lo + 0.1 * span, hi - 0.1 * span - door))
        pieces = [(lo, start), (start + door, hi)]
        for a, b in pieces:
            if b - a < 1e-6:
                continue
            if axis == 0:
                segs.append((coord, a, coord, b))
            else:
                segs.append((a, coord, b, coord))
    return np.asarray(segs, dtype=np.float64)


def generate_floorplan(seed: int, cfg: GenConfig | None = None) -> FloorPlan:
    """Deterministic procedural floorplan with connected traversable space
    and at least 4 spawn poses."""
    cfg = cfg or GenConfig()
    cfg.validate()
    base = np.random.SeedSequence([int(seed), 0x1F00])
    for attempt in range(cfg.max_retries):
        rng = np.random.default_rng(base.spawn(1)[0]) if attempt else np.random.default_rng(base)
        _, interior = _split_rooms(rng, cfg)
        walls = _wall_segments(rng, cfg, interior)
        bounds = (0.0, 0.0, cfg.width, cfg.height)
        mask = _traversable_mask(walls, bounds, AGENT_RADIUS)
        labels, count = _flood_components(mask)
        if count == 0:
            continue
        sizes = np.bincount(labels.ravel())[1:]
        main = int(np.argmax(sizes)) + 1
        if sizes[main - 1] < 0.9 * mask.sum():
            continue  # doors failed to connect the rooms; retry
        mask = labels == main
        spawn_ok = mask & (_spawn_clearance(walls, bounds) >= AGENT_RADIUS + 0.06)
        idx = np.argwhere(spawn_ok)
        if idx.shape[0] < cfg.n_spawns:
            continue
        choice = rng.choice(idx.shape[0], size=cfg.n_spawns, replace=False)
        spawns = []
        for k in choice:
            ix, iy = idx[k]
            x = bounds[0] + (ix + 0.5) * MAP_RESOLUTION
            y = bounds[1] + (iy + 0.5) * MAP_RESOLUTION
            theta = float(rng.uniform(-180.0, 180.0))
            if theta <= -180.0:
                theta = 180.0
            spawns.append((float(x), float(y), theta))
        return FloorPlan(walls, bounds, mask, spawns)
    raise GenerationError(f"floorplan generation failed after {cfg.max_retries} attempts")


def _spawn_clearance(walls, bounds, resolution=MAP_RESOLUTION):
    nx, ny = _grid_shape(bounds, resolution)
    xs = bounds[0] + (np.arange(nx) + 0.5) * resolution
    ys = bounds[1] + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return point_segment_distance(pts, walls).reshape(nx, ny)


def _classify_cells(plan: FloorPlan) -> np.ndarray:
    """0 outside, 1 free interior, 2 wall.

    Interior is flood-filled from the first spawn so sealed pockets count as
    outside; only wall cells bordering the interior are classed occupied,
    since nothing else is observable from inside.
    """
    from scipy import ndimage

    nx, ny = plan.traversable.shape
    wall = segment_cells(plan.walls, plan.origin, plan.resolution, (nx, ny))
    open_cells = ~wall
    labels, _ = ndimage.label(
        open_cells, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    )
    sx, sy = plan.cell_of(plan.spawns[0][0], plan.spawns[0][1])
    interior_label = labels[sx, sy]
    interior = labels == interior_label if interior_label > 0 else np.zeros_like(wall)
    near_interior = ndimage.binary_dilation(interior, structure=np.ones((3, 3)))
    classes = np.full((nx, ny), GT_OUTSIDE, dtype=np.int8)
    classes[interior] = GT_FREE
    classes[wall & near_interior] = GT_OCCUPIED
    return classes
