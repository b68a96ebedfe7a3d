"""Agent kinematics, actuation/odometry noise, raycast sensing, episodes.

The action set is discrete: forward 0.25 m, turn left 10 deg, turn right
10 deg. Motion is truncated at the first disc-vs-wall contact and the step
reports a bump. Odometry reports the nominal (commanded) displacement,
scaled by the same collision truncation and corrupted by sensor noise, so
with all noise disabled dead reckoning is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .floorplan import FloorPlan
from .geometry import first_contact, ray_depths, rotate, wrap_angle

FORWARD_STEP = 0.25  # meters
TURN_STEP = 10.0  # degrees
CONTACT_BACKOFF = 1e-4  # meters kept between disc and wall after a bump

VIEW_OCCLUDED = 0.5
VIEW_FREE = 1.0
VIEW_WALL = 0.0


class Action(IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2


@dataclass(frozen=True)
class Pose:
    """Agent pose; theta in degrees, normalized to (-180, 180]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class OdometryDelta:
    """Reported displacement in the prior-pose frame (dx forward-ish, dy
    left-ish when theta was 0) plus heading change in degrees."""

    dx: float
    dy: float
    dtheta: float


@dataclass
class NoiseModel:
    """Per-action diagonal Gaussian actuation noise plus independent sensor
    noise on the odometry reading. Stds are (sigma_x, sigma_y, sigma_theta)
    in the pre-step body frame; zero stds reproduce nominal kinematics."""

    action_stds: dict = field(default_factory=dict)
    sensor_stds: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        for stds in list(self.action_stds.values()) + [self.sensor_stds]:
            if any(s < 0 for s in stds):
                raise ValueError("noise std-devs must be non-negative")
        self._rng = np.random.default_rng(self.seed)

    @classmethod
    def zero(cls, seed: int = 0) -> "NoiseModel":
        return cls({a: (0.0, 0.0, 0.0) for a in Action}, (0.0, 0.0, 0.0), seed)

    @classmethod
    def default(cls, seed: int = 0) -> "NoiseModel":
        stds = (0.01, 0.005, 0.5)
        return cls({a: stds for a in Action}, stds, seed)

    def reseed(self, seed: int) -> None:
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def sample(self, action: Action) -> tuple[np.ndarray, np.ndarray]:
        """Draw (actuation, sensor) noise triples; always consumes the same
        number of variates so zero-noise runs stay stream-compatible."""
        stds = np.asarray(self.action_stds.get(action, (0.0, 0.0, 0.0)))
        act = self._rng.standard_normal(3) * stds
        sen = self._rng.standard_normal(3) * np.asarray(self.sensor_stds)
        return act, sen


@dataclass
class Observation:
    """Depth scan plus the top-down egocentric visibility image."""

    depth: np.ndarray  # (R,) meters, capped at max_range
    view: np.ndarray  # (P, P) grayscale in [0, 1], agent facing up


@dataclass(frozen=True)
class StepOutcome:
    true_pose: Pose
    odometry: OdometryDelta
    bump: bool


@dataclass
class SensorConfig:
    n_rays: int = 128
    fov_deg: float = 90.0
    max_range: float = 5.0
    view_size: int = 42  # P

    def bearings(self) -> np.ndarray:
        """Ray bearings in degrees relative to heading; positive is left."""
        half = self.fov_deg / 2.0
        return np.linspace(-half, half, self.n_rays)


def step(pose: Pose, action: Action, noise: NoiseModel, plan: FloorPlan) -> StepOutcome:
    """Advance one atomic action against the floorplan walls.

    Translation is truncated at the first disc contact (bump); rotation is
    never blocked. Odometry reports the truncation-scaled nominal motion
    plus sensor noise, never the actuation noise itself.
    """
    act_noise, sen_noise = noise.sample(action)
    if action == Action.FORWARD:
        nominal = np.array([FORWARD_STEP, 0.0, 0.0])
    elif action == Action.TURN_LEFT:
        nominal = np.array([0.0, 0.0, TURN_STEP])
    else:
        nominal = np.array([0.0, 0.0, -TURN_STEP])

    local_dx = nominal[0] + act_noise[0]
    local_dy = nominal[1] + act_noise[1]
    dtheta = nominal[2] + act_noise[2]

    wx, wy = rotate(local_dx, local_dy, pose.theta)
    disp = np.array([wx, wy])
    move = math.hypot(wx, wy)
    bump = False
    t_eff = 1.0
    if move > 0.0:
        t_hit = first_contact(pose.xy, disp, plan.walls, plan.agent_radius)
        if t_hit is not None:
            bump = True
            t_eff = max(0.0, t_hit - CONTACT_BACKOFF / move)

    new_pose = Pose(pose.x + t_eff * wx, pose.y + t_eff * wy, pose.theta + dtheta)
    odom = OdometryDelta(
        t_eff * nominal[0] + sen_noise[0],
        t_eff * nominal[1] + sen_noise[1],
        nominal[2] + sen_noise[2],
    )
    return StepOutcome(new_pose, odom, bump)


def sense(pose: Pose, plan: FloorPlan, sensor: SensorConfig) -> Observation:
    """Depth scan over the field of view plus the egocentric view image.

    The view renders what the scan saw: free space 1.0, wall hits 0.0 and
    everything unseen 0.5, in a square of side ``max_range`` with the agent
    at the bottom-center facing up.
    """
    bearings = sensor.bearings()
    angles = np.radians(pose.theta + bearings)
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    depth = ray_depths(pose.xy, dirs, plan.walls, sensor.max_range)

    view = _render_view(depth, bearings, sensor)
    return Observation(depth=depth, view=view)


def _render_view(depth, bearings, sensor: SensorConfig) -> np.ndarray:
    p = sensor.view_size
    res = sensor.max_range / p
    view = np.full((p, p), VIEW_OCCLUDED, dtype=np.float64)

    rad = np.radians(bearings)
    cos_b, sin_b = np.cos(rad), np.sin(rad)
    n_steps = int(np.ceil(sensor.max_range / (res / 2.0))) + 1
    ts = np.arange(n_steps) * (res / 2.0)
    # (R, S) sample points along each ray, masked beyond its depth.
    tt = np.broadcast_to(ts, (len(bearings), n_steps))
    free = tt <= (depth[:, None] - 1e-9)
    fwd = tt * cos_b[:, None]
    lat = tt * sin_b[:, None]
    rows = p - 1 - np.floor(fwd / res).astype(np.int64)
    cols = p // 2 - np.rint(lat / res).astype(np.int64)
    ok = free & (rows >= 0) & (rows < p) & (cols >= 0) & (cols < p)
    view[rows[ok], cols[ok]] = VIEW_FREE

    hit = depth < sensor.max_range - 1e-9
    if np.any(hit):
        hf = depth[hit] * cos_b[hit]
        hl = depth[hit] * sin_b[hit]
        hr = p - 1 - np.floor(hf / res).astype(np.int64)
        hc = p // 2 - np.rint(hl / res).astype(np.int64)
        ok = (hr >= 0) & (hr < p) & (hc >= 0) & (hc < p)
        view[hr[ok], hc[ok]] = VIEW_WALL
    return view


@dataclass
class Episode:
    """Lifecycle of one exploration episode in a fixed world.

    Only ground-truth state lives here; estimated pose and maps belong to
    the mapping pipeline. The estimated frame is spawn-centered and
    spawn-aligned: the agent's internal pose starts at (0, 0, 0).
    """

    plan: FloorPlan
    spawn: Pose
    t_max: int
    noise: NoiseModel
    sensor: SensorConfig
    true_pose: Pose = field(init=False)
    t: int = field(init=False, default=0)
    bumps: int = field(init=False, default=0)

    def __post_init__(self):
        self.true_pose = self.spawn

    @property
    def done(self) -> bool:
        return self.t >= self.t_max

    def step(self, action: Action) -> StepOutcome:
        outcome = step(self.true_pose, action, self.noise, self.plan)
        self.true_pose = outcome.true_pose
        self.t += 1
        self.bumps += int(outcome.bump)
        return outcome

    def sense(self) -> Observation:
        return sense(self.true_pose, self.plan, self.sensor)

    def true_pose_in_est_frame(self) -> Pose:
        """Ground-truth pose expressed in the spawn-aligned estimated frame."""
        dx = self.true_pose.x - self.spawn.x
        dy = self.true_pose.y - self.spawn.y
        ex, ey = rotate(dx, dy, -self.spawn.theta)
        return Pose(ex, ey, self.true_pose.theta - self.spawn.theta)


def reset_episode(
    plan: FloorPlan,
    spawn_index: int,
    t_max: int,
    noise: NoiseModel | None = None,
    sensor: SensorConfig | None = None,
) -> Episode:
    """Start an episode at the given spawn; estimated pose convention is
    (0, 0, 0) regardless of the true spawn."""
    if not 0 <= spawn_index < len(plan.spawns):
        raise IndexError(f"spawn index {spawn_index} out of range")
    sx, sy, stheta = plan.spawns[spawn_index]
    return Episode(
        plan=plan,
        spawn=Pose(sx, sy, stheta),
        t_max=t_max,
        noise=noise or NoiseModel.zero(),
        sensor=sensor or SensorConfig(),
    )
