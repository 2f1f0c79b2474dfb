"""2D mapless-navigation simulator.

Differential-drive point agent with a body radius, 21-beam 360-degree lidar,
relative goal distance/heading observation, six discrete actions. Collisions
are non-terminal: motion into an obstacle or wall is blocked at the contact
point and the step reports cost=1, but the episode continues.

Three scenario kinds: "fixed" (random axis-aligned rectangles per seed),
"dynamic" (circles moving between random waypoints at constant speed) and
"evaluation" (a hand-authored held-out map).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .spaces import N_ACTIONS, N_LIDAR, OBS_DIM

ENV_KINDS = ("fixed", "dynamic", "evaluation")

# action -> (linear velocity factor, angular velocity factor)
ACTION_MAP = (
    (1.0, 0.0),    # forward
    (1.0, 1.0),    # forward-left
    (1.0, -1.0),   # forward-right
    (0.0, 1.0),    # rotate left in place
    (0.0, -1.0),   # rotate right in place
    (0.0, 0.0),    # stay
)


@dataclass
class EnvConfig:
    arena_w: float = 10.0
    arena_h: float = 10.0
    agent_radius: float = 0.15
    v_max: float = 0.25
    omega_max: float = 1.5
    dt: float = 0.2
    lidar_range: float = 3.5
    goal_threshold: float = 0.3
    horizon: int = 500
    reward_scale: float = 1.0
    goal_bonus: float = 1.0
    n_fixed_obstacles: int = 5
    n_dynamic_obstacles: int = 4
    dynamic_speed: float = 0.15
    dynamic_radius: float = 0.3
    spawn_margin: float = 0.5
    min_start_goal_dist: float = 1.0


@dataclass
class Obstacle:
    shape: str                      # "rect" or "circle"
    cx: float
    cy: float
    w: float = 0.0                  # rect only
    h: float = 0.0
    radius: float = 0.0             # circle only
    speed: float = 0.0              # circle only; 0 = static
    waypoint: tuple = (0.0, 0.0)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    cost: int
    done: bool
    info: dict


def _ray_segment(px, py, dx, dy, ax, ay, bx, by):
    """Distance along unit ray (px,py)+(dx,dy)t to segment a-b, or inf."""
    ex, ey = bx - ax, by - ay
    denom = dx * ey - dy * ex
    if abs(denom) < 1e-12:
        return math.inf
    apx, apy = ax - px, ay - py
    t = (apx * ey - apy * ex) / denom
    s = (apx * dy - apy * dx) / denom
    if t >= 0.0 and 0.0 <= s <= 1.0:
        return t
    return math.inf


def _ray_circle(px, py, dx, dy, cx, cy, r):
    """Distance along unit ray to circle surface, or inf."""
    ox, oy = px - cx, py - cy
    b = 2.0 * (dx * ox + dy * oy)
    c = ox * ox + oy * oy - r * r
    disc = b * b - 4.0 * c
    if disc < 0.0:
        return math.inf
    sq = math.sqrt(disc)
    t = (-b - sq) / 2.0
    if t < 0.0:
        t = (-b + sq) / 2.0
    return t if t >= 0.0 else math.inf


def _rect_edges(ob: Obstacle):
    x0, x1 = ob.cx - ob.w / 2.0, ob.cx + ob.w / 2.0
    y0, y1 = ob.cy - ob.h / 2.0, ob.cy + ob.h / 2.0
    return (
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    )


def _dist_point_rect(px, py, ob: Obstacle):
    nx = min(max(px, ob.cx - ob.w / 2.0), ob.cx + ob.w / 2.0)
    ny = min(max(py, ob.cy - ob.h / 2.0), ob.cy + ob.h / 2.0)
    return math.hypot(px - nx, py - ny)


class NavEnv:
    """Single-owner mutable environment; all randomness flows from the seed."""

    def __init__(self, kind: str, seed: int, config: EnvConfig = None,
                 obstacles: list = None):
        if kind not in ENV_KINDS:
            raise ValueError(f"unknown environment kind: {kind!r}")
        self.kind = kind
        self.cfg = config or EnvConfig()
        self.rng = np.random.default_rng(seed)
        if obstacles is not None:
            self._initial_obstacles = [replace(ob) for ob in obstacles]
        else:
            self._initial_obstacles = self._generate_layout()
        self.obstacles = [replace(ob) for ob in self._initial_obstacles]
        self.agent = np.zeros(3)        # x, y, heading
        self.goal = np.zeros(2)
        self.step_count = 0
        self._goal_dist = 0.0

    # --- layout -------------------------------------------------------------

    def _generate_layout(self):
        cfg = self.cfg
        obs = []
        if self.kind == "fixed":
            for _ in range(cfg.n_fixed_obstacles):
                w = float(self.rng.uniform(0.6, 1.6))
                h = float(self.rng.uniform(0.6, 1.6))
                cx = float(self.rng.uniform(1.5, cfg.arena_w - 1.5))
                cy = float(self.rng.uniform(1.5, cfg.arena_h - 1.5))
                obs.append(Obstacle("rect", cx, cy, w=w, h=h))
        elif self.kind == "dynamic":
            for _ in range(cfg.n_dynamic_obstacles):
                cx = float(self.rng.uniform(1.5, cfg.arena_w - 1.5))
                cy = float(self.rng.uniform(1.5, cfg.arena_h - 1.5))
                obs.append(Obstacle(
                    "circle", cx, cy, radius=cfg.dynamic_radius,
                    speed=cfg.dynamic_speed,
                    waypoint=self._random_waypoint(),
                ))
        else:  # evaluation: held-out hand-authored map, mixed obstacle types
            obs = [
                Obstacle("rect", 2.5, 2.5, w=1.4, h=0.8),
                Obstacle("rect", 7.0, 3.0, w=0.8, h=2.0),
                Obstacle("rect", 4.5, 6.5, w=2.2, h=0.7),
                Obstacle("rect", 8.0, 7.5, w=1.0, h=1.0),
                Obstacle("circle", 3.0, 8.0, radius=cfg.dynamic_radius,
                         speed=cfg.dynamic_speed, waypoint=(7.5, 1.8)),
                Obstacle("circle", 6.0, 5.0, radius=cfg.dynamic_radius,
                         speed=cfg.dynamic_speed, waypoint=(2.0, 4.5)),
            ]
        return obs

    def _random_waypoint(self):
        cfg = self.cfg
        m = cfg.dynamic_radius + 0.2
        return (
            float(self.rng.uniform(m, cfg.arena_w - m)),
            float(self.rng.uniform(m, cfg.arena_h - m)),
        )

    # --- geometry -----------------------------------------------------------

    def _clearance(self, px, py):
        """Distance from a point to the nearest obstacle surface or wall."""
        cfg = self.cfg
        d = min(px, py, cfg.arena_w - px, cfg.arena_h - py)
        for ob in self.obstacles:
            if ob.shape == "rect":
                d = min(d, _dist_point_rect(px, py, ob))
            else:
                d = min(d, math.hypot(px - ob.cx, py - ob.cy) - ob.radius)
        return d

    def _free(self, px, py):
        return self._clearance(px, py) >= self.cfg.agent_radius

    def lidar_scan(self) -> np.ndarray:
        """Beam i points at heading + i*(2*pi/n); readings normalized by the
        max range, 1.0 when nothing is within range."""
        cfg = self.cfg
        px, py, theta = self.agent
        out = np.empty(N_LIDAR)
        walls = (
            (0.0, 0.0, cfg.arena_w, 0.0),
            (cfg.arena_w, 0.0, cfg.arena_w, cfg.arena_h),
            (cfg.arena_w, cfg.arena_h, 0.0, cfg.arena_h),
            (0.0, cfg.arena_h, 0.0, 0.0),
        )
        for i in range(N_LIDAR):
            ang = theta + i * (2.0 * math.pi / N_LIDAR)
            dx, dy = math.cos(ang), math.sin(ang)
            t = math.inf
            for ax, ay, bx, by in walls:
                t = min(t, _ray_segment(px, py, dx, dy, ax, ay, bx, by))
            for ob in self.obstacles:
                if ob.shape == "rect":
                    for ax, ay, bx, by in _rect_edges(ob):
                        t = min(t, _ray_segment(px, py, dx, dy, ax, ay, bx, by))
                else:
                    t = min(t, _ray_circle(px, py, dx, dy, ob.cx, ob.cy, ob.radius))
            out[i] = min(t, cfg.lidar_range) / cfg.lidar_range
        return out

    def _observe(self) -> np.ndarray:
        cfg = self.cfg
        px, py, theta = self.agent
        gx, gy = self.goal
        diag = math.hypot(cfg.arena_w, cfg.arena_h)
        dist = math.hypot(gx - px, gy - py)
        bearing = math.atan2(gy - py, gx - px) - theta
        bearing = (bearing + math.pi) % (2.0 * math.pi) - math.pi
        obs = np.empty(OBS_DIM)
        obs[:N_LIDAR] = self.lidar_scan()
        obs[N_LIDAR] = min(dist / diag, 1.0)
        obs[N_LIDAR + 1] = bearing / math.pi
        return obs

    # --- episode API ---------------------------------------------------------

    def _sample_free_point(self, clearance):
        cfg = self.cfg
        m = cfg.spawn_margin
        for _ in range(1000):
            x = float(self.rng.uniform(m, cfg.arena_w - m))
            y = float(self.rng.uniform(m, cfg.arena_h - m))
            if self._clearance(x, y) >= clearance:
                return x, y
        raise RuntimeError("could not place a collision-free point in 1000 tries")

    def reset(self) -> np.ndarray:
        cfg = self.cfg
        self.obstacles = [replace(ob) for ob in self._initial_obstacles]
        for ob in self.obstacles:
            if ob.shape == "circle" and ob.speed > 0.0:
                ob.waypoint = self._random_waypoint()
        ax, ay = self._sample_free_point(cfg.agent_radius + 0.1)
        theta = float(self.rng.uniform(-math.pi, math.pi))
        for _ in range(1000):
            gx, gy = self._sample_free_point(cfg.goal_threshold)
            if math.hypot(gx - ax, gy - ay) >= cfg.min_start_goal_dist:
                break
        else:
            raise RuntimeError("could not place a goal in 1000 tries")
        self.agent[:] = (ax, ay, theta)
        self.goal[:] = (gx, gy)
        self.step_count = 0
        self._goal_dist = math.hypot(gx - ax, gy - ay)
        return self._observe()

    def _move_obstacles(self):
        for ob in self.obstacles:
            if ob.shape != "circle" or ob.speed <= 0.0:
                continue
            budget = ob.speed * self.cfg.dt
            # exact step length; roll leftover distance onto the next waypoint
            while budget > 1e-12:
                wx, wy = ob.waypoint
                dist = math.hypot(wx - ob.cx, wy - ob.cy)
                if dist <= budget:
                    ob.cx, ob.cy = wx, wy
                    budget -= dist
                    ob.waypoint = self._random_waypoint()
                else:
                    ob.cx += (wx - ob.cx) / dist * budget
                    ob.cy += (wy - ob.cy) / dist * budget
                    budget = 0.0

    def step(self, action: int) -> StepResult:
        cfg = self.cfg
        if not (0 <= action < N_ACTIONS):
            raise ValueError(f"invalid action index: {action}")
        self._move_obstacles()

        vf, wf = ACTION_MAP[action]
        v = vf * cfg.v_max
        omega = wf * cfg.omega_max
        px, py, theta = self.agent
        theta = (theta + omega * cfg.dt + math.pi) % (2.0 * math.pi) - math.pi

        collided = False
        if v > 0.0:
            nx = px + v * cfg.dt * math.cos(theta)
            ny = py + v * cfg.dt * math.sin(theta)
            if self._free(nx, ny):
                px, py = nx, ny
            else:
                # block at contact: bisect for the farthest free point
                lo_t, hi_t = 0.0, 1.0
                for _ in range(40):
                    mid = 0.5 * (lo_t + hi_t)
                    mx = px + (nx - px) * mid
                    my = py + (ny - py) * mid
                    if self._free(mx, my):
                        lo_t = mid
                    else:
                        hi_t = mid
                px = px + (nx - px) * lo_t
                py = py + (ny - py) * lo_t
                collided = True
        self.agent[:] = (px, py, theta)

        # a moving obstacle can also run into the agent
        if not collided and not self._free(px, py):
            collided = True

        self.step_count += 1
        gx, gy = self.goal
        new_dist = math.hypot(gx - px, gy - py)
        reward = cfg.reward_scale * (self._goal_dist - new_dist)
        goal_reached = new_dist <= cfg.goal_threshold
        if goal_reached:
            reward += cfg.goal_bonus
        self._goal_dist = new_dist
        done = goal_reached or self.step_count >= cfg.horizon
        return StepResult(
            observation=self._observe(),
            reward=reward,
            cost=1 if collided else 0,
            done=done,
            info={"goal_reached": goal_reached, "collided": collided},
        )


def make_env(kind: str, seed: int, config: EnvConfig = None,
             scenario_path=None) -> NavEnv:
    if scenario_path is not None:
        arena, obstacles = load_scenario(scenario_path)
        config = replace(config or EnvConfig(), arena_w=arena[0], arena_h=arena[1])
        return NavEnv(kind, seed, config=config, obstacles=obstacles)
    return NavEnv(kind, seed, config=config)


# --- declarative scenario files ---------------------------------------------
#
#   arena <width> <height>
#   rect <cx> <cy> <w> <h>
#   circle <cx> <cy> <radius> <speed>

def dump_scenario(path, env: NavEnv) -> None:
    with open(path, "w") as fh:
        fh.write(f"arena {env.cfg.arena_w} {env.cfg.arena_h}\n")
        for ob in env._initial_obstacles:
            if ob.shape == "rect":
                fh.write(f"rect {ob.cx} {ob.cy} {ob.w} {ob.h}\n")
            else:
                fh.write(f"circle {ob.cx} {ob.cy} {ob.radius} {ob.speed}\n")


def load_scenario(path):
    arena = (10.0, 10.0)
    obstacles = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split("#")[0].split()
            if not parts:
                continue
            tag, args = parts[0], [float(x) for x in parts[1:]]
            if tag == "arena" and len(args) == 2:
                arena = (args[0], args[1])
            elif tag == "rect" and len(args) == 4:
                obstacles.append(Obstacle("rect", args[0], args[1],
                                          w=args[2], h=args[3]))
            elif tag == "circle" and len(args) == 4:
                obstacles.append(Obstacle("circle", args[0], args[1],
                                          radius=args[2], speed=args[3]))
            else:
                raise ValueError(f"{path}:{ln}: bad scenario line: {line.rstrip()}")
    return arena, obstacles


TRACE_COLUMNS = ("t", "x", "y", "theta", "action", "reward", "cost")
