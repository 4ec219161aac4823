"""Deterministic 2D friction-less simulation of differential-drive swarms.

Agents are disks with binary line-of-sight sensors that detect other agents
(never walls) at unbounded range. Updates are synchronous: all agents sense
the pre-step world, then all move, then overlaps are separated and agents
are clamped to the walls (slide, no bounce).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, PlacementError

TWO_PI = 2.0 * math.pi

DEFAULT_WHEEL_RADIUS = 2.0
DEFAULT_AGENT_RADIUS = 5.0
DEFAULT_DT = 1.0
DEFAULT_WORLD = (500.0, 500.0)
DEFAULT_N_AGENTS = 24
DEFAULT_HORIZON = 1200


def normalize_angle(theta: float) -> float:
    """Map an angle into [0, 2*pi); a negative epsilon rounds to 0, not 2*pi."""
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    if theta >= TWO_PI:
        theta = 0.0
    return theta


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class CapabilityModel:
    """Sensing/actuation abilities shared by every agent in the swarm."""

    sensor_count: int = 1
    second_sensor_angle: float | None = None
    wheel_radius: float = DEFAULT_WHEEL_RADIUS
    agent_radius: float = DEFAULT_AGENT_RADIUS
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.sensor_count not in (1, 2):
            raise ContractError(f"sensor_count must be 1 or 2, got {self.sensor_count}")
        if self.sensor_count == 2:
            if self.second_sensor_angle is None:
                raise ContractError("two-sensor model requires second_sensor_angle")
            if not -TWO_PI / 3 - 1e-12 <= self.second_sensor_angle <= TWO_PI / 3 + 1e-12:
                raise ContractError("second_sensor_angle outside [-2pi/3, 2pi/3]")
        elif self.second_sensor_angle is not None:
            raise ContractError("single-sensor model must not set second_sensor_angle")
        if self.wheel_radius <= 0 or self.agent_radius <= 0 or self.dt <= 0:
            raise ContractError("wheel_radius, agent_radius and dt must be positive")

    @classmethod
    def single(cls, **kw) -> "CapabilityModel":
        return cls(sensor_count=1, **kw)

    @classmethod
    def two_sensor(cls, angle: float = -math.pi / 3, **kw) -> "CapabilityModel":
        return cls(sensor_count=2, second_sensor_angle=angle, **kw)


@dataclass
class WorldState:
    """Positions and headings of all agents; `states` is an (N, 3) array of x, y, theta."""

    states: np.ndarray
    width: float
    height: float
    tick: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[1] != 3:
            raise ContractError("states must have shape (N, 3)")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def agents(self) -> list[AgentState]:
        return [AgentState(float(x), float(y), float(t)) for x, y, t in self.states]


@dataclass
class Trajectory:
    """A rollout: frames[t] is the (N, 3) state array at tick t, t = 0..horizon."""

    frames: np.ndarray
    controller: "object"
    seed: int
    model: CapabilityModel
    width: float = DEFAULT_WORLD[0]
    height: float = DEFAULT_WORLD[1]

    def __len__(self) -> int:
        return self.frames.shape[0]

    def world_at(self, tick: int) -> WorldState:
        return WorldState(self.frames[tick].copy(), self.width, self.height, tick=tick)


def step_agent(state: AgentState, v_l: float, v_r: float, model: CapabilityModel) -> AgentState:
    """One kinematic step for a single agent; pure, no walls or collisions."""
    if not (math.isfinite(v_l) and math.isfinite(v_r)):
        raise ContractError("wheel speeds must be finite")
    half_wheel = 0.5 * model.wheel_radius
    dx = half_wheel * (v_l + v_r) * math.cos(state.theta) * model.dt
    dy = half_wheel * (v_l + v_r) * math.sin(state.theta) * model.dt
    dtheta = (v_l - v_r) / (2.0 * model.agent_radius) * model.dt
    return AgentState(state.x + dx, state.y + dy, normalize_angle(state.theta + dtheta))


def _sense_rays(dx: np.ndarray, dy: np.ndarray, heading: np.ndarray, offset: float,
                agent_radius: float) -> np.ndarray:
    """Binary readings for all agents: ray at heading+offset vs. other agents' disks.

    dx[i, j], dy[i, j] hold pos_j - pos_i; hit iff the ray meets a disk at a
    positive parameter, i.e. t + sqrt(r^2 - perp^2) > 0.
    """
    ang = heading + offset
    cos_a = np.cos(ang)[:, None]
    sin_a = np.sin(ang)[:, None]
    t = dx * cos_a + dy * sin_a
    reach = agent_radius * agent_radius - (dx * dx + dy * dy - t * t)
    hit = reach >= 0.0
    np.sqrt(reach, out=reach, where=hit)
    hit &= t + reach > 0.0
    np.fill_diagonal(hit, False)
    return hit.any(axis=1)


def _sense_all(states: np.ndarray, offset: float, agent_radius: float) -> np.ndarray:
    pos = states[:, :2]
    dx = pos[None, :, 0] - pos[:, None, 0]
    dy = pos[None, :, 1] - pos[:, None, 1]
    return _sense_rays(dx, dy, states[:, 2], offset, agent_radius).astype(np.int64)


def sense(world: WorldState, agent_index: int, sensor_angle_offset: float = 0.0,
          agent_radius: float = DEFAULT_AGENT_RADIUS) -> int:
    """Binary reading of one agent's line-of-sight sensor against the other agents."""
    if not 0 <= agent_index < world.n:
        raise ContractError(f"agent_index {agent_index} out of range")
    return int(_sense_all(world.states, sensor_angle_offset, agent_radius)[agent_index])


def select_velocities(controller, readings) -> tuple[float, float]:
    """Wheel speeds for a sensor reading tuple, straight from the controller table."""
    readings = tuple(int(r) for r in readings)
    v = controller.velocities
    if len(readings) * 4 != len(v):
        raise ContractError(
            f"reading arity {len(readings)} does not match controller of length {len(v)}")
    if len(readings) == 1:
        idx = readings[0]
    else:
        idx = readings[0] + 2 * readings[1]
    return (v[2 * idx], v[2 * idx + 1])


def _branch_table(controller) -> np.ndarray:
    v = np.asarray(controller.velocities, dtype=np.float64)
    return v.reshape(-1, 2)


def _second_sensor_offset(controller, model: CapabilityModel) -> float:
    if getattr(controller, "sensor_angle", None) is not None:
        return float(controller.sensor_angle)
    if model.second_sensor_angle is None:
        raise ContractError("two-sensor step needs a sensor angle on controller or model")
    return float(model.second_sensor_angle)


def _step_states(states: np.ndarray, table: np.ndarray, sensor_count: int,
                 offset2: float, model: CapabilityModel,
                 width: float, height: float) -> np.ndarray:
    """Synchronous world update on a raw (N, 3) state array; returns a new array."""
    r = model.agent_radius
    x, y, heading = states[:, 0], states[:, 1], states[:, 2]
    dx = x[None, :] - x[:, None]
    dy = y[None, :] - y[:, None]
    s1 = _sense_rays(dx, dy, heading, 0.0, r)
    if sensor_count == 2:
        idx = s1 + 2 * _sense_rays(dx, dy, heading, offset2, r)
    else:
        idx = s1.astype(np.int64)
    vel = table[idx]                                            # (N, 2) wheel speeds
    v_l, v_r = vel[:, 0], vel[:, 1]

    out = states.copy()
    half_wheel = 0.5 * model.wheel_radius
    fwd = half_wheel * (v_l + v_r) * model.dt
    out[:, 0] += fwd * np.cos(heading)
    out[:, 1] += fwd * np.sin(heading)
    th = np.mod(heading + (v_l - v_r) / (2.0 * r) * model.dt, TWO_PI)
    th[th >= TWO_PI] = 0.0   # negative epsilon rounds up to exactly 2*pi
    out[:, 2] = th

    # one pass of symmetric minimal-translation separation for overlapping pairs;
    # exactly coincident centers have no contact normal and are left in place
    dx = out[None, :, 0] - out[:, None, 0]
    dy = out[None, :, 1] - out[:, None, 1]
    dist_sq = dx * dx + dy * dy
    touching = dist_sq < (2.0 * r) ** 2
    np.fill_diagonal(touching, False)
    touching &= dist_sq > 0.0
    if touching.any():
        dist = np.sqrt(dist_sq, out=dist_sq, where=touching)
        push = np.zeros_like(dist)
        np.divide(2.0 * r - dist, 2.0 * dist, out=push, where=touching)
        out[:, 0] -= (push * dx).sum(axis=1)
        out[:, 1] -= (push * dy).sum(axis=1)

    np.clip(out[:, 0], r, width - r, out=out[:, 0])
    np.clip(out[:, 1], r, height - r, out=out[:, 1])
    return out


def step_world(world: WorldState, controller, model: CapabilityModel) -> WorldState:
    """Advance the world one tick: sense all, move all, resolve contacts, clamp to walls."""
    table = _branch_table(controller)
    if model.sensor_count == 1 and table.shape[0] != 2:
        raise ContractError("single-sensor model needs a 4-value controller")
    if model.sensor_count == 2 and table.shape[0] != 4:
        raise ContractError("two-sensor model needs an 8-value controller")
    offset2 = _second_sensor_offset(controller, model) if model.sensor_count == 2 else 0.0
    new = _step_states(world.states, table, model.sensor_count, offset2, model,
                       world.width, world.height)
    return WorldState(new, world.width, world.height, tick=world.tick + 1)


def place_agents(n: int, width: float, height: float, agent_radius: float,
                 rng: np.random.Generator, max_tries: int = 1000) -> np.ndarray:
    """Non-overlapping uniform placement with wall margin; headings uniform [0, 2pi)."""
    states = np.zeros((n, 3), dtype=np.float64)
    lo, hi_x, hi_y = agent_radius, width - agent_radius, height - agent_radius
    min_sq = (2.0 * agent_radius) ** 2
    for i in range(n):
        for _ in range(max_tries):
            x = rng.uniform(lo, hi_x)
            y = rng.uniform(lo, hi_y)
            if i == 0:
                states[i, 0], states[i, 1] = x, y
                break
            d = (states[:i, 0] - x) ** 2 + (states[:i, 1] - y) ** 2
            if d.min() >= min_sq:
                states[i, 0], states[i, 1] = x, y
                break
        else:
            raise PlacementError(
                f"could not place agent {i} of {n} after {max_tries} tries")
    states[:, 2] = rng.uniform(0.0, TWO_PI, size=n)
    return states


def rollout(controller, model: CapabilityModel, env: tuple[float, float] = DEFAULT_WORLD,
            seed: int = 0, horizon: int = DEFAULT_HORIZON,
            n_agents: int = DEFAULT_N_AGENTS) -> Trajectory:
    """Simulate a seeded swarm for `horizon` steps; deterministic in all arguments."""
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    width, height = float(env[0]), float(env[1])
    table = _branch_table(controller)
    if model.sensor_count == 1 and table.shape[0] != 2:
        raise ContractError("single-sensor model needs a 4-value controller")
    if model.sensor_count == 2 and table.shape[0] != 4:
        raise ContractError("two-sensor model needs an 8-value controller")
    offset2 = _second_sensor_offset(controller, model) if model.sensor_count == 2 else 0.0

    rng = np.random.default_rng(seed)
    frames = np.empty((horizon + 1, n_agents, 3), dtype=np.float64)
    frames[0] = place_agents(n_agents, width, height, model.agent_radius, rng)
    for t in range(horizon):
        frames[t + 1] = _step_states(frames[t], table, model.sensor_count, offset2,
                                     model, width, height)
    return Trajectory(frames=frames, controller=controller, seed=seed, model=model,
                      width=width, height=height)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Debug export: one row per (tick, agent) with x, y, theta."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick", "agent", "x", "y", "theta"])
        for t in range(len(traj)):
            for i in range(traj.frames.shape[1]):
                x, y, th = traj.frames[t, i]
                writer.writerow([t, i, repr(float(x)), repr(float(y)), repr(float(th))])
