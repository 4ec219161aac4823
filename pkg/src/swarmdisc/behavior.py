"""Hand-crafted five-metric behavior mapping (the comparison baseline).

Per frame over the tail window: average speed, angular momentum, radial
variance, scatter, and group rotation of the swarm about its centroid, each
normalized by a fixed environment radius. The returned vector is the window
average of the per-frame metrics. Velocities are per-step displacements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .render import RENDER_WINDOW
from .sim import Trajectory

HAND_MAPPING_ID = "hand"


@dataclass(frozen=True)
class BehaviorVector:
    values: np.ndarray
    mapping_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != (5,):
            raise ContractError(f"behavior vector must be length 5, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ContractError("behavior vector entries must be finite")


def frame_metrics(positions: np.ndarray, velocities: np.ndarray,
                  norm_radius: float) -> np.ndarray:
    """The five metrics for one frame given (N,2) positions and velocities."""
    n = positions.shape[0]
    mu = positions.mean(axis=0)
    rel = positions - mu
    rel_norm = np.sqrt(rel[:, 0] ** 2 + rel[:, 1] ** 2)
    speed = np.sqrt(velocities[:, 0] ** 2 + velocities[:, 1] ** 2)
    # scalar 2D cross product: v.x * u.y - v.y * u.x
    cross = velocities[:, 0] * rel[:, 1] - velocities[:, 1] * rel[:, 0]
    r = norm_radius
    avg_speed = speed.mean()
    angular_momentum = cross.sum() / (r * n)
    radial_var = np.sum((rel_norm - rel_norm.mean()) ** 2) / (r * r * n)
    scatter = np.sum(rel_norm ** 2) / (r * r * n)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit_cross = np.where(rel_norm > 0.0, cross / rel_norm, 0.0)
    group_rotation = unit_cross.sum() / (r * n)
    return np.array([avg_speed, angular_momentum, radial_var, scatter, group_rotation])


def hand_crafted_embed(traj: Trajectory, window: int = RENDER_WINDOW,
                       norm_radius: float | None = None) -> BehaviorVector:
    """Window-averaged metrics over the final `window` frames of a rollout."""
    if len(traj) < window + 1:
        raise ContractError(
            f"trajectory of {len(traj)} frames too short for window {window} (+1 for velocities)")
    if norm_radius is None:
        norm_radius = traj.width / 2.0
    frames = traj.frames
    start = len(traj) - window
    acc = np.zeros(5, dtype=np.float64)
    dt = traj.model.dt
    for t in range(start, len(traj)):
        positions = frames[t, :, :2]
        velocities = (frames[t, :, :2] - frames[t - 1, :, :2]) / dt
        acc += frame_metrics(positions, velocities, norm_radius)
    return BehaviorVector(acc / window, HAND_MAPPING_ID)
