"""Emergent-behavior discovery workbench for computation-free robot swarms."""

__version__ = "0.1.0"

from .behavior import BehaviorVector, hand_crafted_embed
from .controllers import (Controller, Thresholds, enumerate_discretized,
                          heuristic_metrics, heuristic_score, sample_uniform)
from .discovery import (Archive, ArchiveEntry, EvolutionConfig, Taxonomy, k_medoids,
                        novelty, run_novelty_search)
from .errors import ContractError, PlacementError
from .net import EmbeddingNetwork
from .render import TrajectoryImage, augment, load_pgm, render, save_pgm
from .sim import (AgentState, CapabilityModel, Trajectory, WorldState, rollout,
                  select_velocities, sense, step_agent, step_world)
from .training import TrainConfig, pretrain, triplet_loss

__all__ = [
    "AgentState", "Archive", "ArchiveEntry", "BehaviorVector", "CapabilityModel",
    "ContractError", "Controller", "EmbeddingNetwork", "EvolutionConfig",
    "PlacementError", "Taxonomy", "TrainConfig", "Trajectory", "TrajectoryImage",
    "Thresholds", "WorldState", "augment", "enumerate_discretized",
    "hand_crafted_embed", "heuristic_metrics", "heuristic_score", "k_medoids",
    "load_pgm", "novelty", "pretrain", "render", "rollout", "run_novelty_search",
    "sample_uniform", "save_pgm", "select_velocities", "sense", "step_agent",
    "step_world", "triplet_loss",
]
