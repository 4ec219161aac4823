"""Pluggable behavior mappings: hand-crafted metrics or a network checkpoint."""

from __future__ import annotations

import numpy as np

from .behavior import HAND_MAPPING_ID, hand_crafted_embed
from .errors import ContractError
from .net import EmbeddingNetwork
from .render import TrajectoryImage
from .sim import Trajectory


class HandCraftedMapping:
    mapping_id = HAND_MAPPING_ID

    def embed(self, traj: Trajectory, image: TrajectoryImage) -> np.ndarray:
        return hand_crafted_embed(traj).values


class NetworkMapping:
    def __init__(self, net: EmbeddingNetwork, mapping_id: str = "net"):
        self.net = net
        self.mapping_id = mapping_id

    def embed(self, traj: Trajectory, image: TrajectoryImage) -> np.ndarray:
        return self.net.forward(image.pixels[None])[0].astype(np.float64)

    def embed_images(self, images: np.ndarray) -> np.ndarray:
        return self.net.forward(images).astype(np.float64)


def load_mapping(spec: str):
    """Parse a --mapping value: "hand" or "net:<checkpoint path>"."""
    if spec == "hand":
        return HandCraftedMapping()
    if spec.startswith("net:"):
        path = spec[len("net:"):]
        return NetworkMapping(EmbeddingNetwork.load(path), mapping_id=f"net:{path}")
    raise ContractError(f"unknown mapping {spec!r}; expected 'hand' or 'net:<checkpoint>'")
