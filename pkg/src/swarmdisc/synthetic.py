"""Procedurally generated archetype images for embedding validation.

Disk, ring and streak archetypes echo the broad appearance of aggregation,
milling/cyclic, and dispersal/wall trajectory images, giving a labeled set
with known structure and no human labeling.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .render import IMAGE_SIZE

ARCHETYPES = ("disk", "ring", "streak")


def _coord_grid(size: int):
    ys, xs = np.mgrid[0:size, 0:size]
    return xs + 0.5, ys + 0.5


def draw_disk(rng: np.random.Generator, size: int = IMAGE_SIZE) -> np.ndarray:
    cx = rng.uniform(size * 0.35, size * 0.65)
    cy = rng.uniform(size * 0.35, size * 0.65)
    radius = rng.uniform(size * 0.12, size * 0.3)
    xs, ys = _coord_grid(size)
    return ((xs - cx) ** 2 + (ys - cy) ** 2 <= radius ** 2).astype(np.float32)


def draw_ring(rng: np.random.Generator, size: int = IMAGE_SIZE) -> np.ndarray:
    cx = rng.uniform(size * 0.4, size * 0.6)
    cy = rng.uniform(size * 0.4, size * 0.6)
    outer = rng.uniform(size * 0.25, size * 0.42)
    inner = outer - rng.uniform(size * 0.04, size * 0.1)
    xs, ys = _coord_grid(size)
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    return ((d2 <= outer ** 2) & (d2 >= inner ** 2)).astype(np.float32)


def draw_streak(rng: np.random.Generator, size: int = IMAGE_SIZE) -> np.ndarray:
    angle = rng.uniform(0.0, np.pi)
    cx = rng.uniform(size * 0.3, size * 0.7)
    cy = rng.uniform(size * 0.3, size * 0.7)
    half_len = rng.uniform(size * 0.3, size * 0.48)
    thickness = rng.uniform(0.8, 2.0)
    dx, dy = np.cos(angle), np.sin(angle)
    xs, ys = _coord_grid(size)
    px, py = xs - cx, ys - cy
    along = px * dx + py * dy
    perp = np.abs(px * dy - py * dx)
    return ((np.abs(along) <= half_len) & (perp <= thickness)).astype(np.float32)


_DRAWERS = {"disk": draw_disk, "ring": draw_ring, "streak": draw_streak}


def synthetic_archetype_dataset(count: int, seed: int = 0,
                                classes=ARCHETYPES, size: int = IMAGE_SIZE):
    """(images, labels): `count` images cycling through the archetype classes."""
    if count < 1:
        raise ContractError("count must be >= 1")
    unknown = [c for c in classes if c not in _DRAWERS]
    if unknown:
        raise ContractError(f"unknown archetype classes {unknown}")
    rng = np.random.default_rng(seed)
    images = np.empty((count, size, size), dtype=np.float32)
    labels = []
    for i in range(count):
        cls = classes[i % len(classes)]
        images[i] = _DRAWERS[cls](rng, size)
        labels.append(cls)
    return images, labels
