"""Embedding accuracy over admissible triplets and taxonomy behavior reporting."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

from .behavior import HAND_MAPPING_ID, hand_crafted_embed
from .discovery import Archive, Taxonomy
from .errors import ContractError
from .sim import DEFAULT_HORIZON, CapabilityModel, rollout

BEHAVIOR_NAMES = ("cyclic_pursuit", "aggregation", "dispersal", "milling",
                  "wall_following", "nested_cycle", "concave_path", "random")


@dataclass(frozen=True)
class AccuracyReport:
    mapping_id: str
    admissible: int
    correct: int

    @property
    def percentage(self) -> float:
        return 100.0 * self.correct / self.admissible


def l2_accuracy(vectors: np.ndarray, labels, mapping_id: str = "unknown") -> AccuracyReport:
    """Fraction of admissible (a, p, n) triplets with ||a-p|| strictly < ||a-n||.

    Admissible: Class(a) = Class(p) != Class(n) with a != p; (a, p) ordered.
    Ties count as incorrect.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    if vectors.shape[0] != labels.shape[0]:
        raise ContractError("one label per embedding required")
    m = vectors.shape[0]
    diff = vectors[:, None, :] - vectors[None, :, :]
    d_sq = np.sum(diff ** 2, axis=2)
    admissible = 0
    correct = 0
    for a in range(m):
        same = np.flatnonzero(labels == labels[a])
        same = same[same != a]
        other = np.flatnonzero(labels != labels[a])
        if same.size == 0 or other.size == 0:
            continue
        admissible += same.size * other.size
        correct += int(np.sum(d_sq[a, same][:, None] < d_sq[a, other][None, :]))
    if admissible == 0:
        raise ContractError("no admissible triplets: need >= 2 classes, one with >= 2 members")
    return AccuracyReport(mapping_id=mapping_id, admissible=admissible, correct=correct)


@dataclass(frozen=True)
class SignatureConfig:
    """Decision-list thresholds over the five hand-crafted metrics.

    Calibrated once against the six single-sensor reference controllers at
    T=1200 (gap midpoints over 15 seeds, 90/90 correct); the version bumps
    whenever a threshold moves.
    """

    version: int = 1
    aggregation_scatter: float = 0.06    # compact cluster around the centroid
    rotation_strong: float = 0.0045      # |group rotation| of coherent circulation
    wall_scatter: float = 0.4            # circulating far out: boundary loop
    spread_scatter: float = 0.45         # spread-out, non-circulating swarms
    dispersal_angmom: float = 0.15       # spread + low |angular momentum|
    milling_angmom: float = 0.1          # mid-scatter swirling mass
    milling_rotation: float = 0.001

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


DEFAULT_SIGNATURE_CONFIG = SignatureConfig()


def classify_signature(values, cfg: SignatureConfig = DEFAULT_SIGNATURE_CONFIG) -> str:
    """Name a behavior from its hand-crafted metric vector."""
    speed, ang_mom, radial_var, scatter, group_rot = (float(x) for x in np.asarray(values))
    momentum = abs(ang_mom)
    rotation = abs(group_rot)
    if scatter < cfg.aggregation_scatter:
        return "aggregation"
    if rotation >= cfg.rotation_strong:
        return "wall_following" if scatter >= cfg.wall_scatter else "cyclic_pursuit"
    if scatter >= cfg.spread_scatter:
        return "dispersal" if momentum < cfg.dispersal_angmom else "random"
    if momentum >= cfg.milling_angmom and rotation >= cfg.milling_rotation:
        return "milling"
    return "random"


@dataclass
class DistinctReport:
    counts: dict
    distinct: int
    names: list[str] = field(default_factory=list)

    def table_row(self) -> str:
        """Tally row in the reporting format: one column per tracked behavior."""
        cols = [str(self.counts.get(name, 0)) for name in BEHAVIOR_NAMES]
        return "\t".join(cols + [str(self.distinct)])

    @staticmethod
    def table_header() -> str:
        short = {"cyclic_pursuit": "Cycp", "aggregation": "Aggr", "dispersal": "Disp",
                 "milling": "Mill", "wall_following": "Wall-F", "nested_cycle": "N-Cycle",
                 "concave_path": "C-Path", "random": "Rand"}
        return "\t".join([short[n] for n in BEHAVIOR_NAMES] + ["Distinct"])


def _medoid_hand_vector(entry, model: CapabilityModel, horizon: int, eval_seed: int):
    traj = rollout(entry.controller, model, seed=eval_seed, horizon=horizon)
    return hand_crafted_embed(traj).values


def count_distinct(taxonomy: Taxonomy, archive: Archive,
                   label_file=None, classifier: SignatureConfig | None = None,
                   model: CapabilityModel | None = None,
                   horizon: int = DEFAULT_HORIZON, eval_seed: int = 0) -> DistinctReport:
    """Name each medoid behavior from a label file or the signature classifier.

    The classifier reads hand-crafted metrics, so archives built with another
    mapping get their medoid controllers re-simulated on a fixed seed.
    Unclassifiable medoids count as "random".
    """
    if len(taxonomy.medoid_indices) == 0:
        raise ContractError("taxonomy has no medoids")
    names: list[str] = []
    if label_file is not None:
        with open(label_file) as fh:
            label_map = json.load(fh)
        if not label_map:
            raise ContractError("label file has no entries (and classifier not in use)")
        for idx in taxonomy.medoid_indices:
            image_id = archive.entries[idx].image_id
            if image_id not in label_map:
                logger.warning("medoid %s has no label, counted as random", image_id)
            names.append(label_map.get(image_id, "random"))
    else:
        cfg = classifier if classifier is not None else DEFAULT_SIGNATURE_CONFIG
        for idx in taxonomy.medoid_indices:
            entry = archive.entries[idx]
            if archive.mapping_id == HAND_MAPPING_ID:
                vec = entry.behavior
            else:
                if model is None:
                    kind = entry.controller.sensor_count
                    model = (CapabilityModel.single() if kind == 1
                             else CapabilityModel.two_sensor(entry.controller.sensor_angle))
                vec = _medoid_hand_vector(entry, model, horizon, eval_seed)
            names.append(classify_signature(vec, cfg))
    counts: dict = {}
    for name in names:
        counts[name] = counts.get(name, 0) + 1
    return DistinctReport(counts=counts, distinct=len(set(names)), names=names)
