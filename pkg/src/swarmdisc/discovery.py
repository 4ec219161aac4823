"""Novelty-search evolution over a pluggable behavior mapping, plus k-medoids.

Every evaluated behavior enters the append-only archive; fitness is mean
Euclidean distance to the k nearest previously archived behaviors. Parents
are the most novel half; children come from uniform crossover and Gaussian
mutation snapped to the discrete controller grid, re-sampled a bounded
number of times when they trip the heuristic pre-filter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import (ANGLE_CHOICES, Controller, heuristic_score, sample_uniform,
                          snap_to_grid)
from .errors import ContractError
from .render import RENDER_WINDOW, render, save_pgm
from .sim import DEFAULT_HORIZON, DEFAULT_N_AGENTS, DEFAULT_WORLD, CapabilityModel, rollout

DEFAULT_NOVELTY_K = 15


@dataclass(frozen=True)
class ArchiveEntry:
    controller: Controller
    behavior: np.ndarray
    image_id: str
    generation: int


class Archive:
    """Append-only store of evaluated behaviors, searched by nearest neighbor."""

    def __init__(self, mapping_id: str = "hand"):
        self.mapping_id = mapping_id
        self.entries: list[ArchiveEntry] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: ArchiveEntry) -> None:
        self.entries.append(entry)
        self._matrix = None

    def vectors(self) -> np.ndarray:
        if self._matrix is None:
            if not self.entries:
                self._matrix = np.zeros((0, 5), dtype=np.float64)
            else:
                self._matrix = np.stack([e.behavior for e in self.entries]).astype(np.float64)
        return self._matrix

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            self._write_lines(fh, self.entries)

    def append_jsonl(self, path, entries, write_meta_if_new: bool = True) -> None:
        path = Path(path)
        new_file = not path.exists() or path.stat().st_size == 0
        with open(path, "a") as fh:
            self._write_lines(fh, entries, include_meta=new_file and write_meta_if_new)

    def _write_lines(self, fh, entries, include_meta: bool = True) -> None:
        if include_meta:
            fh.write(json.dumps({"meta": {"mapping_id": self.mapping_id}}) + "\n")
        for e in entries:
            fh.write(json.dumps({
                "generation": e.generation,
                "controller": e.controller.as_list(),
                "behavior_vector": [float(x) for x in e.behavior],
                "image_id": e.image_id,
            }) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "Archive":
        archive = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if "meta" in rec:
                    archive.mapping_id = rec["meta"].get("mapping_id", archive.mapping_id)
                    continue
                archive.append(ArchiveEntry(
                    controller=Controller.from_list(rec["controller"]),
                    behavior=np.asarray(rec["behavior_vector"], dtype=np.float64),
                    image_id=rec["image_id"],
                    generation=int(rec["generation"]),
                ))
        return archive


def novelty(b: np.ndarray, archive: Archive | np.ndarray,
            k: int = DEFAULT_NOVELTY_K) -> float:
    """Mean Euclidean distance to the k nearest archive entries.

    An empty archive is maximally novel (+inf); with fewer than k entries all
    of them count.
    """
    if k < 1:
        raise ContractError("novelty needs k >= 1")
    vectors = archive.vectors() if isinstance(archive, Archive) else np.asarray(archive)
    if vectors.shape[0] == 0:
        return math.inf
    d = np.sqrt(np.sum((vectors - np.asarray(b, dtype=np.float64)) ** 2, axis=1))
    if d.shape[0] <= k:
        return float(np.sort(d).mean())
    # canonical ascending order so the mean is reproducible bit-for-bit
    nearest = np.sort(np.partition(d, k - 1)[:k])
    return float(nearest.mean())


@dataclass(frozen=True)
class EvolutionConfig:
    population: int = 100
    generations: int = 100
    novelty_k: int = DEFAULT_NOVELTY_K
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.1
    crossover_rate: float = 0.5   # per-gene probability of inheriting from parent 1
    seed: int = 0
    filter_enabled: bool = True
    filter_retries: int = 20

    def __post_init__(self):
        if self.population <= 0 or self.generations <= 0:
            raise ContractError("population and generations must be positive")
        if self.novelty_k < 1:
            raise ContractError("novelty_k must be >= 1")


@dataclass
class Taxonomy:
    medoid_indices: list[int]
    assignments: np.ndarray
    k: int
    cost: float
    swap_costs: list[float] = field(default_factory=list)


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _mutate_child(genes: np.ndarray, angle_idx: int | None, rng: np.random.Generator,
                  cfg: EvolutionConfig) -> Controller:
    mask = rng.random(genes.shape[0]) < cfg.mutation_rate
    noise = rng.normal(0.0, cfg.mutation_sigma, size=genes.shape[0])
    genes = np.where(mask, genes + noise, genes)
    genes = np.array([snap_to_grid(float(g)) for g in np.clip(genes, -1.0, 1.0)])
    if angle_idx is None:
        return Controller(tuple(genes))
    if rng.random() < cfg.mutation_rate:
        step = 1 if rng.integers(0, 2) == 1 else -1
        angle_idx = min(len(ANGLE_CHOICES) - 1, max(0, angle_idx + step))
    return Controller(tuple(genes), sensor_angle=ANGLE_CHOICES[angle_idx])


def _make_child(parents: list[Controller], rng: np.random.Generator,
                cfg: EvolutionConfig) -> Controller:
    p1, p2 = (parents[rng.integers(0, len(parents))] for _ in range(2))
    g1 = np.asarray(p1.velocities)
    g2 = np.asarray(p2.velocities)
    pick = rng.random(g1.shape[0]) < cfg.crossover_rate
    genes = np.where(pick, g1, g2)
    angle_idx = None
    if p1.sensor_angle is not None:
        angle = p1.sensor_angle if rng.random() < cfg.crossover_rate else p2.sensor_angle
        angle_idx = int(np.argmin([abs(angle - a) for a in ANGLE_CHOICES]))
    return _mutate_child(genes, angle_idx, rng, cfg)


def evolve_generation(pop: list[Controller], archive: Archive, mapping,
                      cfg: EvolutionConfig, model: CapabilityModel,
                      env=DEFAULT_WORLD, generation: int = 0,
                      image_dir=None, n_agents: int = DEFAULT_N_AGENTS,
                      horizon: int = DEFAULT_HORIZON,
                      render_window: int = RENDER_WINDOW,
                      archive_path=None) -> list[Controller]:
    """Evaluate a population, extend the archive, and breed the next population."""
    if not pop:
        raise ContractError("population must be nonempty")
    baseline = archive.vectors().copy()
    new_entries = []
    for i, controller in enumerate(pop):
        seed = _derived_seed(cfg.seed, generation, i + 1)
        traj = rollout(controller, model, env=env, seed=seed, horizon=horizon,
                       n_agents=n_agents)
        image_id = f"g{generation:04d}_i{i:04d}"
        img = render(traj, window=render_window, source_id=image_id)
        if image_dir is not None:
            save_pgm(img, Path(image_dir) / f"{image_id}.pgm")
        vec = np.asarray(mapping.embed(traj, img), dtype=np.float64)
        new_entries.append(ArchiveEntry(controller=controller, behavior=vec,
                                        image_id=image_id, generation=generation))
    scores = np.array([novelty(e.behavior, baseline, cfg.novelty_k) for e in new_entries])
    for e in new_entries:
        archive.append(e)
    if archive_path is not None:
        archive.append_jsonl(archive_path, new_entries)

    order = np.argsort(-scores, kind="stable")   # ties keep population order
    parents = [pop[int(j)] for j in order[:max(1, len(pop) // 2)]]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, generation, 0]))
    children: list[Controller] = []
    for _ in range(len(pop)):
        child = _make_child(parents, rng, cfg)
        if cfg.filter_enabled:
            tries = 0
            while not heuristic_score(child).passes and tries < cfg.filter_retries:
                child = _make_child(parents, rng, cfg)
                tries += 1
        children.append(child)
    return children


def sample_initial_population(cfg: EvolutionConfig, kind: str,
                              max_tries_per_slot: int = 10000) -> list[Controller]:
    """Uniform samples, rejection-filtered when the heuristic filter is on."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    pop: list[Controller] = []
    for _ in range(cfg.population):
        for _ in range(max_tries_per_slot):
            c = sample_uniform(kind, rng)
            if not cfg.filter_enabled or heuristic_score(c).passes:
                pop.append(c)
                break
        else:
            raise ContractError("could not sample a filter-passing controller")
    return pop


def run_novelty_search(cfg: EvolutionConfig, model: CapabilityModel, mapping,
                       env=DEFAULT_WORLD, image_dir=None, archive_path=None,
                       n_agents: int = DEFAULT_N_AGENTS,
                       horizon: int = DEFAULT_HORIZON,
                       render_window: int = RENDER_WINDOW,
                       progress=None) -> Archive:
    """Full evolution run: archive gains `population` entries per generation."""
    kind = "single" if model.sensor_count == 1 else "two"
    if image_dir is not None:
        Path(image_dir).mkdir(parents=True, exist_ok=True)
    archive = Archive(mapping_id=getattr(mapping, "mapping_id", "hand"))
    pop = sample_initial_population(cfg, kind)
    for gen in range(cfg.generations):
        pop = evolve_generation(pop, archive, mapping, cfg, model, env=env,
                                generation=gen, image_dir=image_dir,
                                n_agents=n_agents, horizon=horizon,
                                render_window=render_window,
                                archive_path=archive_path)
        if progress is not None:
            progress(gen, archive)
    return archive


def k_medoids(archive: Archive | np.ndarray, k: int) -> Taxonomy:
    """Partitioning around medoids: greedy build, then steepest-descent swaps.

    Deterministic given input order; swap-phase cost strictly decreases.
    """
    vectors = archive.vectors() if isinstance(archive, Archive) else np.asarray(archive)
    n = vectors.shape[0]
    if n < k:
        raise ContractError(f"k-medoids needs at least k={k} entries, archive has {n}")
    if k < 1:
        raise ContractError("k must be >= 1")
    diff = vectors[:, None, :] - vectors[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=2))

    # BUILD: start from the 1-medoid optimum, then greedily add best reducers
    medoids = [int(np.argmin(dist.sum(axis=1)))]
    d_near = dist[:, medoids[0]].copy()
    chosen = np.zeros(n, dtype=bool)
    chosen[medoids[0]] = True
    while len(medoids) < k:
        reduction = np.maximum(d_near[:, None] - dist, 0.0).sum(axis=0)
        reduction[chosen] = -np.inf
        h = int(np.argmax(reduction))
        medoids.append(h)
        chosen[h] = True
        np.minimum(d_near, dist[:, h], out=d_near)

    def nearest_two(meds):
        dm = dist[:, meds]                       # (n, k)
        order = np.argsort(dm, axis=1, kind="stable")
        a1 = order[:, 0]
        d1 = dm[np.arange(n), a1]
        d2 = dm[np.arange(n), order[:, 1]] if len(meds) > 1 else np.full(n, np.inf)
        return a1, d1, d2

    swap_costs = []
    a1, d1, d2 = nearest_two(medoids)
    cost = float(d1.sum())
    while True:
        if k == n:
            break
        best_delta, best_i, best_h = 0.0, -1, -1
        candidates = np.flatnonzero(~chosen)
        for h in candidates:
            dh = dist[:, h]
            base = np.minimum(0.0, dh - d1)             # medoid j != a1
            own = np.minimum(dh, d2) - d1               # medoid j == a1
            deltas = base.sum() + np.bincount(a1, weights=own - base, minlength=len(medoids))
            i = int(np.argmin(deltas))
            if deltas[i] < best_delta - 1e-12:
                best_delta, best_i, best_h = float(deltas[i]), i, int(h)
        if best_i < 0:
            break
        chosen[medoids[best_i]] = False
        chosen[best_h] = True
        medoids[best_i] = best_h
        a1, d1, d2 = nearest_two(medoids)
        cost = float(d1.sum())
        swap_costs.append(cost)

    assignments = np.array([medoids[int(j)] for j in a1], dtype=np.int64)
    return Taxonomy(medoid_indices=list(medoids), assignments=assignments, k=k,
                    cost=cost, swap_costs=swap_costs)
