"""Dataset persistence: controller sampling, rollouts, rendered images, manifests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controllers import Controller, heuristic_score, sample_uniform
from .errors import ContractError
from .render import RENDER_WINDOW, load_pgm, render, save_pgm
from .sim import DEFAULT_HORIZON, DEFAULT_N_AGENTS, DEFAULT_WORLD, CapabilityModel, rollout


@dataclass
class ManifestRecord:
    id: str
    controller: Controller
    kind: str
    seed: int
    image_path: str
    label: str | None = None

    def to_json(self) -> str:
        rec = {
            "id": self.id,
            "controller": self.controller.as_list(),
            "kind": self.kind,
            "seed": self.seed,
            "image_path": self.image_path,
        }
        if self.label is not None:
            rec["label"] = self.label
        return json.dumps(rec)

    @classmethod
    def from_json(cls, line: str) -> "ManifestRecord":
        rec = json.loads(line)
        return cls(id=rec["id"], controller=Controller.from_list(rec["controller"]),
                   kind=rec["kind"], seed=int(rec["seed"]),
                   image_path=rec["image_path"], label=rec.get("label"))


def write_manifest(records, path) -> None:
    seen = set()
    for r in records:
        if r.id in seen:
            raise ContractError(f"duplicate manifest id {r.id!r}")
        seen.add(r.id)
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_manifest(path) -> list[ManifestRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ManifestRecord.from_json(line))
    return records


def load_manifest_images(records, base_dir) -> np.ndarray:
    """Stack every record's image into an (M, H, W) float array."""
    base = Path(base_dir)
    return np.stack([load_pgm(base / r.image_path).pixels for r in records])


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def build_dataset(count: int, model: CapabilityModel, seed: int, out_dir,
                  filter_on: bool = True, env=DEFAULT_WORLD,
                  horizon: int = DEFAULT_HORIZON, n_agents: int = DEFAULT_N_AGENTS,
                  window: int = RENDER_WINDOW,
                  max_filter_tries: int = 10000) -> list[ManifestRecord]:
    """Sample controllers, roll out, render, and persist images plus a manifest.

    Deterministic in `seed`; with the filter on, sampling rejects controllers
    failing the heuristic score.
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    out = Path(out_dir)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    kind = "single" if model.sensor_count == 1 else "two"
    rng = np.random.default_rng(seed)
    records: list[ManifestRecord] = []
    for i in range(count):
        controller = sample_uniform(kind, rng)
        if filter_on:
            tries = 0
            while not heuristic_score(controller).passes:
                tries += 1
                if tries > max_filter_tries:
                    raise ContractError("filter rejection budget exhausted")
                controller = sample_uniform(kind, rng)
        rollout_seed = _derived_seed(seed, i)
        traj = rollout(controller, model, env=env, seed=rollout_seed,
                       horizon=horizon, n_agents=n_agents)
        rec_id = f"{kind}{seed:04d}_{i:05d}"
        image_path = f"images/{rec_id}.pgm"
        save_pgm(render(traj, window=window, source_id=rec_id), out / image_path)
        records.append(ManifestRecord(id=rec_id, controller=controller, kind=kind,
                                      seed=rollout_seed, image_path=image_path))
    write_manifest(records, out / "manifest.jsonl")
    return records
