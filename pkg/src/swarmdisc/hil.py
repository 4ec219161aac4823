"""Human-in-the-loop labeling: durable label store, query policy, triplets.

Labels are appended to a line-delimited journal and fsynced before a
submission is acknowledged; the in-memory index is rebuilt from the journal
on startup. Query selection is greedy diversity: the pending image farthest
(in embedding space) from its nearest labeled neighbor.
"""

from __future__ import annotations

import logging
import os
import time
import json
from dataclasses import dataclass
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np

from .errors import ContractError
from .net import EmbeddingNetwork
from .training import TrainConfig, finetune_on_triplets
from .evaluation import l2_accuracy

logger = logging.getLogger(__name__)

DEFAULT_LABEL_BUDGET = 0.01


@dataclass(frozen=True)
class BehaviorClass:
    class_id: int
    name: str
    exemplar_image_id: str


@dataclass(frozen=True)
class LabelRecord:
    label_id: int
    image_id: str
    class_id: int
    labeler_id: str
    timestamp: float


class LabelStore:
    """Append-only journal of class creations and label assignments."""

    def __init__(self, journal_path):
        self.journal_path = Path(journal_path)
        self.classes: dict[int, BehaviorClass] = {}
        self.labels: list[LabelRecord] = []
        self.active_label: dict[str, LabelRecord] = {}   # latest label per image
        if self.journal_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.journal_path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec["event"] == "class":
                    cls = BehaviorClass(rec["class_id"], rec["name"], rec["exemplar_image_id"])
                    self.classes[cls.class_id] = cls
                elif rec["event"] == "label":
                    label = LabelRecord(rec["label_id"], rec["image_id"], rec["class_id"],
                                        rec["labeler_id"], rec["timestamp"])
                    self.labels.append(label)
                    self.active_label[label.image_id] = label

    def _append(self, payload: dict) -> None:
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.journal_path, "a") as fh:
            fh.write(json.dumps(payload) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create_class(self, name: str, exemplar_image_id: str) -> BehaviorClass:
        class_id = max(self.classes, default=0) + 1
        cls = BehaviorClass(class_id, name, exemplar_image_id)
        self._append({"event": "class", "class_id": class_id, "name": name,
                      "exemplar_image_id": exemplar_image_id})
        self.classes[class_id] = cls
        return cls

    def add_label(self, image_id: str, class_id: int, labeler_id: str = "human") -> LabelRecord:
        if class_id not in self.classes:
            raise ContractError(f"unknown class_id {class_id}")
        label = LabelRecord(len(self.labels) + 1, image_id, class_id, labeler_id, time.time())
        self._append({"event": "label", "label_id": label.label_id, "image_id": image_id,
                      "class_id": class_id, "labeler_id": labeler_id,
                      "timestamp": label.timestamp})
        self.labels.append(label)
        self.active_label[image_id] = label
        return label

    def labeled_images(self) -> dict[str, int]:
        """image_id -> active class_id."""
        return {img: rec.class_id for img, rec in self.active_label.items()}

    def members_by_class(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {c: [] for c in self.classes}
        for img, rec in sorted(self.active_label.items()):
            out.setdefault(rec.class_id, []).append(img)
        return out

    def class_counts(self) -> dict[int, int]:
        counts = {c: 0 for c in self.classes}
        for rec in self.active_label.values():
            counts[rec.class_id] = counts.get(rec.class_id, 0) + 1
        return counts

    def snapshot(self) -> "LabelStore":
        """Read-only copy of the current label state (for background jobs)."""
        copy = LabelStore.__new__(LabelStore)
        copy.journal_path = None
        copy.classes = dict(self.classes)
        copy.labels = list(self.labels)
        copy.active_label = dict(self.active_label)
        return copy


def count_triplets(store: LabelStore) -> int:
    """Closed form: sum over classes of C(|c|, 2) * (M - |c|)."""
    members = store.members_by_class()
    total = sum(len(v) for v in members.values())
    return sum(comb(len(v), 2) * (total - len(v)) for v in members.values())


def synthesize_triplets(store: LabelStore):
    """Every unordered same-class (anchor, positive) pair against every
    out-of-class negative; empty when fewer than two classes have members."""
    members = store.members_by_class()
    nonempty = {c: v for c, v in members.items() if v}
    if len(nonempty) < 2:
        return
    all_images = [img for v in nonempty.values() for img in v]
    for cls, imgs in nonempty.items():
        negatives = [img for img in all_images if store.active_label[img].class_id != cls]
        for a, p in combinations(imgs, 2):
            for n in negatives:
                yield (a, p, n)


@dataclass
class QueryItem:
    query_id: int
    image_id: str
    status: str = "pending"   # pending | labeled | skipped


class HilSession:
    """One labeling session over a fixed image pool with precomputed embeddings."""

    def __init__(self, image_ids, embeddings, store: LabelStore, seed: int = 0,
                 budget: float = DEFAULT_LABEL_BUDGET):
        self.image_ids = list(image_ids)
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        if self.embeddings.shape[0] != len(self.image_ids):
            raise ContractError("one embedding per image required")
        self.store = store
        self.rng = np.random.default_rng(seed)
        self.budget = budget
        self.queries: dict[int, QueryItem] = {}
        self.queried_images: set[str] = set()
        self._results: dict[int, tuple[LabelRecord, BehaviorClass]] = {}
        self._index = {img: i for i, img in enumerate(self.image_ids)}

    def next_query(self) -> QueryItem | None:
        """Farthest-from-labeled pending image; random before any labels exist."""
        labeled = self.store.labeled_images()
        candidates = [img for img in self.image_ids
                      if img not in labeled and img not in self.queried_images]
        if not candidates:
            return None
        labeled_in_pool = [img for img in labeled if img in self._index]
        if not labeled_in_pool:
            choice = candidates[int(self.rng.integers(0, len(candidates)))]
        else:
            lab_vecs = self.embeddings[[self._index[i] for i in labeled_in_pool]]
            cand_idx = [self._index[i] for i in candidates]
            cand_vecs = self.embeddings[cand_idx]
            d = np.sqrt(((cand_vecs[:, None, :] - lab_vecs[None, :, :]) ** 2).sum(axis=2))
            nearest = d.min(axis=1)
            choice = candidates[int(np.argmax(nearest))]
        query = QueryItem(query_id=len(self.queries) + 1, image_id=choice)
        self.queries[query.query_id] = query
        self.queried_images.add(choice)
        return query

    def submit_label(self, query_id: int, class_id: int | None = None,
                     new_class_name: str | None = None,
                     labeler_id: str = "human") -> tuple[LabelRecord, BehaviorClass]:
        """Persist a label durably; duplicate submissions replay the prior ack."""
        if (class_id is None) == (new_class_name is None):
            raise ContractError("provide exactly one of class_id or new_class_name")
        query = self.queries.get(query_id)
        if query is None:
            raise ContractError(f"unknown query_id {query_id}")
        if query.status == "labeled":
            prior_label, prior_class = self._results[query_id]
            same = (class_id == prior_label.class_id if class_id is not None
                    else new_class_name == prior_class.name)
            if same:
                return self._results[query_id]
            raise ContractError(f"query {query_id} already labeled differently")
        if new_class_name is not None:
            cls = self.store.create_class(new_class_name, exemplar_image_id=query.image_id)
            class_id = cls.class_id
        else:
            if class_id not in self.store.classes:
                raise ContractError(f"unknown class_id {class_id}")
            cls = self.store.classes[class_id]
        label = self.store.add_label(query.image_id, class_id, labeler_id)
        query.status = "labeled"
        self._results[query_id] = (label, cls)
        return label, cls

    def progress(self) -> dict:
        labeled = len(self.store.labeled_images())
        total = len(self.image_ids)
        return {"labeled": labeled, "total": total,
                "budget": max(1, int(round(self.budget * total)))}


def finetune(net: EmbeddingNetwork, store: LabelStore, images_by_id: dict,
             cfg: TrainConfig = TrainConfig(), seed: int = 0,
             holdout_fraction: float = 0.2, guardrail_points: float = 1.0):
    """Fine-tune on label-synthesized triplets with an accuracy guardrail.

    A held-out labeled split is scored before and after; if L2 accuracy drops
    by more than `guardrail_points`, the original parameters are returned
    (logged). No labels -> no-op with a warning. Returns (net, metrics).
    """
    labeled = sorted(store.labeled_images().items())
    if count_triplets(store) == 0:
        logger.warning("finetune: no admissible triplets, parameters unchanged")
        return net, {"triplets": 0, "skipped": True}

    rng = np.random.default_rng(seed)
    image_ids = [img for img, _ in labeled]
    # stratified holdout: a share of every class, so the guardrail split has
    # admissible triplets whenever the label store does
    holdout_set: set = set()
    for cls, members in sorted(store.members_by_class().items()):
        take = int(round(holdout_fraction * len(members)))
        picked = rng.permutation(len(members))[:take]
        holdout_set.update(members[i] for i in picked)

    def accuracy_on_holdout(network):
        ids = [img for img in image_ids if img in holdout_set]
        if not ids:
            return None
        vecs = network.forward(np.stack([images_by_id[i] for i in ids]))
        lab = [store.active_label[i].class_id for i in ids]
        try:
            return l2_accuracy(vecs, lab).percentage
        except ContractError:
            return None

    pre_acc = accuracy_on_holdout(net)

    train_ids = [img for img in image_ids if img not in holdout_set]
    id_index = {img: i for i, img in enumerate(train_ids)}
    stack = np.stack([images_by_id[i] for i in train_ids]) if train_ids else None
    triplets = [(id_index[a], id_index[p], id_index[n])
                for a, p, n in synthesize_triplets(store)
                if a in id_index and p in id_index and n in id_index]
    if not triplets or stack is None:
        logger.warning("finetune: training split has no triplets, parameters unchanged")
        return net, {"triplets": 0, "skipped": True,
                     "pre_accuracy": pre_acc, "post_accuracy": pre_acc}

    tuned = net.clone()
    tuned, loss_log = finetune_on_triplets(tuned, stack, triplets, cfg, seed=seed)
    post_acc = accuracy_on_holdout(tuned)
    metrics = {"triplets": len(triplets), "epochs": len(loss_log),
               "final_loss": loss_log[-1] if loss_log else None,
               "pre_accuracy": pre_acc, "post_accuracy": post_acc, "reverted": False}
    if pre_acc is not None and post_acc is not None and post_acc < pre_acc - guardrail_points:
        logger.warning("finetune guardrail: accuracy fell %.2f -> %.2f, reverting",
                       pre_acc, post_acc)
        metrics["reverted"] = True
        return net, metrics
    return tuned, metrics
