"""Triplet-loss training: self-supervised pretraining and label-driven fine-tuning.

Triplets are hinge-scored on unnormalized embeddings; optimization is
adaptive-moment gradient descent with an LR scheduler that halves the rate
after a plateau. Single-threaded and fully seeded: repeated runs produce
identical loss logs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .net import EmbeddingNetwork
from .render import TrajectoryImage, augment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.08
    weight_decay: float = 1e-6
    batch_size: int = 4096
    triplets_per_epoch: int = 16384
    max_epochs: int = 500
    plateau_patience: int = 15
    plateau_rel_threshold: float = 1e-4
    stop_loss: float = 1e-3
    stop_window: int = 10
    margin: float = 1.0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "triplets_per_epoch", "max_epochs",
                     "plateau_patience", "stop_loss", "stop_window", "margin"):
            if getattr(self, name) <= 0:
                raise ContractError(f"TrainConfig.{name} must be positive")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be >= 0")


def triplet_loss(a, p, n, margin: float = 1.0) -> float:
    """Hinge on embedding distances: max(||a-p|| - ||a-n|| + margin, 0)."""
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if a.shape != p.shape or a.shape != n.shape:
        raise ContractError("triplet members must share one dimension")
    d_ap = np.linalg.norm(a - p)
    d_an = np.linalg.norm(a - n)
    return float(max(d_ap - d_an + margin, 0.0))


def _batch_loss_grads(emb_a, emb_p, emb_n, margin, eps=1e-12):
    """Mean hinge loss over the batch and its gradients w.r.t. each embedding."""
    diff_ap = emb_a - emb_p
    diff_an = emb_a - emb_n
    d_ap = np.sqrt(np.sum(diff_ap ** 2, axis=1))
    d_an = np.sqrt(np.sum(diff_an ** 2, axis=1))
    hinge = d_ap - d_an + margin
    active = hinge > 0.0
    losses = np.where(active, hinge, 0.0)
    b = emb_a.shape[0]
    scale = active.astype(emb_a.dtype) / b
    u_ap = diff_ap / np.maximum(d_ap, eps)[:, None]
    u_an = diff_an / np.maximum(d_an, eps)[:, None]
    g_a = scale[:, None] * (u_ap - u_an)
    g_p = -scale[:, None] * u_ap
    g_n = scale[:, None] * u_an
    return float(losses.mean()), g_a, g_p, g_n


def triplet_batch_backward(net: EmbeddingNetwork, anchors, positives, negatives,
                           margin: float = 1.0):
    """Forward the three roles through the shared net, return (mean loss, grads).

    Triplets whose hinge is inactive contribute zero gradient.
    """
    b = np.asarray(anchors).shape[0]
    if b == 0:
        raise ContractError("triplet batch must be nonempty")
    stacked = np.concatenate([anchors, positives, negatives], axis=0)
    emb, caches = net.forward_cached(stacked)
    loss, g_a, g_p, g_n = _batch_loss_grads(emb[:b], emb[b:2 * b], emb[2 * b:], margin)
    grad_out = np.concatenate([g_a, g_p, g_n], axis=0)
    grads_w, grads_b = net.backward(caches, grad_out)
    return loss, grads_w, grads_b


class AdamOptimizer:
    """Adaptive-moment estimation; weight decay is added to the raw gradient."""

    def __init__(self, net: EmbeddingNetwork, learning_rate: float,
                 weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m_w = [np.zeros_like(w, dtype=np.float64) for w in net.weights]
        self.v_w = [np.zeros_like(w, dtype=np.float64) for w in net.weights]
        self.m_b = [np.zeros_like(b, dtype=np.float64) for b in net.biases]
        self.v_b = [np.zeros_like(b, dtype=np.float64) for b in net.biases]

    def step(self, net: EmbeddingNetwork, grads_w, grads_b) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for params, grads, ms, vs in ((net.weights, grads_w, self.m_w, self.v_w),
                                      (net.biases, grads_b, self.m_b, self.v_b)):
            for i, (param, grad) in enumerate(zip(params, grads)):
                g = grad.astype(np.float64)
                if self.weight_decay:
                    g = g + self.weight_decay * param.astype(np.float64)
                ms[i] = self.beta1 * ms[i] + (1.0 - self.beta1) * g
                vs[i] = self.beta2 * vs[i] + (1.0 - self.beta2) * g * g
                update = self.lr * (ms[i] / bc1) / (np.sqrt(vs[i] / bc2) + self.eps)
                params[i] = (param.astype(np.float64) - update).astype(param.dtype)


class PlateauScheduler:
    """Halve the learning rate after `patience` epochs without relative improvement."""

    def __init__(self, optimizer: AdamOptimizer, patience: int, rel_threshold: float):
        self.optimizer = optimizer
        self.patience = patience
        self.rel_threshold = rel_threshold
        self.best = np.inf
        self.stale = 0

    def update(self, epoch_loss: float) -> None:
        if epoch_loss < self.best * (1.0 - self.rel_threshold):
            self.best = epoch_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.optimizer.lr *= 0.5
                self.stale = 0
                logger.info("plateau: learning rate halved to %g", self.optimizer.lr)


def _should_stop(loss_log, cfg: TrainConfig) -> bool:
    if len(loss_log) >= cfg.stop_window:
        if float(np.mean(loss_log[-cfg.stop_window:])) < cfg.stop_loss:
            return True
    return len(loss_log) >= cfg.max_epochs


def _run_epochs(net, draw_triplets, cfg, rng, loss_log):
    """Shared batch loop over epochs of freshly drawn triplets."""
    optimizer = AdamOptimizer(net, cfg.learning_rate, cfg.weight_decay)
    scheduler = PlateauScheduler(optimizer, cfg.plateau_patience, cfg.plateau_rel_threshold)
    while True:
        anchors, positives, negatives = draw_triplets(rng)
        total = anchors.shape[0]
        batch_losses = []
        for start in range(0, total, cfg.batch_size):
            sl = slice(start, min(start + cfg.batch_size, total))
            loss, gw, gb = triplet_batch_backward(
                net, anchors[sl], positives[sl], negatives[sl], cfg.margin)
            optimizer.step(net, gw, gb)
            batch_losses.append((loss, sl.stop - sl.start))
        epoch_loss = sum(l * n for l, n in batch_losses) / total
        loss_log.append(epoch_loss)
        scheduler.update(epoch_loss)
        if _should_stop(loss_log, cfg):
            break
    return net


def pretrain(dataset: np.ndarray, cfg: TrainConfig = TrainConfig(), seed: int = 0,
             net: EmbeddingNetwork | None = None):
    """Self-supervised pretraining on an (M, H, W) image stack.

    Per epoch, anchor/negative pairs are drawn with replacement (distinct
    sources) and positives synthesized by crop/rotate augmentation.
    Returns (net, loss_log).
    """
    images = np.asarray(dataset, dtype=np.float32)
    if images.ndim != 3 or images.shape[0] < 2:
        raise ContractError("pretraining needs an (M, H, W) stack with M >= 2")
    m = images.shape[0]
    if net is None:
        net = EmbeddingNetwork.initialize(seed=seed, input_hw=images.shape[1:])
    rng = np.random.default_rng(seed)
    loss_log: list[float] = []

    def draw(rng_):
        a_idx = rng_.integers(0, m, size=cfg.triplets_per_epoch)
        n_idx = rng_.integers(0, m, size=cfg.triplets_per_epoch)
        clash = a_idx == n_idx
        while clash.any():
            n_idx[clash] = rng_.integers(0, m, size=int(clash.sum()))
            clash = a_idx == n_idx
        anchors = images[a_idx]
        positives = np.stack([
            augment(TrajectoryImage(anchors[i]), rng_).pixels
            for i in range(anchors.shape[0])
        ])
        return anchors, positives, images[n_idx]

    net = _run_epochs(net, draw, cfg, rng, loss_log)
    return net, loss_log


def finetune_on_triplets(net: EmbeddingNetwork, images: np.ndarray, triplets,
                         cfg: TrainConfig = TrainConfig(), seed: int = 0):
    """Continue training from `net` on explicit (a, p, n) index triplets.

    When more triplets exist than triplets_per_epoch, each epoch samples
    uniformly without replacement. Returns (net, loss_log).
    """
    triplets = np.asarray(list(triplets), dtype=np.int64)
    if triplets.size == 0:
        logger.warning("finetune called with no triplets; parameters unchanged")
        return net, []
    images = np.asarray(images, dtype=np.float32)
    rng = np.random.default_rng(seed)
    loss_log: list[float] = []

    def draw(rng_):
        if triplets.shape[0] > cfg.triplets_per_epoch:
            pick = rng_.choice(triplets.shape[0], size=cfg.triplets_per_epoch, replace=False)
            chosen = triplets[pick]
        else:
            chosen = triplets
        return images[chosen[:, 0]], images[chosen[:, 1]], images[chosen[:, 2]]

    net = _run_epochs(net, draw, cfg, rng, loss_log)
    return net, loss_log
