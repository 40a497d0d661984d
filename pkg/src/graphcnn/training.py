"""Optimizers, k-fold splits, the training loop, evaluation and gradient checking."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import EmptyEvalSet, EmptyMask, NonFiniteLoss, ShapeMismatch, TooFewSamples
from .network import BatchNormLayer, Network

__all__ = [
    "Adam",
    "GradCheckReport",
    "Metrics",
    "SGDMomentum",
    "TrainConfig",
    "adam_step",
    "evaluate",
    "grad_check",
    "kfold_split",
    "sgd_momentum_step",
    "summarize_folds",
    "train",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    optimizer: str = "sgd"
    learning_rate: float = 0.01
    momentum: float = 0.9
    betas: tuple = (0.9, 0.999)
    adam_epsilon: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    folds: int = 5
    seed: int = 0
    deterministic: bool = True
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class Metrics:
    train_loss: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    eval_acc: List[float] = field(default_factory=list)
    step_loss: List[float] = field(default_factory=list)

    @property
    def final_eval_acc(self):
        return self.eval_acc[-1] if self.eval_acc else float("nan")


def summarize_folds(fold_metrics):
    """``(mean, std)`` of the last-epoch eval accuracy across folds."""
    accs = np.array([m.final_eval_acc for m in fold_metrics])
    return float(accs.mean()), float(accs.std())


# optimizers ---------------------------------------------------------------

def sgd_momentum_step(params, grads, velocities, lr, momentum):
    """Classical momentum, in place: ``v <- m v - lr g; w <- w + v``."""
    for w, g, v in zip(params, grads, velocities):
        if w.shape != g.shape or w.shape != v.shape:
            raise ShapeMismatch(f"parameter {w.shape}, grad {g.shape}, velocity {v.shape}")
        v *= momentum
        v -= lr * g
        w += v
    return params


def adam_step(params, grads, m, v, t, lr, betas=(0.9, 0.999), eps=1e-8):
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2 = betas
    for w, g, mi, vi in zip(params, grads, m, v):
        if w.shape != g.shape:
            raise ShapeMismatch(f"parameter {w.shape} vs grad {g.shape}")
        mi *= b1
        mi += (1 - b1) * g
        vi *= b2
        vi += (1 - b2) * g * g
        m_hat = mi / (1 - b1 ** t)
        v_hat = vi / (1 - b2 ** t)
        w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


class SGDMomentum:
    def __init__(self, params, lr=0.01, momentum=0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros_like(p) for p in params]

    def step(self, grads):
        sgd_momentum_step(self.params, grads, self.velocities, self.lr, self.momentum)


class Adam:
    def __init__(self, params, lr=0.001, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        adam_step(self.params, grads, self.m, self.v, self.t, self.lr, self.betas, self.eps)


def make_optimizer(network: Network, config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(network.parameters(), config.learning_rate, config.betas, config.adam_epsilon)
    return SGDMomentum(network.parameters(), config.learning_rate, config.momentum)


# data splitting -------------------------------------------------------------

def kfold_split(count, k, seed=0):
    """Seeded shuffle, then ``k`` contiguous folds; the first ``count % k`` folds get one extra."""
    if k < 2:
        raise TooFewSamples(f"k-fold needs k >= 2, got {k}")
    if count < k:
        raise TooFewSamples(f"{count} samples cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(count)
    sizes = np.full(k, count // k)
    sizes[:count % k] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    splits = []
    for f in range(k):
        test = np.sort(order[bounds[f]:bounds[f + 1]])
        train_idx = np.sort(np.concatenate([order[:bounds[f]], order[bounds[f + 1]:]]))
        splits.append((train_idx, test))
    return splits


# training -------------------------------------------------------------------

def _accuracy_counts(network, samples, logits, test=False):
    if network.task == "graph":
        labels = np.array([s.label for s in samples])
        return int(np.sum(np.argmax(logits, axis=1) == labels)), len(samples)
    correct = total = 0
    for s, z in zip(samples, logits):
        sel = (s.mask == 0) if test else (s.mask == 1)
        correct += int(np.sum(np.argmax(z[sel], axis=1) == s.vertex_labels[sel]))
        total += int(sel.sum())
    return correct, total


def train(network: Network, dataset, config: TrainConfig, eval_set=None, callback=None):
    """Mini-batch training; returns ``Metrics`` and updates ``network`` in place.

    For vertex tasks pass the single ``GraphSample`` (or a one-element list):
    each epoch is one full-graph step on the training vertices, and
    ``eval_acc`` is measured on the masked-out vertices.
    """
    samples = [dataset] if not isinstance(dataset, (list, tuple)) else list(dataset)
    if not samples:
        raise TooFewSamples("empty training set")
    if network.task == "vertex":
        for s in samples:
            if s.mask is None or not np.any(s.mask == 1):
                raise EmptyMask("vertex task has no training vertices")
        eval_set = samples if eval_set is None else eval_set
    optimizer = make_optimizer(network, config)
    rng = np.random.default_rng([config.seed, 2])
    metrics = Metrics()
    batch_size = len(samples) if network.task == "vertex" else config.batch_size
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples)) if config.shuffle else np.arange(len(samples))
        loss_sum = 0.0
        correct = total = 0
        for start in range(0, len(samples), batch_size):
            batch = [samples[i] for i in order[start:start + batch_size]]
            out, logits = network.loss_and_grad(batch, training=True)
            if not np.isfinite(out.value):
                raise NonFiniteLoss(f"loss {out.value} at epoch {epoch}, batch starting {start}")
            optimizer.step(network.gradients())
            metrics.step_loss.append(out.value)
            loss_sum += out.value * len(batch)
            c, t = _accuracy_counts(network, batch, logits)
            correct += c
            total += t
        metrics.train_loss.append(loss_sum / len(samples))
        metrics.train_acc.append(correct / max(total, 1))
        if eval_set is not None:
            metrics.eval_acc.append(evaluate(network, eval_set, batch_size=config.batch_size))
        log.debug("epoch %d loss %.6f train_acc %.4f", epoch, metrics.train_loss[-1], metrics.train_acc[-1])
        if callback is not None:
            callback(epoch, metrics)
    return metrics


def evaluate(network: Network, dataset, batch_size=64):
    """Argmax accuracy (ties go to the lowest class index).

    Graph tasks score every sample; vertex tasks score only masked-out vertices.
    """
    samples = [dataset] if not isinstance(dataset, (list, tuple)) else list(dataset)
    if not samples:
        raise EmptyEvalSet("nothing to evaluate")
    if network.task == "vertex":
        logits = network.forward(samples, training=False)
        correct, total = _accuracy_counts(network, samples, logits, test=True)
        if total == 0:
            raise EmptyEvalSet("no test vertices (mask == 0)")
        return correct / total
    correct = 0
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        c, _ = _accuracy_counts(network, batch, network.forward(batch, training=False))
        correct += c
    return correct / len(samples)


# gradient checking ------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Finite-difference comparison per parameter block.

    ``errors[name]`` is ``max|a - n| / max(max|a|, max|n|, 1e-8)`` over the block
    (analytic ``a``, numeric ``n``). ``entry_errors`` keeps the elementwise
    maximum of ``|a - n| / max(|a|, |n|, 1e-8)`` for reference; it is dominated by
    roundoff on entries whose true gradient is tiny.

    ``inert`` holds blocks whose gradient is below what central differences can
    resolve (largest magnitude under ``resolution``), for example biases feeding
    straight into batch norm, or a scale that a later batch norm cancels. A
    relative error there only measures roundoff, so the report keeps the max
    absolute difference instead.
    """

    errors: Dict[str, float]
    inert: Dict[str, float] = field(default_factory=dict)
    entry_errors: Dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    def passed(self, tol, inert_atol=1e-9):
        return self.max_error < tol and all(v < inert_atol for v in self.inert.values())


def grad_check(network: Network, samples, epsilon=1e-5, floor=1e-8, resolution=1e-5):
    """Central-difference check of every parameter; dropout off, batch-statistics norm."""
    samples = [samples] if not isinstance(samples, (list, tuple)) else list(samples)
    saved_modes = [l.state.mode for l in network.layers if isinstance(l, BatchNormLayer)]
    saved_running = [(l.state.running_mean.copy(), l.state.running_var.copy())
                     for l in network.layers if isinstance(l, BatchNormLayer)]
    network.set_batch_norm_mode("batch")
    network.set_dropout(False)
    try:
        network.loss_and_grad(samples, training=True)
        analytic = {name: g.copy() for name, g in network.named_gradients()}
        errors, inert_err, entry = {}, {}, {}
        for name, p in network.named_parameters():
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + epsilon
                lp = network.loss(samples, training=True)
                p[idx] = orig - epsilon
                lm = network.loss(samples, training=True)
                p[idx] = orig
                num[idx] = (lp - lm) / (2 * epsilon)
            a = analytic[name]
            diff = np.abs(a - num)
            scale = max(np.abs(a).max(), np.abs(num).max())
            if scale < resolution:
                inert_err[name] = float(diff.max())
            else:
                errors[name] = float(diff.max() / max(scale, floor))
                entry[name] = float((diff / np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)).max())
    finally:
        bns = [l for l in network.layers if isinstance(l, BatchNormLayer)]
        for layer, mode, (rm, rv) in zip(bns, saved_modes, saved_running):
            layer.state.mode = mode
            layer.state.running_mean, layer.state.running_var = rm, rv
        network.set_dropout(True)
    return GradCheckReport(errors, inert_err, entry)
