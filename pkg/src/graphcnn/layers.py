"""Plain numpy layers with explicit forward/backward: ReLU, batch norm, FC, dropout, loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatch, EmptyMask, InvalidClass, InvalidRate, ShapeMismatch

__all__ = [
    "BatchNormState",
    "LossOutput",
    "batch_norm",
    "batch_norm_backward",
    "dropout",
    "dropout_backward",
    "fully_connected",
    "fully_connected_backward",
    "relu",
    "relu_backward",
    "softmax_xent",
]


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dy):
    return np.where(x > 0, dy, 0.0)


@dataclass
class BatchNormState:
    """Per-feature affine parameters and running statistics.

    ``mode="batch"`` always normalizes with the statistics of the current batch
    and never touches the running averages (the single large graph case).
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray = None
    running_var: np.ndarray = None
    momentum: float = 0.9
    epsilon: float = 1e-5
    mode: str = "running"

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.running_mean is None:
            self.running_mean = np.zeros_like(self.gamma)
        if self.running_var is None:
            self.running_var = np.ones_like(self.gamma)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.momentum < 1:
            raise ValueError("momentum must be in (0, 1)")
        if self.mode not in ("running", "batch"):
            raise ValueError(f"unknown batch norm mode {self.mode!r}")

    @classmethod
    def create(cls, n_features, mode="running", **kw):
        return cls(np.ones(n_features), np.zeros(n_features), mode=mode, **kw)


def batch_norm(batch, state: BatchNormState, training: bool):
    """Normalize a list of ``N_i x F`` matrices with statistics pooled over all rows.

    Returns ``(outputs, cache)``; ``cache`` feeds ``batch_norm_backward``.
    """
    batch = [np.asarray(x, dtype=np.float64) for x in batch]
    sizes = [x.shape[0] for x in batch]
    if not batch or sum(sizes) == 0:
        raise EmptyBatch("batch norm needs at least one vertex")
    stacked = np.concatenate(batch, axis=0)
    if stacked.shape[1] != state.gamma.shape[0]:
        raise ShapeMismatch(f"batch has {stacked.shape[1]} features, state has {state.gamma.shape[0]}")
    if training or state.mode == "batch":
        mean = stacked.mean(axis=0)
        var = stacked.var(axis=0)
        if training and state.mode == "running":
            m = state.momentum
            state.running_mean = m * state.running_mean + (1 - m) * mean
            state.running_var = m * state.running_var + (1 - m) * var
        use_batch = True
    else:
        mean, var = state.running_mean, state.running_var
        use_batch = False
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    xhat = (stacked - mean) * inv_std
    out = xhat * state.gamma + state.beta
    cache = (xhat, inv_std, state.gamma, sizes, use_batch)
    return np.split(out, np.cumsum(sizes)[:-1]), cache


def batch_norm_backward(cache, grads):
    """Returns ``(grad_inputs, grad_gamma, grad_beta)``."""
    xhat, inv_std, gamma, sizes, use_batch = cache
    dy = np.concatenate([np.asarray(g, dtype=np.float64) for g in grads], axis=0)
    grad_gamma = np.sum(dy * xhat, axis=0)
    grad_beta = dy.sum(axis=0)
    dxhat = dy * gamma
    if use_batch:
        m = dy.shape[0]
        dx = inv_std / m * (m * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
    else:
        dx = dxhat * inv_std
    return np.split(dx, np.cumsum(sizes)[:-1]), grad_gamma, grad_beta


def fully_connected(x, weights, bias):
    """``y = W x + b`` for a vector ``x`` (or ``X W^T + b`` for stacked rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise ShapeMismatch(f"FC weights {weights.shape}, bias {bias.shape} vs input {x.shape}")
    return x @ weights.T + bias


def fully_connected_backward(x, weights, dy):
    """Returns ``(dx, dW, db)``."""
    x = np.asarray(x, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    if x.ndim == 1:
        return weights.T @ dy, np.outer(dy, x), dy.copy()
    return dy @ weights, dy.T @ x, dy.sum(axis=0)


def dropout(x, rate, rng: np.random.Generator, training: bool):
    """Inverted dropout. Returns ``(y, mask)``; ``mask`` is ``None`` at inference."""
    if not 0 <= rate < 1:
        raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask, dy):
    return dy if mask is None else dy * mask


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray
    probs: np.ndarray = field(default=None, repr=False)


def softmax_xent(logits, targets, mask=None) -> LossOutput:
    """Mean cross-entropy over rows of ``logits``; with ``mask`` only rows where it is 1 count."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    targets = np.asarray(targets).reshape(-1)
    if targets.shape[0] != z.shape[0]:
        raise ShapeMismatch(f"{targets.shape[0]} targets for {z.shape[0]} rows")
    if np.any((targets < 0) | (targets >= z.shape[1])):
        raise InvalidClass(f"targets must lie in [0, {z.shape[1]})")
    if mask is None:
        weight = np.ones(z.shape[0])
    else:
        weight = np.asarray(mask, dtype=np.float64).reshape(-1)
        if weight.shape[0] != z.shape[0]:
            raise ShapeMismatch("mask length does not match logits")
    count = weight.sum()
    if count == 0:
        raise EmptyMask("no unmasked rows contribute to the loss")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    rows = np.arange(z.shape[0])
    nll = -log_probs[rows, targets]
    value = float(np.sum(nll * weight) / count)
    probs = np.exp(log_probs)
    grad = probs.copy()
    grad[rows, targets] -= 1.0
    grad *= (weight / count)[:, None]
    return LossOutput(value, grad, probs)
