"""Graph embed pooling: a learned soft assignment of N input vertices to N' outputs.

A graph convolution with ``N'`` filters produces per-vertex logits; a row-wise
softmax turns them into an ``N x N'`` embedding ``S``. Vertices pool as ``S^T V``
and every non-identity adjacency slice as ``S^T A_l S``. Output slice 0 is reset
to the exact identity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import FilterParams, conv_backward, conv_forward, init_filter, neighbor_aggregate
from .errors import ShapeMismatch
from .graph import AdjacencySlice, AdjacencyTensor

__all__ = [
    "DenseAdjacency",
    "EmbedPoolParams",
    "embed_logits",
    "gfc",
    "init_embed_pool",
    "pool_adjacency",
    "pool_backward",
    "pool_vertices",
    "pooled_slices",
    "softmax_rows",
    "softmax_rows_backward",
]


@dataclass
class EmbedPoolParams:
    filter: FilterParams

    @property
    def target_size(self) -> int:
        return self.filter.weights.shape[2]


def init_embed_pool(L, C, target_size, rng) -> EmbedPoolParams:
    if target_size < 1:
        raise ValueError("target size must be >= 1")
    return EmbedPoolParams(init_filter(L, C, target_size, rng))


class DenseAdjacency:
    """Dense adjacency stack produced by pooling; quacks like ``AdjacencyTensor``
    for the convolution code (``n``, ``L``, ``matrices``)."""

    def __init__(self, matrices):
        self.matrices = [np.asarray(m, dtype=np.float64) for m in matrices]
        if not self.matrices:
            raise ValueError("DenseAdjacency needs the non-identity slices; use n-only graphs via AdjacencyTensor")
        self.n = self.matrices[0].shape[0]

    @property
    def L(self) -> int:
        return len(self.matrices) + 1

    def to_tensor(self) -> AdjacencyTensor:
        return AdjacencyTensor((AdjacencySlice.identity(self.n),)
                               + tuple(AdjacencySlice.from_dense(m) for m in self.matrices))


def embed_logits(adjacency, vertices, params: EmbedPoolParams) -> np.ndarray:
    return conv_forward(neighbor_aggregate(adjacency, vertices), params.filter)


def softmax_rows(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(emb, grad_emb) -> np.ndarray:
    return emb * (grad_emb - np.sum(grad_emb * emb, axis=1, keepdims=True))


def pool_vertices(emb, vertices) -> np.ndarray:
    emb = np.asarray(emb, dtype=np.float64)
    v = np.asarray(vertices, dtype=np.float64)
    if emb.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"embedding has {emb.shape[0]} rows, V has {v.shape[0]}")
    return emb.T @ v


def pooled_slices(emb, adjacency) -> list:
    """Dense ``S^T A_l S`` for every slice ``l >= 1``."""
    emb = np.asarray(emb, dtype=np.float64)
    if emb.shape[0] != adjacency.n:
        raise ShapeMismatch(f"embedding has {emb.shape[0]} rows, adjacency n={adjacency.n}")
    return [emb.T @ np.asarray(op @ emb) for op in adjacency.matrices]


def pool_adjacency(emb, adjacency) -> AdjacencyTensor:
    n_out = np.asarray(emb).shape[1]
    out = [AdjacencySlice.identity(n_out)]
    out.extend(AdjacencySlice.from_dense(m) for m in pooled_slices(emb, adjacency))
    return AdjacencyTensor(tuple(out))


def pool_backward(emb, vertices, adjacency, params: EmbedPoolParams, nbr, grad_v_out,
                  grad_a_out=None, adjacency_grad=False):
    """Adjoint of embed pooling through both the vertex and adjacency outputs.

    ``grad_a_out`` lists ``dL/dA_out_l`` for ``l >= 1`` (``None`` when the pooled
    adjacency is unused downstream). Returns a dict with ``logits``, ``vertices``,
    ``weights``, ``biases`` and, if ``adjacency_grad``, ``adjacency`` (dense, per slice
    ``l >= 1``).
    """
    v = np.asarray(vertices, dtype=np.float64)
    grad_v_out = np.asarray(grad_v_out, dtype=np.float64)
    if grad_v_out.shape != (emb.shape[1], v.shape[1]):
        raise ShapeMismatch(f"pooled-vertex grad shape {grad_v_out.shape} != {(emb.shape[1], v.shape[1])}")
    grad_emb = v @ grad_v_out.T
    grad_v = emb @ grad_v_out
    ops = adjacency.matrices
    grad_adj = [None] * len(ops)
    if grad_a_out is not None:
        if len(grad_a_out) != len(ops):
            raise ShapeMismatch("pooled adjacency grads do not match slice count")
        for l, (op, g) in enumerate(zip(ops, grad_a_out)):
            if g is None:
                continue
            # d/dS of tr(G^T S^T A S) = A S G^T + A^T S G
            grad_emb += np.asarray(op @ (emb @ g.T)) + np.asarray(op.T @ (emb @ g))
            if adjacency_grad:
                grad_adj[l] = emb @ g @ emb.T
    grad_logits = softmax_rows_backward(emb, grad_emb)
    res = conv_backward(nbr, adjacency, params.filter, grad_logits, vertices=v,
                        adjacency_grad=adjacency_grad)
    out = {"logits": grad_logits, "vertices": grad_v + res[0], "weights": res[1], "biases": res[2]}
    if adjacency_grad:
        out["adjacency"] = [res[3][l] if grad_adj[l] is None else res[3][l] + grad_adj[l]
                            for l in range(len(ops))]
    return out


def gfc(adjacency, vertices, params: EmbedPoolParams) -> np.ndarray:
    """Pool to a single vertex; the embedding is all ones so this is the column sum of ``V``."""
    if params.target_size != 1:
        raise ShapeMismatch(f"GFC needs a single output vertex, got {params.target_size}")
    emb = softmax_rows(embed_logits(adjacency, vertices, params))
    return pool_vertices(emb, vertices)[0]
