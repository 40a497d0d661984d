"""Vertex-domain graph convolution.

The filter is ``V_out = sum_l A_l V h_l + b`` with ``h_l`` a ``C x F`` slab per
adjacency slice. The fast path first builds the neighbor matrix
``[A_0 V | A_1 V | ... | A_{L-1} V]`` (an im2col analogue) and then applies one
``(L*C) x F`` matmul. ``dense_filter_reference`` materializes the full
``N x N x C x F`` filter tensor and exists only as a test oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteValue, ShapeMismatch
from .graph import AdjacencySlice, densify_slice

__all__ = [
    "FilterParams",
    "apply_dense_filter",
    "conv_backward",
    "conv_forward",
    "dense_filter_reference",
    "init_filter",
    "neighbor_aggregate",
    "poly_filter",
]


@dataclass
class FilterParams:
    weights: np.ndarray  # L x C x F
    biases: np.ndarray  # F

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 3 or min(self.weights.shape) < 1:
            raise ShapeMismatch(f"weights must be L x C x F with positive dims, got {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[2],):
            raise ShapeMismatch(f"biases shape {self.biases.shape} != ({self.weights.shape[2]},)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise NonFiniteValue("filter parameters must be finite")

    @property
    def shape(self):
        return self.weights.shape

    @property
    def n_params(self) -> int:
        return self.weights.size + self.biases.size


def init_filter(L, C, F, rng: np.random.Generator) -> FilterParams:
    """Gaussian weights with std ``1/sqrt(L*C)`` (fan-in over aggregated inputs), zero biases."""
    w = rng.normal(0.0, 1.0 / np.sqrt(L * C), size=(L, C, F))
    return FilterParams(w, np.zeros(F))


def _operators(adjacency):
    # Anything exposing ``n`` and ``matrices`` (the non-identity slices) works here,
    # so dense pooled adjacencies share this code path with sparse input graphs.
    return adjacency.matrices


def neighbor_aggregate(adjacency, vertices) -> np.ndarray:
    """``N x (L*C)`` matrix whose column block ``l`` is ``A_l @ V`` (block 0 is ``V``)."""
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != adjacency.n:
        raise ShapeMismatch(f"V shape {v.shape} does not match adjacency n={adjacency.n}")
    stacked = getattr(adjacency, "stacked", None)
    if stacked is not None:
        return np.asarray(stacked @ v).reshape(adjacency.n, -1)
    blocks = [v]
    for op in _operators(adjacency):
        blocks.append(np.asarray(op @ v))
    return np.concatenate(blocks, axis=1)


def conv_forward(nbr, params: FilterParams) -> np.ndarray:
    L, C, F = params.weights.shape
    if nbr.ndim != 2 or nbr.shape[1] != L * C:
        raise ShapeMismatch(f"neighbor matrix has {nbr.shape[1]} columns, filter expects {L * C}")
    return nbr @ params.weights.reshape(L * C, F) + params.biases


def conv_backward(nbr, adjacency, params: FilterParams, grad_out, vertices=None,
                  adjacency_grad=False):
    """Reverse-mode pass of ``conv_forward(neighbor_aggregate(A, V), params)``.

    Returns ``(grad_vertices, grad_weights, grad_biases)``; with
    ``adjacency_grad=True`` a fourth item lists dense ``dL/dA_l`` for ``l >= 1``
    (needs ``vertices``).
    """
    L, C, F = params.weights.shape
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (nbr.shape[0], F):
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} != ({nbr.shape[0]}, {F})")
    if nbr.shape[1] != L * C:
        raise ShapeMismatch("neighbor matrix does not match filter shape")
    grad_w = (nbr.T @ grad_out).reshape(L, C, F)
    grad_b = grad_out.sum(axis=0)
    # G_l = grad_out @ h_l^T, one N x C block per slice.
    per_slice = grad_out @ params.weights.reshape(L * C, F).T
    grad_v = per_slice[:, :C].copy()
    ops = _operators(adjacency)
    if len(ops) != L - 1:
        raise ShapeMismatch(f"adjacency has {len(ops) + 1} slices, filter expects {L}")
    for l, op in enumerate(ops, start=1):
        grad_v += np.asarray(op.T @ per_slice[:, l * C:(l + 1) * C])
    if not adjacency_grad:
        return grad_v, grad_w, grad_b
    if vertices is None:
        raise ValueError("adjacency_grad=True requires the forward vertices")
    v = np.asarray(vertices, dtype=np.float64)
    grad_a = [per_slice[:, l * C:(l + 1) * C] @ v.T for l in range(1, L)]
    return grad_v, grad_w, grad_b, grad_a


def dense_filter_reference(adjacency, params: FilterParams) -> np.ndarray:
    """Explicit ``N x N x C x F`` filter tensor ``H[:, :, c, f] = sum_l h[l, c, f] A_l``.

    Memory is ``O(N^2 C F)``; only meant for small test graphs.
    """
    L, C, F = params.weights.shape
    if adjacency.L != L:
        raise ShapeMismatch(f"adjacency has {adjacency.L} slices, filter expects {L}")
    stack = np.stack([densify_slice(s) for s in adjacency.slices])  # L x N x N
    return np.einsum("lij,lcf->ijcf", stack, params.weights)


def apply_dense_filter(H, vertices, biases) -> np.ndarray:
    """``V_out[:, f] = sum_c H[:, :, c, f] @ V[:, c] + b[f]``."""
    return np.einsum("ijcf,jc->if", H, np.asarray(vertices, dtype=np.float64)) + biases


def poly_filter(adj_slice: AdjacencySlice, coeffs, vertices) -> np.ndarray:
    """``(h_0 I + h_1 A + ... + h_k A^k) V`` by repeated sparse products (Horner form)."""
    coeffs = list(coeffs)
    if not coeffs:
        raise ValueError("need at least one coefficient")
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != adj_slice.n:
        raise ShapeMismatch(f"V shape {v.shape} does not match slice n={adj_slice.n}")
    a = adj_slice.csr
    out = coeffs[-1] * v
    for h in reversed(coeffs[:-1]):
        out = np.asarray(a @ out) + h * v
    return out
