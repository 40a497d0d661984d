"""Graph data model: vertex matrices, multi-slice sparse adjacency tensors.

An adjacency tensor is an ordered stack of ``L`` sparse ``n x n`` slices. Slice 0
is always the identity and is inserted by the constructors here, never by the
caller. Weights are stored raw (no degree normalization).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateEdge,
    IndexOutOfRange,
    InvalidGraph,
    NonFiniteValue,
    NonIdentityFirstSlice,
    ReservedSlice,
    ShapeMismatch,
)

__all__ = [
    "AdjacencySlice",
    "AdjacencyTensor",
    "GraphSample",
    "GridInfo",
    "adjacency_from_edges",
    "densify_slice",
    "graph_violations",
    "validate_graph",
]


@dataclass(frozen=True, eq=False)
class AdjacencySlice:
    """One ``n x n`` adjacency matrix in coordinate form.

    ``rows``, ``cols`` and ``weights`` are parallel arrays. Constructors keep them
    sorted by ``(row, col)`` so sparse products accumulate in a fixed order.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_entries(cls, n, entries: Iterable[tuple]) -> "AdjacencySlice":
        entries = list(entries)
        if entries:
            i, j, w = zip(*entries)
        else:
            i, j, w = (), (), ()
        return cls._sorted(n, np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64),
                           np.asarray(w, dtype=np.float64))

    @classmethod
    def identity(cls, n) -> "AdjacencySlice":
        idx = np.arange(n, dtype=np.int64)
        return cls(int(n), idx, idx.copy(), np.ones(n))

    @classmethod
    def empty(cls, n) -> "AdjacencySlice":
        return cls.from_entries(n, [])

    @classmethod
    def from_dense(cls, matrix) -> "AdjacencySlice":
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeMismatch(f"adjacency must be square, got {m.shape}")
        i, j = np.nonzero(m)
        return cls(m.shape[0], i.astype(np.int64), j.astype(np.int64), m[i, j].copy())

    @classmethod
    def _sorted(cls, n, i, j, w):
        order = np.lexsort((j, i))
        return cls(int(n), i[order], j[order], w[order])

    @property
    def entries(self) -> list:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.rows, self.cols, self.weights)]

    @property
    def nnz(self) -> int:
        return len(self.weights)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        m = sp.csr_matrix((self.weights, (self.rows, self.cols)), shape=(self.n, self.n))
        m.sort_indices()
        return m

    def is_identity(self) -> bool:
        return (self.nnz == self.n
                and np.array_equal(np.sort(self.rows), np.arange(self.n))
                and np.array_equal(self.rows, self.cols)
                and np.all(self.weights == 1.0))

    def transpose(self) -> "AdjacencySlice":
        return AdjacencySlice._sorted(self.n, self.cols.copy(), self.rows.copy(), self.weights.copy())

    def dense(self) -> np.ndarray:
        return densify_slice(self)


def densify_slice(adj_slice: AdjacencySlice) -> np.ndarray:
    out = np.zeros((adj_slice.n, adj_slice.n))
    out[adj_slice.rows, adj_slice.cols] = adj_slice.weights
    return out


@dataclass(frozen=True, eq=False)
class AdjacencyTensor:
    slices: tuple

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))

    @classmethod
    def identity_only(cls, n) -> "AdjacencyTensor":
        return cls((AdjacencySlice.identity(n),))

    @classmethod
    def from_slices(cls, slices: Sequence[AdjacencySlice]) -> "AdjacencyTensor":
        """Prepend the identity to caller-provided slices 1..L-1."""
        if not slices:
            raise ValueError("need at least one non-identity slice; use identity_only")
        n = slices[0].n
        return cls((AdjacencySlice.identity(n),) + tuple(slices))

    @property
    def n(self) -> int:
        return self.slices[0].n

    @property
    def L(self) -> int:
        return len(self.slices)

    def __len__(self):
        return len(self.slices)

    def __getitem__(self, idx):
        return self.slices[idx]

    @cached_property
    def matrices(self) -> list:
        """Sparse CSR operators for slices 1..L-1 (slice 0 is applied as a copy)."""
        return [s.csr for s in self.slices[1:]]

    @cached_property
    def stacked(self) -> sp.csr_matrix:
        """``(n*L) x n`` operator whose row ``i*L + l`` is row ``i`` of slice ``l``.

        ``stacked @ V`` reshapes to the ``n x (L*C)`` neighbor matrix without a copy.
        """
        L = self.L
        rows = np.concatenate([s.rows * L + l for l, s in enumerate(self.slices)])
        cols = np.concatenate([s.cols for s in self.slices])
        vals = np.concatenate([s.weights for s in self.slices])
        m = sp.csr_matrix((vals, (rows, cols)), shape=(self.n * L, self.n))
        m.sort_indices()
        return m

    def dense(self) -> np.ndarray:
        """``n x n x L`` dense stack; test helper only."""
        return np.stack([densify_slice(s) for s in self.slices], axis=-1)


@dataclass(frozen=True)
class GridInfo:
    """Image geometry carried by graphs built from pixel grids."""

    height: int
    width: int
    mode: str = "directional"


@dataclass(frozen=True, eq=False)
class GraphSample:
    """A graph ``(V, A)`` with either a graph label or per-vertex labels and a train mask.

    ``mask[n] == 1`` marks vertex ``n`` as a training vertex; vertices with mask 0
    contribute nothing to the loss and are the ones scored at evaluation.
    """

    vertices: np.ndarray
    adjacency: AdjacencyTensor
    label: Optional[int] = None
    vertex_labels: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    grid: Optional[GridInfo] = field(default=None)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_features(self) -> int:
        return self.vertices.shape[1]

    @property
    def is_vertex_task(self) -> bool:
        return self.vertex_labels is not None


def _slice_violations(idx, s, n):
    found = []
    if s.n != n:
        found.append(ShapeMismatch(f"slice {idx} has n={s.n}, expected {n}"))
    if s.nnz:
        bad = (s.rows < 0) | (s.rows >= s.n) | (s.cols < 0) | (s.cols >= s.n)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            found.append(IndexOutOfRange(
                f"slice {idx} entry ({int(s.rows[k])},{int(s.cols[k])}) outside [0,{s.n})"))
        if not np.all(np.isfinite(s.weights)):
            found.append(NonFiniteValue(f"slice {idx} has non-finite weights"))
        pairs = s.rows.astype(np.int64) * max(s.n, 1) + s.cols
        uniq, counts = np.unique(pairs, return_counts=True)
        if (counts > 1).any():
            dup = int(uniq[counts > 1][0])
            found.append(DuplicateEdge(f"slice {idx} repeats pair ({dup // s.n},{dup % s.n})"))
    return found


def graph_violations(sample: GraphSample) -> list:
    """Every invariant violation of ``sample`` as exception instances (empty if valid)."""
    found = []
    v = np.asarray(sample.vertices)
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
        found.append(ShapeMismatch(f"vertex matrix must be N x C with N, C >= 1, got {v.shape}"))
        return found
    if not np.all(np.isfinite(v)):
        found.append(NonFiniteValue("vertex matrix has non-finite entries"))
    adj = sample.adjacency
    if len(adj.slices) < 1:
        found.append(ShapeMismatch("adjacency tensor has no slices"))
        return found
    n = adj.n
    if v.shape[0] != n:
        found.append(ShapeMismatch(f"V has {v.shape[0]} rows but adjacency has n={n}"))
    for idx, s in enumerate(adj.slices):
        found.extend(_slice_violations(idx, s, n))
    if not adj.slices[0].is_identity():
        found.append(NonIdentityFirstSlice("slice 0 is not the identity matrix"))
    if sample.vertex_labels is not None:
        labels = np.asarray(sample.vertex_labels)
        if labels.shape != (v.shape[0],):
            found.append(ShapeMismatch(f"vertex labels length {labels.shape} != N={v.shape[0]}"))
        if sample.mask is None or np.asarray(sample.mask).shape != (v.shape[0],):
            found.append(ShapeMismatch("vertex task needs a mask of length N"))
        elif not np.isin(np.asarray(sample.mask), (0, 1)).all():
            found.append(NonFiniteValue("mask bits must be 0 or 1"))
    return found


def validate_graph(sample: GraphSample) -> None:
    """Raise ``InvalidGraph`` listing every violation; return ``None`` if the sample is valid."""
    found = graph_violations(sample)
    if found:
        raise InvalidGraph(found)


def adjacency_from_edges(n, edges: Iterable[tuple]) -> AdjacencyTensor:
    """Build ``[I, A_1, ..., A_{L-1}]`` from ``(slice, i, j, w)`` tuples.

    ``L - 1`` is the largest slice index mentioned; unmentioned slices in between
    are empty.
    """
    by_slice: dict = {}
    for edge in edges:
        l, i, j, w = edge
        if l == 0:
            raise ReservedSlice(f"slice 0 is the implicit identity; got edge {edge}")
        if l < 0:
            raise IndexOutOfRange(f"slice index {l} < 0")
        if not (0 <= i < n and 0 <= j < n):
            raise IndexOutOfRange(f"edge ({i},{j}) outside [0,{n})")
        if not np.isfinite(w):
            raise NonFiniteValue(f"edge ({i},{j}) weight {w}")
        bucket = by_slice.setdefault(int(l), {})
        if (i, j) in bucket:
            raise DuplicateEdge(f"slice {l} repeats pair ({i},{j})")
        bucket[(int(i), int(j))] = float(w)
    n_slices = max(by_slice, default=0)
    slices = [AdjacencySlice.identity(n)]
    for l in range(1, n_slices + 1):
        bucket = by_slice.get(l, {})
        slices.append(AdjacencySlice.from_entries(n, [(i, j, w) for (i, j), w in bucket.items()]))
    return AdjacencyTensor(tuple(slices))
