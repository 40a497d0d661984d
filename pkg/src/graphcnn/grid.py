"""Images as graphs.

Pixel ``(i, j)`` becomes vertex ``i * W + j``. In directional mode the adjacency
tensor has nine slices ``[I, up-left, up, up-right, left, right, down-left, down,
down-right]``; slice ``k`` carries the tap that a 3x3 kernel applies to that
neighbor, so a graph convolution over this tensor is exactly a zero-padded 3x3
cross-correlation. Neighbors that would wrap across a row or fall off the image
are omitted.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .conv import FilterParams
from .errors import IndexOutOfRange, NotAGridSample, ShapeMismatch
from .graph import AdjacencySlice, AdjacencyTensor, GraphSample, GridInfo

__all__ = [
    "DIRECTION_ORDER",
    "Direction",
    "GridShape",
    "conv3x3_oracle",
    "conv3x3_oracle_backward",
    "directional_adjacency",
    "filter_to_taps",
    "grid_adjacency",
    "grid_max_pool",
    "grid_max_pool_backward",
    "grid_max_pool_vertices",
    "image_to_graph",
    "isotropic_adjacency",
    "pixel_index",
    "taps_to_filter",
]


class Direction(Enum):
    SELF = (0, 0)
    UP_LEFT = (-1, -1)
    UP = (-1, 0)
    UP_RIGHT = (-1, 1)
    LEFT = (0, -1)
    RIGHT = (0, 1)
    DOWN_LEFT = (1, -1)
    DOWN = (1, 0)
    DOWN_RIGHT = (1, 1)

    @property
    def offset(self):
        return self.value


# Slice order of the directional tensor; also the tap order h_0..h_8.
DIRECTION_ORDER = tuple(Direction)


@dataclass(frozen=True)
class GridShape:
    height: int
    width: int
    channels: int = 1

    def __post_init__(self):
        if min(self.height, self.width, self.channels) < 1:
            raise ShapeMismatch(f"grid dims must be >= 1, got {self}")

    @property
    def n_pixels(self) -> int:
        return self.height * self.width


def pixel_index(i, j, shape: GridShape) -> int:
    if not (0 <= i < shape.height and 0 <= j < shape.width):
        raise IndexOutOfRange(f"pixel ({i},{j}) outside {shape.height}x{shape.width}")
    return i * shape.width + j


def directional_adjacency(shape: GridShape, direction: Direction) -> AdjacencySlice:
    """Entry ``(n, m, 1.0)`` iff pixel ``m`` is the ``direction`` neighbor of pixel ``n``."""
    h, w = shape.height, shape.width
    if direction is Direction.SELF:
        return AdjacencySlice.identity(h * w)
    di, dj = direction.offset
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ti, tj = ii + di, jj + dj
    ok = (ti >= 0) & (ti < h) & (tj >= 0) & (tj < w)
    rows = (ii * w + jj)[ok].astype(np.int64)
    cols = (ti * w + tj)[ok].astype(np.int64)
    return AdjacencySlice._sorted(h * w, rows, cols, np.ones(len(rows)))


def isotropic_adjacency(shape: GridShape) -> AdjacencySlice:
    """All eight neighbor relations in one slice."""
    parts = [directional_adjacency(shape, d) for d in DIRECTION_ORDER[1:]]
    rows = np.concatenate([p.rows for p in parts])
    cols = np.concatenate([p.cols for p in parts])
    return AdjacencySlice._sorted(shape.n_pixels, rows, cols, np.ones(len(rows)))


@lru_cache(maxsize=64)
def grid_adjacency(height, width, mode="directional") -> AdjacencyTensor:
    shape = GridShape(height, width)
    if mode == "directional":
        return AdjacencyTensor(tuple(directional_adjacency(shape, d) for d in DIRECTION_ORDER))
    if mode == "isotropic":
        return AdjacencyTensor((AdjacencySlice.identity(shape.n_pixels), isotropic_adjacency(shape)))
    raise ValueError(f"unknown grid mode {mode!r}")


def image_to_graph(image, mode="directional", label=None) -> GraphSample:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ShapeMismatch(f"image must be H x W x C, got {img.shape}")
    h, w, c = img.shape
    return GraphSample(
        vertices=img.reshape(h * w, c),
        adjacency=grid_adjacency(h, w, mode),
        label=label,
        grid=GridInfo(h, w, mode),
    )


def taps_to_filter(taps, biases) -> FilterParams:
    """Map a ``3 x 3 x C_in x C_out`` kernel onto directional-slice weights."""
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 4 or taps.shape[:2] != (3, 3):
        raise ShapeMismatch(f"taps must be 3 x 3 x C_in x C_out, got {taps.shape}")
    weights = np.stack([taps[di + 1, dj + 1] for di, dj in (d.offset for d in DIRECTION_ORDER)])
    return FilterParams(weights, np.asarray(biases, dtype=np.float64).copy())


def filter_to_taps(params: FilterParams) -> np.ndarray:
    """Inverse of ``taps_to_filter`` for 9-slice filters."""
    if params.weights.shape[0] != 9:
        raise ShapeMismatch("directional filters have 9 slices")
    taps = np.zeros((3, 3) + params.weights.shape[1:])
    for k, d in enumerate(DIRECTION_ORDER):
        di, dj = d.offset
        taps[di + 1, dj + 1] = params.weights[k]
    return taps


def _check_conv_shapes(img, taps, biases):
    if img.ndim != 3:
        raise ShapeMismatch(f"image must be H x W x C, got {img.shape}")
    if taps.ndim != 4 or taps.shape[:2] != (3, 3) or taps.shape[2] != img.shape[2]:
        raise ShapeMismatch(f"taps {taps.shape} incompatible with image {img.shape}")
    if biases.shape != (taps.shape[3],):
        raise ShapeMismatch(f"biases {biases.shape} != ({taps.shape[3]},)")


def conv3x3_oracle(image, taps, biases) -> np.ndarray:
    """Zero-padded 3x3 cross-correlation written as the explicit nine-term sum.

    ``out[i, j] = h_0 V[i, j] + h_1 V[i-1, j-1] + h_2 V[i-1, j] + ... + h_8 V[i+1, j+1] + b``
    where ``h_k = taps[di + 1, dj + 1]`` is a ``C_in x C_out`` matrix.
    """
    img = np.asarray(image, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    _check_conv_shapes(img, taps, biases)
    h, w, _ = img.shape
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)))
    out = np.zeros((h, w, taps.shape[3]))
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            shifted = padded[1 + di:1 + di + h, 1 + dj:1 + dj + w]
            out += shifted @ taps[di + 1, dj + 1]
    return out + biases


def conv3x3_oracle_backward(image, taps, grad_out):
    """Gradients of ``conv3x3_oracle``: ``(grad_image, grad_taps, grad_biases)``."""
    img = np.asarray(image, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    h, w, _ = img.shape
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)))
    grad_padded = np.zeros_like(padded)
    grad_taps = np.zeros_like(taps)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            shifted = padded[1 + di:1 + di + h, 1 + dj:1 + dj + w]
            grad_taps[di + 1, dj + 1] = np.einsum("ijc,ijf->cf", shifted, g)
            grad_padded[1 + di:1 + di + h, 1 + dj:1 + dj + w] += g @ taps[di + 1, dj + 1].T
    return grad_padded[1:-1, 1:-1], grad_taps, g.sum(axis=(0, 1))


@lru_cache(maxsize=64)
def _pool_candidates(height, width):
    """``(N_out, 4)`` pixel indices of each 2x2 block in increasing order; -1 pads edges."""
    oh, ow = -(-height // 2), -(-width // 2)
    cand = np.full((oh * ow, 4), -1, dtype=np.int64)
    for bi in range(oh):
        for bj in range(ow):
            k = 0
            for a in (0, 1):
                for b in (0, 1):
                    i, j = 2 * bi + a, 2 * bj + b
                    if i < height and j < width:
                        cand[bi * ow + bj, k] = i * width + j
                    k += 1
    return cand, oh, ow


def grid_max_pool_vertices(vertices, height, width):
    """Per-channel 2x2 max. Returns ``(pooled, argmax_pixel, (new_h, new_w))``.

    Ties go to the smallest pixel index.
    """
    v = np.asarray(vertices, dtype=np.float64)
    if v.shape[0] != height * width:
        raise ShapeMismatch(f"{v.shape[0]} vertices do not form a {height}x{width} grid")
    cand, oh, ow = _pool_candidates(height, width)
    padded = np.vstack([v, np.full((1, v.shape[1]), -np.inf)])
    vals = padded[cand]  # N_out x 4 x C; index -1 hits the -inf row
    pick = np.argmax(vals, axis=1)
    pooled = np.take_along_axis(vals, pick[:, None, :], axis=1)[:, 0, :]
    src = np.take_along_axis(np.broadcast_to(cand[:, :, None], vals.shape), pick[:, None, :], axis=1)[:, 0, :]
    return pooled, src, (oh, ow)


def grid_max_pool_backward(argmax_pixel, grad_out, n_in):
    grad = np.zeros((n_in, grad_out.shape[1]))
    cols = np.broadcast_to(np.arange(grad_out.shape[1]), grad_out.shape)
    np.add.at(grad, (argmax_pixel, cols), grad_out)
    return grad


def grid_max_pool(sample: GraphSample, shape: GridShape = None):
    """Stride-2 max pooling for image-derived graphs; returns ``(pooled_sample, new_shape)``."""
    if shape is None:
        if sample.grid is None:
            raise NotAGridSample("sample carries no grid geometry")
        shape = GridShape(sample.grid.height, sample.grid.width, sample.n_features)
    mode = sample.grid.mode if sample.grid is not None else "directional"
    pooled, _, (oh, ow) = grid_max_pool_vertices(sample.vertices, shape.height, shape.width)
    out = GraphSample(pooled, grid_adjacency(oh, ow, mode), label=sample.label,
                      grid=GridInfo(oh, ow, mode))
    return out, GridShape(oh, ow, shape.channels)
