"""Small synthetic datasets for desk-scale experiments and tests."""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .graph import AdjacencySlice, AdjacencyTensor, GraphSample
from .io import write_raw_images

__all__ = [
    "gen_community_graph",
    "gen_grid_dataset",
    "gen_motif_dataset",
    "has_triangle",
    "images_to_float",
    "undirected_graph",
]


def has_triangle(n, edge_set) -> bool:
    """Brute-force search over vertex triples."""
    return any((a, b) in edge_set and (b, c) in edge_set and (a, c) in edge_set
               for a, b, c in combinations(range(n), 3))


def undirected_graph(vertices, pairs, label=None) -> GraphSample:
    """Graph with one symmetric 0/1 slice built from unordered ``pairs``."""
    n = len(vertices)
    entries = [(i, j, 1.0) for i, j in pairs] + [(j, i, 1.0) for i, j in pairs]
    return GraphSample(np.asarray(vertices, dtype=np.float64),
                       AdjacencyTensor((AdjacencySlice.identity(n), AdjacencySlice.from_entries(n, entries))),
                       label=label)


def gen_motif_dataset(count, seed=0, n_range=(6, 20), edge_prob=0.25, n_features=4):
    """Random undirected graphs labelled 1 iff they contain a triangle.

    Each vertex gets a random one-hot type out of ``n_features``. Samples are drawn until each class has its quota (``count // 2`` and the
    rest), so the classes are balanced exactly.
    """
    if count < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    quota = [count // 2, count - count // 2]
    out = []
    while len(out) < count:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        upper = np.triu(rng.random((n, n)) < edge_prob, k=1)
        pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(upper))]
        label = int(has_triangle(n, set(pairs)))
        feats = np.eye(n_features)[rng.integers(n_features, size=n)]
        if quota[label] == 0:
            continue
        quota[label] -= 1
        out.append(undirected_graph(feats, pairs, label))
    return out


def gen_grid_dataset(count, height=8, width=8, seed=0, noise=32) -> bytes:
    """Raw image bytes: class 0 has one bright horizontal bar, class 1 a vertical one.

    Bars sit at a random row/column; every pixel gets additive uniform noise in
    ``[0, noise]`` (out of 255).
    """
    if height < 4 or width < 4:
        raise ValueError("images must be at least 4x4")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(count) % 2)
    images = np.zeros((count, height, width, 1), dtype=np.int64)
    for k, label in enumerate(labels):
        if label == 0:
            images[k, int(rng.integers(height)), :, 0] = 200
        else:
            images[k, :, int(rng.integers(width)), 0] = 200
    images += rng.integers(0, noise + 1, size=images.shape)
    return write_raw_images(labels, np.clip(images, 0, 255).astype(np.uint8))


def images_to_float(images):
    return np.asarray(images, dtype=np.float64) / 255.0


def gen_community_graph(n=200, p_in=0.1, p_out=0.01, n_features=8, signal=0.5,
                        train_fraction=0.5, seed=0) -> GraphSample:
    """Two-community stochastic block graph for masked vertex classification.

    Vertex features are Gaussian noise shifted by ``+signal`` or ``-signal``
    depending on the community; ``train_fraction`` of vertices get mask 1.
    """
    rng = np.random.default_rng(seed)
    labels = (np.arange(n) >= n // 2).astype(np.int64)
    same = labels[:, None] == labels[None, :]
    upper = np.triu(rng.random((n, n)) < np.where(same, p_in, p_out), k=1)
    pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(upper))]
    feats = rng.normal(size=(n, n_features)) + np.where(labels == 1, signal, -signal)[:, None]
    mask = np.zeros(n, dtype=np.int64)
    mask[rng.permutation(n)[: int(round(train_fraction * n))]] = 1
    g = undirected_graph(feats, pairs)
    return GraphSample(g.vertices, g.adjacency, vertex_labels=labels, mask=mask)
