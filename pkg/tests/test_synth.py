import numpy as np

from graphcnn.graph import validate_graph
from graphcnn.io import read_raw_images
from graphcnn.synth import (
    gen_community_graph,
    gen_grid_dataset,
    gen_motif_dataset,
    has_triangle,
    images_to_float,
)


def trace_triangles(sample):
    """Independent check: an undirected simple graph has a triangle iff trace(A^3) > 0."""
    a = (sample.adjacency[1].dense() != 0).astype(float) if sample.adjacency.L > 1 else np.zeros((1, 1))
    return np.trace(a @ a @ a) > 0


def test_triangle_and_star():
    assert has_triangle(3, {(0, 1), (1, 2), (0, 2)})
    assert not has_triangle(5, {(0, k) for k in range(1, 5)})


def test_motif_labels_match_trace_oracle():
    data = gen_motif_dataset(120, seed=4)
    for s in data:
        validate_graph(s)
        assert int(trace_triangles(s)) == s.label


def test_motif_balanced_and_deterministic():
    data = gen_motif_dataset(100, seed=1)
    labels = [s.label for s in data]
    assert labels.count(0) == labels.count(1) == 50
    again = gen_motif_dataset(100, seed=1)
    assert all(np.array_equal(a.vertices, b.vertices) for a, b in zip(data, again))
    sizes = {s.n_vertices for s in data}
    assert len(sizes) > 1  # heterogeneous


def test_motif_adjacency_symmetric():
    for s in gen_motif_dataset(20, seed=2):
        if s.adjacency.L > 1:
            a = s.adjacency[1].dense()
            assert np.array_equal(a, a.T)


def test_grid_dataset_bytes_and_classes():
    blob = gen_grid_dataset(40, seed=3)
    assert blob == gen_grid_dataset(40, seed=3)
    labels, images = read_raw_images(blob)
    assert images.shape == (40, 8, 8, 1) and set(labels) <= {0, 1}


def test_noise_free_horizontal_bar_is_class_zero():
    labels, images = read_raw_images(gen_grid_dataset(30, seed=0, noise=0))
    for y, img in zip(labels, images[..., 0]):
        rows = np.nonzero(img.max(axis=1))[0]
        cols = np.nonzero(img.max(axis=0))[0]
        if y == 0:
            assert len(rows) == 1 and len(cols) == img.shape[1]
        else:
            assert len(cols) == 1 and len(rows) == img.shape[0]


def test_images_to_float_range():
    _, images = read_raw_images(gen_grid_dataset(5, seed=0))
    f = images_to_float(images)
    assert f.dtype == np.float64 and f.min() >= 0 and f.max() <= 1


def test_community_graph():
    g = gen_community_graph(n=200, seed=0)
    validate_graph(g)
    assert g.n_vertices == 200 and g.mask.sum() == 100
    assert set(np.unique(g.vertex_labels)) == {0, 1}
    a = g.adjacency[1].dense()
    same = g.vertex_labels[:, None] == g.vertex_labels[None, :]
    assert a[same].mean() > 5 * a[~same].mean()
