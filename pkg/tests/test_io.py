import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_adjacency
from graphcnn.errors import EmptyMask, InvariantViolation, ParseError
from graphcnn.graph import GraphSample
from graphcnn.grid import image_to_graph
from graphcnn.io import (
    format_graph_dataset,
    load_graph_dataset,
    load_vertex_task,
    parse_graph_text,
    read_raw_images,
    save_graph_dataset,
    save_vertex_task,
    write_raw_images,
)
from graphcnn.network import instantiate
from graphcnn.training import TrainConfig, train


def assert_same(a, b):
    assert np.array_equal(a.vertices, b.vertices)
    assert a.label == b.label
    assert a.adjacency.L == b.adjacency.L
    for x, y in zip(a.adjacency.slices, b.adjacency.slices):
        assert x.entries == y.entries


def test_minimal_file():
    [s] = parse_graph_text("graph 1 1 1 0\n5.0\nend\n")
    assert np.array_equal(s.vertices, [[5.0]])
    assert s.adjacency.L == 1 and s.adjacency[0].is_identity and s.label == 0


def test_round_trip_bit_exact(tmp_path, rng):
    data = []
    for k in range(4):
        n = int(rng.integers(1, 8))
        data.append(GraphSample(rng.normal(size=(n, 3)) * 10.0 ** rng.integers(-20, 20),
                                random_adjacency(rng, n, 3), label=k))
    path = tmp_path / "d.txt"
    save_graph_dataset(data, path)
    for a, b in zip(data, load_graph_dataset(path)):
        assert_same(a, b)


def test_round_trip_keeps_grid(tmp_path, rng):
    g = image_to_graph(rng.random((3, 4, 2)), "isotropic", label=1)
    save_graph_dataset([g], tmp_path / "g.txt")
    [back] = load_graph_dataset(tmp_path / "g.txt")
    assert back.grid == g.grid
    assert_same(g, back)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 3), st.integers(1, 4))
def test_round_trip_fuzz(seed, n, c, L):
    rng = np.random.default_rng(seed)
    s = GraphSample(rng.normal(size=(n, c)) / rng.uniform(1e-3, 1e3), random_adjacency(rng, n, L),
                    label=int(rng.integers(0, 5)))
    [back] = parse_graph_text(format_graph_dataset([s]))
    assert_same(s, back)


@pytest.mark.parametrize("text, line", [
    ("graph 2 1 2 0\n1\n2\ne 0 0 1 1.0\nend\n", 4),
    ("graph 2 1 1 0\n1\nend\n", 3),
    ("graph 1 1 1 0\n1 2\nend\n", 2),
    ("graph 1 1 1 0\n1\n", 2),  # missing end, reported at the last line read
    ("graph 1 1 x 0\n1\nend\n", 1),
    ("graph 2 1 2 0\n1\n2\ne 1 0 7 1.0\nend\n", 4),
])
def test_parse_errors(text, line):
    with pytest.raises((ParseError, InvariantViolation)) as info:
        parse_graph_text(text)
    assert info.value.line == line


def test_comments_and_blank_lines_ignored():
    text = "# header\n\ngraph 1 2 1 1\n# inside\n1.5 -2\nend\n"
    [s] = parse_graph_text(text)
    assert np.array_equal(s.vertices, [[1.5, -2.0]])


def test_vertex_task_file(tmp_path):
    text = "graph 2 1 2 -1\n1\n2\ne 1 0 1 1\ne 1 1 0 1\ny 0 1\ny 1 0\nend\n"
    (tmp_path / "v.txt").write_text(text)
    g = load_vertex_task(tmp_path / "v.txt")
    assert list(g.mask) == [1, 0] and list(g.vertex_labels) == [0, 1]
    save_vertex_task(g, tmp_path / "w.txt")
    again = load_vertex_task(tmp_path / "w.txt")
    assert np.array_equal(again.mask, g.mask) and np.array_equal(again.vertex_labels, g.vertex_labels)
    assert_same(g, again)


def test_all_masked_vertex_file_loads_but_cannot_train(tmp_path):
    text = "graph 2 1 2 -1\n1\n2\ne 1 0 1 1\ny 0 0\ny 1 0\nend\n"
    (tmp_path / "v.txt").write_text(text)
    g = load_vertex_task(tmp_path / "v.txt")
    net = instantiate("2F", 1, 2, 2, task="vertex")
    with pytest.raises(EmptyMask):
        train(net, g, TrainConfig(epochs=1))


def test_raw_images_round_trip(rng):
    images = rng.integers(0, 256, size=(5, 4, 3, 2), dtype=np.uint8)
    labels = rng.integers(0, 10, size=5)
    blob = write_raw_images(labels, images)
    assert len(blob) == 16 + 5 * (1 + 4 * 3 * 2)
    got_labels, got_images = read_raw_images(blob)
    assert np.array_equal(got_labels, labels) and np.array_equal(got_images, images)


def test_raw_images_truncated():
    blob = write_raw_images([1], np.zeros((1, 2, 2), dtype=np.uint8))
    with pytest.raises(ParseError):
        read_raw_images(blob[:-1])
    with pytest.raises(ParseError):
        read_raw_images(b"\x00" * 4)
