import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import numeric_grad, random_adjacency, rel_err
from graphcnn.conv import (
    FilterParams,
    apply_dense_filter,
    conv_backward,
    conv_forward,
    dense_filter_reference,
    init_filter,
    neighbor_aggregate,
    poly_filter,
)
from graphcnn.errors import ShapeMismatch
from graphcnn.graph import AdjacencySlice, AdjacencyTensor

SWAP = AdjacencySlice.from_entries(2, [(0, 1, 1.0), (1, 0, 1.0)])


def tensor(*slices):
    return AdjacencyTensor((AdjacencySlice.identity(slices[0].n if slices else 2),) + slices)


def test_neighbor_aggregate_swap():
    nbr = neighbor_aggregate(tensor(SWAP), np.array([[1.0], [2.0]]))
    assert np.array_equal(nbr, [[1, 2], [2, 1]])


def test_neighbor_aggregate_identity_only(rng):
    v = rng.normal(size=(2, 3))
    assert np.array_equal(neighbor_aggregate(AdjacencyTensor.identity_only(2), v), v)


def test_neighbor_aggregate_empty_slice():
    nbr = neighbor_aggregate(tensor(AdjacencySlice.empty(2)), np.array([[1.0], [2.0]]))
    assert np.array_equal(nbr, [[1, 0], [2, 0]])


def test_neighbor_aggregate_shape_check():
    with pytest.raises(ShapeMismatch):
        neighbor_aggregate(tensor(SWAP), np.ones((3, 1)))


def test_conv_forward_hand_example():
    nbr = np.array([[1.0, 2.0], [2.0, 1.0]])
    p = FilterParams(np.array([3.0, 5.0]).reshape(2, 1, 1), np.zeros(1))
    assert np.array_equal(conv_forward(nbr, p), [[13], [11]])


def test_conv_forward_bias_only(rng):
    nbr = rng.normal(size=(4, 6))
    out = conv_forward(nbr, FilterParams(np.zeros((2, 3, 1)), np.array([7.0])))
    assert np.all(out == 7.0)


def test_conv_forward_identity_tap(rng):
    adj = random_adjacency(rng, 5, 3)
    v = rng.normal(size=(5, 2))
    w = np.zeros((3, 2, 2))
    w[0] = np.eye(2)
    out = conv_forward(neighbor_aggregate(adj, v), FilterParams(w, np.zeros(2)))
    assert np.array_equal(out, v)


def test_conv_backward_zero_grad(rng):
    adj = random_adjacency(rng, 4, 2)
    v = rng.normal(size=(4, 2))
    p = init_filter(2, 2, 3, rng)
    gv, gw, gb = conv_backward(neighbor_aggregate(adj, v), adj, p, np.zeros((4, 3)))
    assert not gv.any() and not gw.any() and not gb.any()


def test_conv_backward_scalar_chain_rule():
    adj = AdjacencyTensor.identity_only(1)
    v, w, b = 1.5, -0.7, 0.3
    p = FilterParams(np.array([[[w]]]), np.array([b]))
    gv, gw, gb = conv_backward(neighbor_aggregate(adj, [[v]]), adj, p, np.ones((1, 1)))
    assert gv[0, 0] == w and gw[0, 0, 0] == v and gb[0] == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_conv_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    adj = random_adjacency(rng, 4, 2, density=0.6)
    v = rng.normal(size=(4, 2))
    p = init_filter(2, 2, 3, rng)
    p.biases[:] = rng.normal(size=3)
    g = rng.normal(size=(4, 3))

    def f():
        return float(np.sum(g * conv_forward(neighbor_aggregate(adj, v), p)))

    gv, gw, gb = conv_backward(neighbor_aggregate(adj, v), adj, p, g)
    assert rel_err(gv, numeric_grad(f, v)) < 1e-6
    assert rel_err(gw, numeric_grad(f, p.weights)) < 1e-6
    assert rel_err(gb, numeric_grad(f, p.biases)) < 1e-6


def test_conv_adjacency_gradient(rng):
    dense = np.where(rng.random((4, 4)) < 0.6, rng.normal(size=(4, 4)), 0.0)
    v = rng.normal(size=(4, 2))
    p = init_filter(2, 2, 3, rng)
    g = rng.normal(size=(4, 3))

    def f():
        adj = AdjacencyTensor((AdjacencySlice.identity(4), AdjacencySlice.from_dense(dense)))
        return float(np.sum(g * conv_forward(neighbor_aggregate(adj, v), p)))

    adj = AdjacencyTensor((AdjacencySlice.identity(4), AdjacencySlice.from_dense(dense)))
    *_, ga = conv_backward(neighbor_aggregate(adj, v), adj, p, g, vertices=v, adjacency_grad=True)
    # only entries present in the sparse pattern can be perturbed
    num = numeric_grad(f, dense)
    support = dense != 0
    assert rel_err(ga[0][support], num[support]) < 1e-6


def test_dense_filter_examples():
    p = FilterParams(np.full((1, 1, 1), 2.0), np.zeros(1))
    h = dense_filter_reference(AdjacencyTensor.identity_only(3), p)
    assert np.array_equal(h[:, :, 0, 0], 2 * np.eye(3))
    zero = dense_filter_reference(tensor(SWAP), FilterParams(np.zeros((2, 1, 1)), np.zeros(1)))
    assert not zero.any()
    h = dense_filter_reference(tensor(SWAP), FilterParams(np.array([1.0, 3.0]).reshape(2, 1, 1), np.zeros(1)))
    assert np.array_equal(h[:, :, 0, 0], [[1, 3], [3, 1]])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 16), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_sparse_matches_dense(n, L, C, F, seed):
    rng = np.random.default_rng(seed)
    adj = random_adjacency(rng, n, L)
    v = rng.normal(size=(n, C))
    p = FilterParams(rng.normal(size=(L, C, F)), rng.normal(size=F))
    sparse = conv_forward(neighbor_aggregate(adj, v), p)
    dense = apply_dense_filter(dense_filter_reference(adj, p), v, p.biases)
    assert np.abs(sparse - dense).max() < 1e-12


def test_poly_filter_examples(rng):
    a = rng.normal(size=(2, 2))
    got = poly_filter(AdjacencySlice.from_dense(a), [2.0], [[1.0], [3.0]])
    assert np.array_equal(got, [[2], [6]])
    got = poly_filter(SWAP, [1.0, 1.0], [[1.0], [2.0]])
    assert np.array_equal(got, [[3], [3]])


@pytest.mark.parametrize("seed", range(10))
def test_cascade_equals_squared_polynomial(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    a = AdjacencySlice.from_dense(np.where(rng.random((n, n)) < 0.3, rng.normal(size=(n, n)), 0.0))
    v = rng.normal(size=(n, 2))
    h0, h1 = rng.normal(size=2)
    twice = poly_filter(a, [h0, h1], poly_filter(a, [h0, h1], v))
    once = poly_filter(a, [h0 * h0, 2 * h0 * h1, h1 * h1], v)
    dense = (h0 * np.eye(n) + h1 * a.dense()) @ (h0 * np.eye(n) + h1 * a.dense()) @ v
    assert np.abs(twice - once).max() < 1e-12
    assert np.abs(once - dense).max() < 1e-12


def test_permutation_equivariance(rng):
    n, L, C, F = 7, 3, 2, 4
    adj = random_adjacency(rng, n, L)
    v = rng.normal(size=(n, C))
    p = FilterParams(rng.normal(size=(L, C, F)), rng.normal(size=F))
    perm = rng.permutation(n)
    pmat = np.eye(n)[perm]
    permuted = AdjacencyTensor(tuple(AdjacencySlice.from_dense(pmat @ s.dense() @ pmat.T) for s in adj.slices))
    out = conv_forward(neighbor_aggregate(adj, v), p)
    out_p = conv_forward(neighbor_aggregate(permuted, pmat @ v), p)
    assert np.abs(pmat @ out - out_p).max() < 1e-12


def test_filter_leaves_adjacency_unchanged(rng):
    adj = random_adjacency(rng, 6, 3)
    before = adj.dense().copy()
    conv_forward(neighbor_aggregate(adj, rng.normal(size=(6, 2))), init_filter(3, 2, 2, rng))
    assert np.array_equal(before, adj.dense())


def test_filter_params_validation():
    with pytest.raises(ShapeMismatch):
        FilterParams(np.zeros((2, 2, 3)), np.zeros(2))
