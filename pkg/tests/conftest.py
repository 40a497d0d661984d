import numpy as np
import pytest

from graphcnn.graph import AdjacencySlice, AdjacencyTensor


def random_adjacency(rng, n, L, density=0.4, symmetric=False):
    """Random tensor with identity slice 0 and ``L - 1`` weighted slices."""
    slices = [AdjacencySlice.identity(n)]
    for _ in range(L - 1):
        dense = np.where(rng.random((n, n)) < density, rng.normal(size=(n, n)), 0.0)
        if symmetric:
            dense = np.triu(dense) + np.triu(dense, 1).T
        slices.append(AdjacencySlice.from_dense(dense))
    return AdjacencyTensor(tuple(slices))


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar ``f()`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        fp = f()
        x[idx] = orig - eps
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, n, floor=1e-8):
    """Block-level relative error ``max|a - n| / max(max|a|, max|n|, floor)``."""
    a, n = np.asarray(a), np.asarray(n)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), floor)
    return float(np.abs(a - n).max(initial=0.0) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
