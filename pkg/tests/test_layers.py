import numpy as np
import pytest

from conftest import numeric_grad, rel_err
from graphcnn.errors import EmptyBatch, EmptyMask, InvalidClass, InvalidRate
from graphcnn.layers import (
    BatchNormState,
    batch_norm,
    batch_norm_backward,
    dropout,
    dropout_backward,
    fully_connected,
    fully_connected_backward,
    relu,
    relu_backward,
    softmax_xent,
)


def test_relu_examples():
    assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    assert np.array_equal(relu_backward(np.array([-1.0, 0.0, 2.0]), np.full(3, 5.0)), [0, 0, 5])


def test_relu_gradient_away_from_kink(rng):
    x = rng.normal(size=20)
    x[np.abs(x) < 0.1] += 0.5
    g = rng.normal(size=20)
    assert rel_err(relu_backward(x, g), numeric_grad(lambda: float(g @ relu(x)), x)) < 1e-8


def test_batch_norm_zero_variance():
    st = BatchNormState.create(2)
    outs, _ = batch_norm([np.full((4, 2), 3.0)], st, training=True)
    assert not outs[0].any()


def test_batch_norm_statistics(rng):
    st = BatchNormState.create(3)
    batch = [rng.normal(2.0, 5.0, size=(n, 3)) for n in (4, 7, 5)]
    outs, _ = batch_norm(batch, st, training=True)
    stacked = np.vstack(outs)
    assert np.abs(stacked.mean(axis=0)).max() < 1e-10
    assert np.abs(stacked.var(axis=0) - 1).max() < 1e-6
    # exact form, including the epsilon guard
    var = np.vstack(batch).var(axis=0)
    assert np.allclose(stacked.var(axis=0), var / (var + st.epsilon), rtol=1e-12)
    assert [o.shape[0] for o in outs] == [4, 7, 5]


def test_batch_norm_running_update(rng):
    st = BatchNormState.create(2)
    x = rng.normal(size=(10, 2))
    batch_norm([x], st, training=True)
    assert np.allclose(st.running_mean, 0.1 * x.mean(axis=0))
    assert np.allclose(st.running_var, 0.9 + 0.1 * x.var(axis=0))
    y, _ = batch_norm([x], st, training=False)
    expected = (x - st.running_mean) / np.sqrt(st.running_var + st.epsilon)
    assert np.allclose(y[0], expected)


def test_batch_mode_ignores_running(rng):
    st = BatchNormState.create(2, mode="batch")
    x = rng.normal(size=(10, 2))
    y, _ = batch_norm([x], st, training=False)
    assert np.abs(y[0].mean(axis=0)).max() < 1e-10
    assert np.array_equal(st.running_mean, np.zeros(2))


def test_batch_norm_empty():
    with pytest.raises(EmptyBatch):
        batch_norm([], BatchNormState.create(1), training=True)


@pytest.mark.parametrize("seed", range(5))
def test_batch_norm_gradient(seed):
    rng = np.random.default_rng(seed)
    st = BatchNormState(rng.normal(size=3), rng.normal(size=3))
    batch = [rng.normal(size=(n, 3)) for n in (3, 4, 2)]
    gs = [rng.normal(size=b.shape) for b in batch]

    def f():
        outs, _ = batch_norm(batch, st, training=True)
        return float(sum(np.sum(g * o) for g, o in zip(gs, outs)))

    _, cache = batch_norm(batch, st, training=True)
    dx, dgamma, dbeta = batch_norm_backward(cache, gs)
    for x, d in zip(batch, dx):
        assert rel_err(d, numeric_grad(f, x)) < 1e-5
    assert rel_err(dgamma, numeric_grad(f, st.gamma)) < 1e-5
    assert rel_err(dbeta, numeric_grad(f, st.beta)) < 1e-5


def test_fc_examples():
    x = np.array([1.0, 2.0])
    assert np.array_equal(fully_connected(x, np.eye(2), np.zeros(2)), x)
    assert np.array_equal(fully_connected(x, np.array([[3.0, 4.0]]), np.array([5.0])), [16])


def test_fc_gradient(rng):
    x, w, b = rng.normal(size=4), rng.normal(size=(3, 4)), rng.normal(size=3)
    g = rng.normal(size=3)

    def f():
        return float(g @ fully_connected(x, w, b))

    dx, dw, db = fully_connected_backward(x, w, g)
    assert rel_err(dx, numeric_grad(f, x)) < 1e-8
    assert rel_err(dw, numeric_grad(f, w)) < 1e-8
    assert rel_err(db, numeric_grad(f, b)) < 1e-8


def test_dropout_rate_zero(rng):
    x = rng.normal(size=(5, 3))
    y, mask = dropout(x, 0.0, rng, training=True)
    assert np.array_equal(y, x) and mask is None


def test_dropout_reproducible():
    x = np.ones((50, 4))
    a, _ = dropout(x, 0.3, np.random.default_rng(7), training=True)
    b, _ = dropout(x, 0.3, np.random.default_rng(7), training=True)
    assert np.array_equal(a, b)


def test_dropout_keep_fraction():
    rate = 0.3
    _, mask = dropout(np.ones(10**6), rate, np.random.default_rng(0), training=True)
    assert abs(np.mean(mask > 0) - (1 - rate)) < 1e-2
    # inverted scaling keeps the expectation
    assert abs(mask.mean() - 1) < 1e-2


def test_dropout_backward_and_inference(rng):
    x = rng.normal(size=(4, 4))
    y, mask = dropout(x, 0.5, rng, training=False)
    assert np.array_equal(y, x) and mask is None
    y, mask = dropout(x, 0.5, rng, training=True)
    assert np.array_equal(dropout_backward(mask, np.ones_like(x)), mask)
    with pytest.raises(InvalidRate):
        dropout(x, 1.0, rng, training=True)


def test_xent_uniform():
    for k in (2, 5, 10):
        assert softmax_xent(np.zeros((3, k)), [0, 1, 1]).value == pytest.approx(np.log(k), abs=1e-15)


def test_xent_mask_errors():
    with pytest.raises(EmptyMask):
        softmax_xent(np.zeros((2, 2)), [0, 1], mask=[0, 0])
    with pytest.raises(InvalidClass):
        softmax_xent(np.zeros((2, 2)), [0, 2])


def test_xent_gradient(rng):
    z = rng.normal(size=(4, 3))
    t = np.array([0, 2, 1, 2])
    out = softmax_xent(z, t)
    assert rel_err(out.grad, numeric_grad(lambda: softmax_xent(z, t).value, z)) < 1e-7


def test_xent_masked_rows_get_zero_gradient(rng):
    z = rng.normal(size=(5, 3))
    t = np.array([0, 1, 2, 0, 1])
    mask = np.array([1, 0, 1, 0, 1])
    out = softmax_xent(z, t, mask)
    assert np.all(out.grad[mask == 0] == 0.0)
    sub = softmax_xent(z[mask == 1], t[mask == 1])
    assert out.value == pytest.approx(sub.value, abs=1e-15)
