"""A plain image CNN mirroring a directional Graph-CNN layer for layer.

Convolutions run through ``conv3x3_oracle`` on ``H x W x C`` arrays and pooling
is a 2x2 max over image blocks; no adjacency is ever touched. Built from a
trained or freshly initialized ``Network`` so both models start from the same
parameters, which makes lockstep training comparisons possible.
"""
from __future__ import annotations

import numpy as np

from .grid import conv3x3_oracle, conv3x3_oracle_backward, filter_to_taps
from .layers import (
    BatchNormState,
    batch_norm,
    batch_norm_backward,
    fully_connected,
    fully_connected_backward,
    relu,
    relu_backward,
    softmax_xent,
)
from .network import (
    BatchNormLayer,
    DenseLayer,
    GraphConvLayer,
    GridMaxPoolLayer,
    Network,
    ReLULayer,
)

__all__ = ["ImageCNN", "image_max_pool", "image_max_pool_backward"]


def image_max_pool(img):
    """2x2 stride-2 max with edge blocks reduced over the pixels that exist."""
    h, w, c = img.shape
    oh, ow = -(-h // 2), -(-w // 2)
    padded = np.full((2 * oh, 2 * ow, c), -np.inf)
    padded[:h, :w] = img
    blocks = padded.reshape(oh, 2, ow, 2, c).transpose(0, 2, 1, 3, 4).reshape(oh, ow, 4, c)
    pick = np.argmax(blocks, axis=2)  # first max wins: block order is row-major
    out = np.take_along_axis(blocks, pick[:, :, None, :], axis=2)[:, :, 0, :]
    return out, pick


def image_max_pool_backward(pick, grad_out, shape):
    h, w, c = shape
    oh, ow = grad_out.shape[:2]
    blocks = np.zeros((oh, ow, 4, c))
    np.put_along_axis(blocks, pick[:, :, None, :], grad_out[:, :, None, :], axis=2)
    full = blocks.reshape(oh, ow, 2, 2, c).transpose(0, 2, 1, 3, 4).reshape(2 * oh, 2 * ow, c)
    return full[:h, :w]


class ImageCNN:
    """Image-domain twin of a graph-task ``Network`` whose convolutions use 9 directional slices."""

    task = "graph"

    def __init__(self, ops, n_classes):
        self.ops = ops
        self.n_classes = n_classes

    @classmethod
    def from_network(cls, network: Network):
        ops = []
        for layer in network.layers:
            if isinstance(layer, GraphConvLayer):
                if layer.zero_hop or layer.params["weights"].shape[0] != 9:
                    raise ValueError("only 9-slice directional convolutions map to 3x3 kernels")
                fp = layer._fp()
                ops.append(["conv", {"taps": filter_to_taps(fp), "biases": fp.biases.copy()}])
            elif isinstance(layer, BatchNormLayer):
                st = layer.state
                ops.append(["bn", {"gamma": st.gamma.copy(), "beta": st.beta.copy()},
                            BatchNormState(st.gamma, st.beta, st.running_mean.copy(),
                                           st.running_var.copy(), st.momentum, st.epsilon, st.mode)])
            elif isinstance(layer, ReLULayer):
                ops.append(["relu", {}])
            elif isinstance(layer, GridMaxPoolLayer):
                ops.append(["maxpool", {}])
            elif isinstance(layer, DenseLayer):
                ops.append(["fc", {k: v.copy() for k, v in layer.params.items()}])
            else:
                raise ValueError(f"layer {layer.name} has no image-CNN counterpart")
        return cls(ops, network.n_classes)

    def parameters(self):
        return [p for op in self.ops for p in op[1].values()]

    def gradients(self):
        return [self._grads[i][k] for i, op in enumerate(self.ops) for k in op[1]]

    @staticmethod
    def _image(sample):
        g = sample.grid
        return np.asarray(sample.vertices, dtype=np.float64).reshape(g.height, g.width, -1)

    def forward(self, samples, training=False):
        xs = [self._image(s) for s in samples]
        self._cache = []
        for kind, params, *extra in self.ops:
            if kind == "conv":
                self._cache.append(xs)
                xs = [conv3x3_oracle(x, params["taps"], params["biases"]) for x in xs]
            elif kind == "bn":
                state = extra[0]
                state.gamma, state.beta = params["gamma"], params["beta"]
                shapes = [x.shape for x in xs]
                flat = [x.reshape(-1, x.shape[-1]) for x in xs]
                outs, cache = batch_norm(flat, state, training)
                self._cache.append((cache, shapes))
                xs = [o.reshape(s) for o, s in zip(outs, shapes)]
            elif kind == "relu":
                self._cache.append(xs)
                xs = [relu(x) for x in xs]
            elif kind == "maxpool":
                pooled = [image_max_pool(x) for x in xs]
                self._cache.append([(p[1], x.shape) for p, x in zip(pooled, xs)])
                xs = [p[0] for p in pooled]
            elif kind == "fc":
                self._cache.append([x.shape for x in xs])
                flat = [x.reshape(-1) for x in xs]
                self._cache[-1] = (flat, self._cache[-1])
                xs = [fully_connected(f, params["weights"], params["bias"])[None, None, :] for f in flat]
        return np.vstack([x.reshape(1, -1) for x in xs])

    def loss_and_grad(self, samples, training=True):
        logits = self.forward(samples, training)
        out = softmax_xent(logits, np.array([s.label for s in samples]))
        grads = [out.grad[i].reshape(1, 1, -1) for i in range(len(samples))]
        self._grads = [{k: np.zeros_like(v) for k, v in op[1].items()} for op in self.ops]
        for idx in reversed(range(len(self.ops))):
            kind, params, *_ = self.ops[idx]
            cache = self._cache[idx]
            acc = self._grads[idx]
            if kind == "conv":
                new = []
                for x, g in zip(cache, grads):
                    dx, dtaps, db = conv3x3_oracle_backward(x, params["taps"], g)
                    acc["taps"] += dtaps
                    acc["biases"] += db
                    new.append(dx)
                grads = new
            elif kind == "bn":
                bn_cache, shapes = cache
                dx, dgamma, dbeta = batch_norm_backward(bn_cache, [g.reshape(-1, g.shape[-1]) for g in grads])
                acc["gamma"] += dgamma
                acc["beta"] += dbeta
                grads = [d.reshape(s) for d, s in zip(dx, shapes)]
            elif kind == "relu":
                grads = [relu_backward(x, g) for x, g in zip(cache, grads)]
            elif kind == "maxpool":
                grads = [image_max_pool_backward(p, g, s) for (p, s), g in zip(cache, grads)]
            elif kind == "fc":
                flat, shapes = cache
                new = []
                for f, s, g in zip(flat, shapes, grads):
                    dx, dw, db = fully_connected_backward(f, params["weights"], g.reshape(-1))
                    acc["weights"] += dw
                    acc["bias"] += db
                    new.append(dx.reshape(s))
                grads = new
        return out, logits

    def predict(self, samples):
        return np.argmax(self.forward(samples, training=False), axis=1)
