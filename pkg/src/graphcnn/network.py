"""Executable networks assembled from an ``ArchPlan``.

Every layer works on a list of per-sample states so that heterogeneous graphs
(different vertex counts) share one batch without padding. Batch normalization
is the only layer that couples samples: it pools statistics over all vertices
of all samples in the batch.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from . import archspec as A
from .conv import FilterParams, conv_backward, conv_forward, init_filter, neighbor_aggregate
from .errors import DimensionError, NotAGridSample, ShapeMismatch
from .graph import GraphSample, GridInfo
from .grid import grid_adjacency, grid_max_pool_backward, grid_max_pool_vertices
from .layers import (
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
from .pool import DenseAdjacency, EmbedPoolParams, pool_backward, pooled_slices, softmax_rows

__all__ = ["GraphState", "Network", "instantiate"]


@dataclass
class GraphState:
    """What flows between layers for one sample.

    ``adjacency`` is ``None`` once the graph has been flattened into a vector.
    ``adj_grad`` is True when the adjacency came out of embed pooling and so
    needs a gradient.
    """

    v: np.ndarray
    adjacency: object = None
    grid: Optional[GridInfo] = None
    adj_grad: bool = False

    @classmethod
    def from_sample(cls, sample: GraphSample):
        return cls(np.asarray(sample.vertices, dtype=np.float64), sample.adjacency, sample.grid)


@dataclass
class Grad:
    v: np.ndarray
    adjacency: Optional[list] = None  # dense dL/dA_l for l >= 1, or None


def _add_adj(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return [x + y for x, y in zip(a, b)]


class Layer:
    name = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, states, training):
        raise NotImplementedError

    def backward(self, grads):
        raise NotImplementedError

    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())


class GraphConvLayer(Layer):
    """Graph convolution; ``zero_hop=True`` restricts it to the identity slice."""

    def __init__(self, params: FilterParams, zero_hop=False, name="gconv"):
        super().__init__()
        self.name = name
        self.zero_hop = zero_hop
        self.params = {"weights": params.weights, "biases": params.biases}
        self.zero_grad()

    def _fp(self):
        fp = object.__new__(FilterParams)
        fp.weights, fp.biases = self.params["weights"], self.params["biases"]
        return fp

    def forward(self, states, training):
        fp = self._fp()
        self._cache = []
        out = []
        for s in states:
            if s.adjacency is None:
                raise DimensionError(f"{self.name}: graph convolution after flattening")
            if self.zero_hop:
                nbr = s.v
            else:
                if s.adjacency.L != fp.weights.shape[0]:
                    raise ShapeMismatch(f"{self.name}: graph has {s.adjacency.L} slices, "
                                        f"filter expects {fp.weights.shape[0]}")
                nbr = neighbor_aggregate(s.adjacency, s.v)
            self._cache.append((s, nbr))
            out.append(replace(s, v=conv_forward(nbr, fp)))
        return out

    def backward(self, grads):
        fp = self._fp()
        w0 = fp.weights[0]
        result = []
        for (s, nbr), g in zip(self._cache, grads):
            self.grads["weights"] += (nbr.T @ g.v).reshape(fp.weights.shape)
            self.grads["biases"] += g.v.sum(axis=0)
            if self.zero_hop:
                result.append(Grad(g.v @ w0.T, g.adjacency))
                continue
            res = conv_backward(nbr, s.adjacency, fp, g.v, vertices=s.v, adjacency_grad=s.adj_grad)
            adj = _add_adj(g.adjacency, res[3]) if s.adj_grad else None
            result.append(Grad(res[0], adj))
        return result


class EmbedPoolLayer(Layer):
    def __init__(self, params: EmbedPoolParams, name="pool"):
        super().__init__()
        self.name = name
        self.params = {"weights": params.filter.weights, "biases": params.filter.biases}
        self.zero_grad()

    def _pp(self):
        fp = object.__new__(FilterParams)
        fp.weights, fp.biases = self.params["weights"], self.params["biases"]
        return EmbedPoolParams(fp)

    def forward(self, states, training):
        pp = self._pp()
        self._cache = []
        out = []
        for s in states:
            if s.adjacency is None:
                raise DimensionError(f"{self.name}: pooling after flattening")
            nbr = neighbor_aggregate(s.adjacency, s.v)
            emb = softmax_rows(conv_forward(nbr, pp.filter))
            v_out = emb.T @ s.v
            if s.adjacency.L > 1:
                adj_out = DenseAdjacency(pooled_slices(emb, s.adjacency))
            else:
                adj_out = _IdentityOnly(emb.shape[1])
            self._cache.append((s, nbr, emb))
            out.append(GraphState(v_out, adj_out, None, adj_grad=s.adjacency.L > 1))
        return out

    def backward(self, grads):
        pp = self._pp()
        result = []
        for (s, nbr, emb), g in zip(self._cache, grads):
            res = pool_backward(emb, s.v, s.adjacency, pp, nbr, g.v, g.adjacency,
                                adjacency_grad=s.adj_grad)
            self.grads["weights"] += res["weights"]
            self.grads["biases"] += res["biases"]
            result.append(Grad(res["vertices"], res.get("adjacency")))
        return result


class _IdentityOnly:
    """Adjacency of a pooled graph whose input had only the identity slice."""

    def __init__(self, n):
        self.n = n
        self.matrices = []

    @property
    def L(self):
        return 1


class BatchNormLayer(Layer):
    def __init__(self, n_features, mode="running", name="bn"):
        super().__init__()
        self.name = name
        self.state = BatchNormState.create(n_features, mode=mode)
        self.params = {"gamma": self.state.gamma, "beta": self.state.beta}
        self.zero_grad()

    def forward(self, states, training):
        self.state.gamma, self.state.beta = self.params["gamma"], self.params["beta"]
        outs, self._cache = batch_norm([s.v for s in states], self.state, training)
        return [replace(s, v=o) for s, o in zip(states, outs)]

    def backward(self, grads):
        dx, dgamma, dbeta = batch_norm_backward(self._cache, [g.v for g in grads])
        self.grads["gamma"] += dgamma
        self.grads["beta"] += dbeta
        return [Grad(d, g.adjacency) for d, g in zip(dx, grads)]


class ReLULayer(Layer):
    name = "relu"

    def forward(self, states, training):
        self._cache = [s.v for s in states]
        return [replace(s, v=relu(s.v)) for s in states]

    def backward(self, grads):
        return [Grad(relu_backward(x, g.v), g.adjacency) for x, g in zip(self._cache, grads)]


class DropoutLayer(Layer):
    def __init__(self, rate, rng, name="dropout"):
        super().__init__()
        self.name = name
        self.rate = rate
        self.rng = rng
        self.enabled = True

    def forward(self, states, training):
        self._masks = []
        out = []
        for s in states:
            y, mask = dropout(s.v, self.rate, self.rng, training and self.enabled)
            self._masks.append(mask)
            out.append(replace(s, v=y))
        return out

    def backward(self, grads):
        return [Grad(dropout_backward(m, g.v), g.adjacency) for m, g in zip(self._masks, grads)]


class GridMaxPoolLayer(Layer):
    name = "maxpool"

    def forward(self, states, training):
        self._cache = []
        out = []
        for s in states:
            if s.grid is None or s.adjacency is None:
                raise NotAGridSample("P/2 needs a graph built from an image grid")
            pooled, src, (oh, ow) = grid_max_pool_vertices(s.v, s.grid.height, s.grid.width)
            self._cache.append((src, s.v.shape[0]))
            out.append(GraphState(pooled, grid_adjacency(oh, ow, s.grid.mode),
                                  GridInfo(oh, ow, s.grid.mode)))
        return out

    def backward(self, grads):
        return [Grad(grid_max_pool_backward(src, g.v, n)) for (src, n), g in zip(self._cache, grads)]


class DenseLayer(Layer):
    """Fully-connected layer; graph inputs are flattened row-major (vertex-major)."""

    def __init__(self, weights, bias, name="fc"):
        super().__init__()
        self.name = name
        self.params = {"weights": weights, "bias": bias}
        self.zero_grad()

    def forward(self, states, training):
        w, b = self.params["weights"], self.params["bias"]
        self._cache = []
        out = []
        for s in states:
            x = s.v.reshape(-1)
            if x.shape[0] != w.shape[1]:
                raise DimensionError(f"{self.name}: expects {w.shape[1]} inputs, got {x.shape[0]} "
                                     f"(graph with {s.v.shape[0]} vertices)")
            self._cache.append((x, s.v.shape))
            out.append(GraphState(fully_connected(x, w, b)[None, :]))
        return out

    def backward(self, grads):
        w = self.params["weights"]
        result = []
        for (x, shape), g in zip(self._cache, grads):
            dx, dw, db = fully_connected_backward(x, w, g.v[0])
            self.grads["weights"] += dw
            self.grads["bias"] += db
            result.append(Grad(dx.reshape(shape)))
        return result


class Network:
    """A stack of layers ending in per-graph (or per-vertex) class logits."""

    def __init__(self, layers: List[Layer], task="graph", n_classes=2, plan=None):
        self.layers = layers
        self.task = task
        self.n_classes = n_classes
        self.plan = plan

    # parameter plumbing -------------------------------------------------
    def named_parameters(self):
        out = []
        for idx, layer in enumerate(self.layers):
            for key, value in layer.params.items():
                out.append((f"{idx}.{layer.name}.{key}", value))
        return out

    def named_gradients(self):
        out = []
        for idx, layer in enumerate(self.layers):
            for key in layer.params:
                out.append((f"{idx}.{layer.name}.{key}", layer.grads[key]))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def gradients(self):
        return [g for _, g in self.named_gradients()]

    @property
    def n_params(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def named_buffers(self):
        """Batch-norm running statistics: estimated during training, not learned."""
        out = []
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, BatchNormLayer):
                out.append((f"{idx}.{layer.name}.running_mean", layer.state.running_mean))
                out.append((f"{idx}.{layer.name}.running_var", layer.state.running_var))
        return out

    def state_dict(self, buffers=True):
        """Copies of all parameters and, unless ``buffers=False``, running statistics."""
        items = self.named_parameters() + (self.named_buffers() if buffers else [])
        return {name: p.copy() for name, p in items}

    def load_state_dict(self, state):
        for name, p in self.named_parameters() + self.named_buffers():
            if name not in state or state[name].shape != p.shape:
                raise ShapeMismatch(f"missing or mis-shaped entry {name}")
            p[...] = state[name]

    def set_batch_norm_mode(self, mode):
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                layer.state.mode = mode

    def set_dropout(self, enabled):
        for layer in self.layers:
            if isinstance(layer, DropoutLayer):
                layer.enabled = enabled

    # forward / backward -------------------------------------------------
    def forward(self, samples, training=False):
        """Logits: ``B x K`` for graph tasks, a list of ``N_i x K`` for vertex tasks."""
        states = [GraphState.from_sample(s) for s in samples]
        for layer in self.layers:
            states = layer.forward(states, training)
        if self.task == "graph":
            return np.vstack([s.v for s in states])
        return [s.v for s in states]

    def loss(self, samples, training=True):
        logits = self.forward(samples, training)
        return self._loss(samples, logits).value

    def _loss(self, samples, logits):
        if self.task == "graph":
            targets = np.array([s.label for s in samples])
            return softmax_xent(logits, targets)
        z = np.vstack(logits)
        targets = np.concatenate([s.vertex_labels for s in samples])
        mask = np.concatenate([s.mask for s in samples])
        return softmax_xent(z, targets, mask)

    def loss_and_grad(self, samples, training=True):
        """Mean loss over the batch; parameter gradients land in ``layer.grads``.

        Returns ``(loss_output, logits)``.
        """
        self.zero_grad()
        logits = self.forward(samples, training)
        out = self._loss(samples, logits)
        if self.task == "graph":
            grads = [Grad(out.grad[i:i + 1]) for i in range(len(samples))]
        else:
            sizes = np.cumsum([z.shape[0] for z in logits])[:-1]
            grads = [Grad(g) for g in np.split(out.grad, sizes)]
        self.input_grads = self.backward(grads)
        return out, logits

    def backward(self, grads):
        for layer in reversed(self.layers):
            grads = layer.backward(grads)
        return grads

    def predict(self, samples):
        logits = self.forward(samples, training=False)
        if self.task == "graph":
            return np.argmax(logits, axis=1)
        return [np.argmax(z, axis=1) for z in logits]


def _dense_init(n_in, n_out, rng):
    w = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in))
    return w, np.zeros(n_out)


def instantiate(plan, n_features, n_slices, n_classes, seed=0, n_vertices=None, grid=None,
                task="graph", bn_mode=None) -> Network:
    """Allocate parameters for ``plan`` on inputs with ``n_features`` vertex features and
    ``n_slices`` adjacency slices (identity included).

    ``n_vertices`` (fixed graph size) and ``grid`` (``(height, width)`` or ``GridInfo``)
    are needed when the plan flattens a graph into an FC layer without embed
    pooling, or uses ``P/2``. Batch norm + ReLU follow every convolution, pooling
    and hidden FC layer; a final FC with ``n_classes`` outputs (graph task) or a
    classifier convolution (vertex task) is appended.
    """
    if isinstance(plan, str):
        plan = A.parse_arch(plan)
    if min(n_features, n_slices, n_classes) < 1:
        raise DimensionError("input dims and class count must be positive")
    if task not in ("graph", "vertex"):
        raise ValueError(f"unknown task {task!r}")
    bn_mode = bn_mode or ("batch" if task == "vertex" else "running")
    rng = np.random.default_rng(seed)
    drop_rng = np.random.default_rng([seed, 1])
    if grid is not None and not isinstance(grid, GridInfo):
        grid = GridInfo(*grid)
    C, L, N = n_features, n_slices, n_vertices
    if grid is not None:
        N = grid.height * grid.width
    vector = False
    layers: List[Layer] = []
    specs = list(plan.layers)

    classifier_conv = False
    if task == "vertex":
        for spec in specs:
            if isinstance(spec, (A.FC, A.GFC, A.EmbedPool)):
                raise DimensionError(f"{spec.render()} changes the vertex set; not allowed for vertex tasks")
        last = specs[-1]
        classifier_conv = isinstance(last, (A.GConv, A.ZeroHop)) and last.filters == n_classes
        if not classifier_conv:
            specs.append(A.ZeroHop(n_classes))
            classifier_conv = True

    def post(width, final=False):
        if not final:
            layers.append(BatchNormLayer(width, mode=bn_mode, name=f"bn{width}"))
            layers.append(ReLULayer())

    def dense(n_out, final=False):
        nonlocal C, vector, N
        if vector:
            n_in = C
        elif N is None:
            raise DimensionError(f"FC{n_out} on variable-size graphs needs embed pooling (PoolN/GFC) first")
        else:
            n_in = N * C
        w, b = _dense_init(n_in, n_out, rng)
        layers.append(DenseLayer(w, b, name=f"fc{n_out}"))
        C, vector = n_out, True
        post(n_out, final)

    for idx, spec in enumerate(specs):
        is_last = idx == len(specs) - 1
        if isinstance(spec, (A.GConv, A.ZeroHop)):
            if vector:
                raise DimensionError(f"{spec.render()} after an FC layer")
            zero = isinstance(spec, A.ZeroHop)
            fp = init_filter(1 if zero else L, C, spec.filters, rng)
            layers.append(GraphConvLayer(fp, zero_hop=zero, name=f"{'zerohop' if zero else 'gconv'}{spec.filters}"))
            C = spec.filters
            post(C, final=is_last and classifier_conv)
        elif isinstance(spec, (A.EmbedPool, A.GFC)):
            if vector:
                raise DimensionError(f"{spec.render()} after an FC layer")
            target = spec.target if isinstance(spec, A.EmbedPool) else 1
            fp = init_filter(L, C, target, rng)
            layers.append(EmbedPoolLayer(EmbedPoolParams(fp), name=f"pool{target}"))
            N, grid = target, None
            post(C)
            if isinstance(spec, A.GFC):
                dense(spec.outputs)
        elif isinstance(spec, A.GridMaxPool):
            if vector or grid is None:
                raise DimensionError("P/2 needs image-grid input (pass grid=(height, width))")
            grid = GridInfo(-(-grid.height // 2), -(-grid.width // 2), grid.mode)
            N = grid.height * grid.width
            layers.append(GridMaxPoolLayer())
        elif isinstance(spec, A.FC):
            dense(spec.outputs)
        elif isinstance(spec, A.Dropout):
            layers.append(DropoutLayer(spec.rate, drop_rng))
        else:
            raise TypeError(f"unknown layer spec {spec!r}")

    if task == "graph":
        dense(n_classes, final=True)
    return Network(layers, task=task, n_classes=n_classes, plan=plan)
