"""scikit-learn compatible wrappers.

``GraphCNNClassifier`` takes a list of ``GraphSample`` as ``X`` so it can sit at
the end of a ``Pipeline``; ``ImageToGraph`` turns ``n x H x W (x C)`` image arrays
into such lists.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .archspec import parse_arch
from .errors import GraphCNNError, ShapeMismatch
from .graph import GraphSample, validate_graph
from .grid import image_to_graph
from .network import instantiate
from .training import TrainConfig, train

__all__ = ["GraphCNNClassifier", "ImageToGraph", "check_graphs", "check_vertex_task"]


def check_graphs(X, validate=True):
    """Return ``X`` as a list of ``GraphSample`` sharing feature count and slice count."""
    if isinstance(X, GraphSample):
        X = [X]
    samples = list(X)
    if not samples:
        raise ValueError("expected at least one graph")
    for s in samples:
        if not isinstance(s, GraphSample):
            raise TypeError(f"expected GraphSample, got {type(s).__name__}")
        if validate:
            validate_graph(s)
    c = {s.n_features for s in samples}
    l = {s.adjacency.L for s in samples}
    if len(c) != 1 or len(l) != 1:
        raise ShapeMismatch(f"graphs disagree on feature count {sorted(c)} or slice count {sorted(l)}")
    return samples


def check_vertex_task(X):
    samples = check_graphs(X)
    if len(samples) != 1 or not samples[0].is_vertex_task:
        raise ValueError("vertex classification expects one GraphSample with vertex labels and a mask")
    return samples[0]


def _common(values):
    values = set(values)
    return values.pop() if len(values) == 1 else None


class GraphCNNClassifier(ClassifierMixin, BaseEstimator):
    """Graph-CNN classifier for whole graphs (``task="graph"``) or vertices (``task="vertex"``).

    For graph tasks ``y`` holds one label per graph (any hashable labels; they are
    encoded through ``classes_``). For vertex tasks pass the single graph as ``X``;
    labels and the train mask come from the sample and ``y`` is ignored.
    """

    def __init__(self, arch="2x16F-Pool8-FC32", task="graph", optimizer="sgd", learning_rate=0.01,
                 momentum=0.9, epochs=10, batch_size=32, random_state=0):
        self.arch = arch
        self.task = task
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _config(self):
        return TrainConfig(optimizer=self.optimizer, learning_rate=self.learning_rate,
                           momentum=self.momentum, epochs=self.epochs, batch_size=self.batch_size,
                           seed=self.random_state)

    def fit(self, X, y=None, eval_set=None):
        plan = parse_arch(self.arch)
        if self.task == "vertex":
            sample = check_vertex_task(X)
            self.classes_ = np.unique(sample.vertex_labels)
            if not np.array_equal(self.classes_, np.arange(len(self.classes_))):
                self.classes_ = np.arange(int(sample.vertex_labels.max()) + 1)
            samples = [sample]
        else:
            samples = check_graphs(X)
            if y is None:
                y = [s.label for s in samples]
            y = np.asarray(y)
            if y.shape != (len(samples),):
                raise ShapeMismatch(f"{len(samples)} graphs but y has shape {y.shape}")
            self.classes_, encoded = np.unique(y, return_inverse=True)
            samples = [GraphSample(s.vertices, s.adjacency, int(t), grid=s.grid)
                       for s, t in zip(samples, encoded)]
        self.n_features_in_ = samples[0].n_features
        self.n_slices_ = samples[0].adjacency.L
        n_vertices = _common(s.n_vertices for s in samples)
        grid = _common(s.grid for s in samples)
        self.network_ = instantiate(plan, self.n_features_in_, self.n_slices_, max(len(self.classes_), 2),
                                    seed=self.random_state, n_vertices=n_vertices, grid=grid,
                                    task=self.task)
        self.metrics_ = train(self.network_, samples, self._config(), eval_set=eval_set)
        return self

    def _check_input(self, X):
        check_is_fitted(self, "network_")
        samples = check_graphs(X)
        if samples[0].n_features != self.n_features_in_ or samples[0].adjacency.L != self.n_slices_:
            raise ShapeMismatch("graphs do not match the fitted feature/slice counts")
        return samples

    def decision_function(self, X):
        samples = self._check_input(X)
        logits = self.network_.forward(samples, training=False)
        return logits[0] if self.task == "vertex" else logits

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        idx = np.argmax(self.decision_function(X), axis=1)
        if self.task == "vertex":
            return idx
        return self.classes_[idx]

    def score(self, X, y=None, sample_weight=None):
        if self.task == "vertex":
            sample = check_vertex_task(X)
            test = sample.mask == 0
            if not test.any():
                raise GraphCNNError("no test vertices (mask == 0) to score")
            return float(np.mean(self.predict(sample)[test] == sample.vertex_labels[test]))
        if y is None:
            y = [s.label for s in check_graphs(X, validate=False)]
        return super().score(X, y, sample_weight)


class ImageToGraph(TransformerMixin, BaseEstimator):
    """Images (``n x H x W`` or ``n x H x W x C``) to pixel graphs. Stateless."""

    def __init__(self, mode="directional", scale=1.0):
        self.mode = mode
        self.scale = scale

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        images = np.asarray(X, dtype=np.float64)
        if images.ndim not in (3, 4):
            raise ShapeMismatch(f"expected n x H x W (x C) images, got {images.shape}")
        return [image_to_graph(img * self.scale, self.mode) for img in images]
