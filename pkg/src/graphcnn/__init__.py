"""Graph-CNN: vertex-domain graph convolution with multi-slice adjacency tensors."""
from .archspec import ArchPlan, parse_arch, render_arch
from .conv import FilterParams, conv_backward, conv_forward, neighbor_aggregate
from .estimator import GraphCNNClassifier, ImageToGraph
from .graph import AdjacencySlice, AdjacencyTensor, GraphSample, adjacency_from_edges, validate_graph
from .network import Network, instantiate
from .training import TrainConfig, evaluate, grad_check, kfold_split, train

__version__ = "0.1.0"

__all__ = [
    "AdjacencySlice",
    "AdjacencyTensor",
    "ArchPlan",
    "FilterParams",
    "GraphCNNClassifier",
    "GraphSample",
    "ImageToGraph",
    "Network",
    "TrainConfig",
    "adjacency_from_edges",
    "conv_backward",
    "conv_forward",
    "evaluate",
    "grad_check",
    "instantiate",
    "kfold_split",
    "neighbor_aggregate",
    "parse_arch",
    "render_arch",
    "train",
    "validate_graph",
]
