"""Metapath-guided heterogeneous graph embeddings.

Subpackages: hetgraph (typed-graph data model and I/O), metapath (sampling
and generation), diffgrad (reverse-mode autodiff + Adam), model (the
embedding network), training (losses and the fit loop), evalkit (metrics,
probe, KNN), synth (planted-structure generators), cli (command line).
"""

__version__ = "0.1.0"

from .hetgraph import HeteroGraph, LabelTable, Schema, load_graph, validate
from .metapath import Metapath, NeighborSample, derive_rng
from .model import MHNModel, ModelConfig, ModelParams
from .training import TrainConfig, fit

__all__ = [
    "HeteroGraph", "LabelTable", "Schema", "load_graph", "validate",
    "Metapath", "NeighborSample", "derive_rng",
    "MHNModel", "ModelConfig", "ModelParams",
    "TrainConfig", "fit",
    "__version__",
]
