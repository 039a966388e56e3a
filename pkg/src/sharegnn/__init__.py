"""Graph neural networks whose message weights are shared by graph invariants.

Node labels (raw, Weisfeiler-Leman, cycle patterns, cliques, combinations)
and pairwise distances select, per graph, which entries of one shared
parameter pool fill that graph's message matrix. The same pool also holds
per-label pooling vectors used by the permutation-invariant decoder.
"""

from .errors import ConfigError, ContractViolation, DataError, NumericFault, ParseError, ShareGNNError
from .graph import Dataset, Graph, Permutation, Split, apply_permutation, compute_distance_map
from .labels import Labeler, LabelingSpec, compute_labels
from .model import ModelCfg, ShareGNN, build_model
from .preprocess import Preprocessed, preprocess
from .sharing import ParameterPool, TripleTable, build_triple_table
from .training import TrainCfg, train
from .tu import parse_tu_dataset, write_tu_dataset

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractViolation",
    "DataError",
    "Dataset",
    "Graph",
    "Labeler",
    "LabelingSpec",
    "ModelCfg",
    "NumericFault",
    "ParameterPool",
    "ParseError",
    "Permutation",
    "Preprocessed",
    "ShareGNN",
    "ShareGNNError",
    "Split",
    "TrainCfg",
    "TripleTable",
    "apply_permutation",
    "build_model",
    "build_triple_table",
    "compute_distance_map",
    "compute_labels",
    "parse_tu_dataset",
    "preprocess",
    "train",
    "write_tu_dataset",
]
