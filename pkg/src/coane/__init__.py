"""Attributed network embedding from convolved random-walk contexts."""

from .config import TUNING_GRIDS, TrainConfig, load_config
from .graph import AttributedGraph, from_arrays, load_edge_list, load_linqs_dataset
from .trainer import fit, load_checkpoint, preprocess, save_checkpoint, train

__all__ = [
    "TUNING_GRIDS", "TrainConfig", "load_config", "AttributedGraph", "from_arrays", "load_edge_list",
    "load_linqs_dataset", "fit", "load_checkpoint", "preprocess", "save_checkpoint", "train",
]
__version__ = "0.1.0"
