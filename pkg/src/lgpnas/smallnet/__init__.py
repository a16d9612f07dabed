"""Self-contained numpy network evaluator: training, accuracy fitness, and
class-probability semantics extraction."""

from .data import Dataset, DatasetSplit, generate_synthetic, load_dataset, save_dataset
from .training import (
    TrainConfig,
    TrainedNet,
    build_net,
    evaluate,
    extract_semantics,
    gradient_check,
    train,
)

__all__ = [
    "Dataset",
    "DatasetSplit",
    "TrainConfig",
    "TrainedNet",
    "build_net",
    "evaluate",
    "extract_semantics",
    "generate_synthetic",
    "gradient_check",
    "load_dataset",
    "save_dataset",
    "train",
]
