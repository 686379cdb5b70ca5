"""Dataset generation and ingestion."""

from evadapt.data.toy import ToyConfig, generate_toy_dataset
from evadapt.data.loaders import DatasetSpec, LoadedDataset, load_dataset

__all__ = [
    "ToyConfig",
    "generate_toy_dataset",
    "DatasetSpec",
    "LoadedDataset",
    "load_dataset",
]
