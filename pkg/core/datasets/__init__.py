"""
Datasets module
Ingestion, synthetic generation, splitting and normalization of SSL datasets
"""

from .ssl_dataset import (
    DatasetFormatError, LabeledRows, SslDataset, SplitRole, LabeledView, UnlabeledView,
    AffineTransform, DATASET_PRESETS,
    parse_sparse_dataset, parse_dense_csv, load_dataset, save_dataset_cache, load_dataset_cache,
    make_synthetic_mixture, split, normalize_features, corrupt_labels,
)

__all__ = [
    'DatasetFormatError',
    'LabeledRows',
    'SslDataset',
    'SplitRole',
    'LabeledView',
    'UnlabeledView',
    'AffineTransform',
    'DATASET_PRESETS',
    'parse_sparse_dataset',
    'parse_dense_csv',
    'load_dataset',
    'save_dataset_cache',
    'load_dataset_cache',
    'make_synthetic_mixture',
    'split',
    'normalize_features',
    'corrupt_labels',
]
