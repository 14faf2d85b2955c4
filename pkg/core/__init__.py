"""
Core module for the divergence-based SSL framework
Mathematical models and dataset handling
"""

from .mathematical_models import *
from .datasets import *

__version__ = "1.0.0"
__description__ = "Divergence-based empirical risk and self-training for semi-supervised classification"

__all__ = [
    # Mathematical models
    'DivergenceModels',
    'DivergenceSpec',
    'DivergenceRiskModels',
    'RiskObjective',
    'TheoryVerificationModels',
    # Datasets
    'LabeledRows',
    'SslDataset',
    'DatasetFormatError',
]
