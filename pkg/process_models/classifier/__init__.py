"""
Classifier module
Feed-forward ReLU network trained with divergence-based risks
"""

from .feedforward_model import (
    ClassifierModel, ForwardMode, OptimizerState, TrainingData, TrainingResult,
    init_model, train_epochs, mc_uncertainty, derive_seed,
    save_checkpoint, load_checkpoint,
)

__all__ = [
    'ClassifierModel',
    'ForwardMode',
    'OptimizerState',
    'TrainingData',
    'TrainingResult',
    'init_model',
    'train_epochs',
    'mc_uncertainty',
    'derive_seed',
    'save_checkpoint',
    'load_checkpoint',
]
