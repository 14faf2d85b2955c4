"""
Self-training module
DP-SSL pseudo-labeling and DEM-SSL entropy minimization
"""

from .self_training_process import (
    SelectionThresholds, PseudoLabeledSet, SelfTrainConfig, EvaluationData,
    IterationMetrics, SelfTrainingResults,
    SelfTrainingProcess, PseudoLabelingProcess, EntropyMinimizationProcess,
    apply_selection_gate, select_pseudo_labels, balance, inject_label_noise,
    train_supervised, dp_ssl, dem_ssl, STANDARD_SELF_TRAINING_CONDITIONS,
)

__all__ = [
    'SelectionThresholds',
    'PseudoLabeledSet',
    'SelfTrainConfig',
    'EvaluationData',
    'IterationMetrics',
    'SelfTrainingResults',
    'SelfTrainingProcess',
    'PseudoLabelingProcess',
    'EntropyMinimizationProcess',
    'apply_selection_gate',
    'select_pseudo_labels',
    'balance',
    'inject_label_noise',
    'train_supervised',
    'dp_ssl',
    'dem_ssl',
    'STANDARD_SELF_TRAINING_CONDITIONS',
]
