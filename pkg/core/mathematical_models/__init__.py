"""
Mathematical models module
Divergences, divergence-based empirical risks and numerical checks of their bounds
"""

from .divergence import (
    DivergenceModels, DivergenceSpec, DivergenceKind, MetricTransform, CategoricalDistribution,
    INFINITE, is_infinite, STANDARD_DIVERGENCES,
)
from .empirical_risk import (
    DivergenceRiskModels, RiskObjective, WeightedBatch, LabelAssignment, RegularizationWeights,
    NonFiniteRiskError,
)
from .theory_verification import TheoryVerificationModels, TheoryBudgets, TheoryInstance

# Module metadata
__version__ = "1.0.0"
__description__ = "Divergence-based empirical risk models"

__all__ = [
    'DivergenceModels',
    'DivergenceSpec',
    'DivergenceKind',
    'MetricTransform',
    'CategoricalDistribution',
    'INFINITE',
    'is_infinite',
    'STANDARD_DIVERGENCES',
    'DivergenceRiskModels',
    'RiskObjective',
    'WeightedBatch',
    'LabelAssignment',
    'RegularizationWeights',
    'NonFiniteRiskError',
    'TheoryVerificationModels',
    'TheoryBudgets',
    'TheoryInstance',
]

# Model registry for dynamic access
MODEL_REGISTRY = {
    'divergence': DivergenceModels,
    'empirical_risk': DivergenceRiskModels,
    'theory_verification': TheoryVerificationModels,
}

def get_model(model_name: str):
    """
    Get a model class by name from the registry

    Args:
        model_name: Name of the model to retrieve

    Returns:
        Model class if available, None otherwise
    """
    return MODEL_REGISTRY.get(model_name)

def list_available_models():
    """
    List all available mathematical models

    Returns:
        List of available model names
    """
    return [name for name, model in MODEL_REGISTRY.items() if model is not None]
