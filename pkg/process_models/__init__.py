"""
Process Models Module
Classifier and self-training process models
"""

from .classifier import *
from .self_training import *
from .self_training import SelfTrainingProcess, PseudoLabelingProcess, EntropyMinimizationProcess

# Module metadata
__version__ = "1.0.0"
__description__ = "Classifier training and self-training processes for divergence-based SSL"

__all__ = [
    'ClassifierModel',
    'SelfTrainingProcess',
    'PseudoLabelingProcess',
    'EntropyMinimizationProcess',
    'register_process_model',
    'get_process_model',
    'list_available_processes',
]

# Process model registry
PROCESS_REGISTRY = {}

def register_process_model(name: str, model_class):
    """Register a process model for dynamic access"""
    PROCESS_REGISTRY[name] = model_class

def get_process_model(name: str):
    """Get a process model by name"""
    return PROCESS_REGISTRY.get(name)

def list_available_processes():
    """List all registered process models"""
    return list(PROCESS_REGISTRY.keys())


register_process_model('sl', SelfTrainingProcess)
register_process_model('dp-ssl', PseudoLabelingProcess)
register_process_model('dem-ssl', EntropyMinimizationProcess)
