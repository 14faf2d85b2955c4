"""
Experiments module
Configuration, scenario runner, result tables and the der-ssl command line
"""

from .config import ConfigurationError, ExperimentConfig, Scenario, load_config, parse_config
from .runner import RunRecord, run_experiment, run_single, read_records, run_theory_suite, TheoryReport
from .reporting import emit_table, summarize_records

__all__ = [
    'ConfigurationError',
    'ExperimentConfig',
    'Scenario',
    'load_config',
    'parse_config',
    'RunRecord',
    'run_experiment',
    'run_single',
    'read_records',
    'run_theory_suite',
    'TheoryReport',
    'emit_table',
    'summarize_records',
]
