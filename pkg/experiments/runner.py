"""
Experiment runner
Executes SL, FSL, DP-SSL and DEM-SSL scenarios over seeds, persists JSON-lines
metrics and runs the theory verification suite
"""

import os
import json
import time
import logging
from dataclasses import dataclass, field, asdict
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from core.mathematical_models.divergence import DivergenceSpec, MetricTransform
from core.mathematical_models.theory_verification import (
    METRIC_DIVERGENCE_PAIRS, TheoryBudgets, TheoryVerificationModels, make_theory_instance,
)
from core.datasets.ssl_dataset import (
    LabeledRows, SslDataset, load_dataset, make_synthetic_mixture, normalize_features, split,
)
from process_models import get_process_model
from process_models.classifier.feedforward_model import derive_seed, save_checkpoint
from process_models.self_training.self_training_process import EvaluationData, inject_label_noise
from .config import ExperimentConfig, Scenario

logger = logging.getLogger(__name__)

RECORD_ITERATION = "iteration"
RECORD_FINAL = "final"
RECORD_SUMMARY = "summary"

# Purpose key of the labeled-row noise seed
LABEL_NOISE_SEED_KEY = 4

# Process registry key per scenario; FSL reuses the supervised process
SCENARIO_PROCESSES = {
    Scenario.SL: 'sl',
    Scenario.FSL: 'sl',
    Scenario.DP_SSL: 'dp-ssl',
    Scenario.DEM_SSL: 'dem-ssl',
}


@dataclass
class RunRecord:
    """Outcome of one (configuration, seed) run"""
    config_hash: str
    name: str
    scenario: str
    column: str
    divergence: Dict[str, Optional[float]]
    divergence_label: str
    seed: int
    iterations: List[Dict[str, Any]]
    final_test_accuracy: Optional[float]
    wall_time: float
    checkpoint: Optional[str] = None

    @property
    def spec(self) -> DivergenceSpec:
        return DivergenceSpec(self.divergence['kind'], self.divergence.get('p'), self.divergence.get('alpha'))

    def to_dict(self) -> Dict[str, Any]:
        return {'type': RECORD_FINAL, **asdict(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunRecord':
        data = {key: value for key, value in data.items() if key != 'type'}
        return cls(**data)

    def deterministic_view(self) -> Dict[str, Any]:
        """Everything except wall time and checkpoint location"""
        data = self.to_dict()
        data.pop('wall_time')
        data.pop('checkpoint')
        return data


def load_rows(config: ExperimentConfig) -> LabeledRows:
    dataset = config.dataset
    if dataset.path is not None:
        return load_dataset(dataset.path, dataset.n_features, dataset.csv_header)
    synthetic = dataset.synthetic
    return make_synthetic_mixture(synthetic.k, synthetic.d, synthetic.per_class, synthetic.spread,
                                  synthetic.seed, synthetic.scale, synthetic.class_proportions)


def prepare_dataset(config: ExperimentConfig, seed: int, rows: Optional[LabeledRows] = None) -> SslDataset:
    """Split (and normalize) the configured rows for one seed"""
    if rows is None:
        rows = load_rows(config)
    split_seed = config.dataset.split_seed if config.dataset.split_seed is not None else seed
    dataset = split(rows, config.dataset.n_labeled, config.dataset.n_test, split_seed, config.dataset.stratified)
    if config.dataset.normalize:
        dataset, _ = normalize_features(dataset)
    return dataset


def run_single(config: ExperimentConfig, seed: int, rows: Optional[LabeledRows] = None,
               checkpoint_dir: Optional[str] = None, verbose: bool = False) -> RunRecord:
    """
    Execute one scenario for one seed

    FSL trains on every training row with its true label. Label noise hits the
    labeled rows for SL and FSL and the new pseudo-labels for DP-SSL.
    """
    start_time = time.time()
    dataset = prepare_dataset(config, seed, rows)
    test = dataset.test_view()
    evaluation = EvaluationData(test.features, test.labels, dataset.unlabeled_evaluation_labels())
    st_config = config.self_train_config(seed)
    process = get_process_model(SCENARIO_PROCESSES[config.scenario])(st_config)

    if config.scenario in (Scenario.SL, Scenario.FSL):
        labeled = dataset.fully_labeled_view() if config.scenario is Scenario.FSL else dataset.labeled_view()
        if config.noise_rate > 0:
            labeled = inject_label_noise(labeled, config.noise_rate, labeled.k, derive_seed(seed, 0, LABEL_NOISE_SEED_KEY))
        results = process.run(labeled, None, evaluation, verbose)
    else:
        results = process.run(dataset.labeled_view(), dataset.unlabeled_view(), evaluation, verbose)

    checkpoint = None
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)
        checkpoint = save_checkpoint(results.model, os.path.join(
            checkpoint_dir, f"{config.name}-{config.config_hash()[:12]}-seed{seed}.npz"))

    record = RunRecord(
        config_hash=config.config_hash(),
        name=config.name,
        scenario=config.scenario.value,
        column=config.column_label,
        divergence=config.spec.to_dict(),
        divergence_label=config.spec.label,
        seed=int(seed),
        iterations=[metrics.to_dict() for metrics in results.metrics],
        final_test_accuracy=results.final_test_accuracy,
        wall_time=time.time() - start_time,
        checkpoint=checkpoint,
    )
    logger.info(f"{config.column_label} {record.divergence_label} seed {seed}: "
                f"test accuracy {record.final_test_accuracy}")
    return record


def summarize(records: Sequence[RunRecord]) -> Dict[str, Any]:
    """Mean and sample standard deviation of final test accuracy over seeds"""
    accuracies = np.array([r.final_test_accuracy for r in records if r.final_test_accuracy is not None])
    first = records[0]
    return {
        'type': RECORD_SUMMARY,
        'config_hash': first.config_hash,
        'name': first.name,
        'scenario': first.scenario,
        'column': first.column,
        'divergence': first.divergence,
        'divergence_label': first.divergence_label,
        'seeds': [r.seed for r in records],
        'mean_test_accuracy': float(accuracies.mean()) if accuracies.size else None,
        'std_test_accuracy': float(accuracies.std(ddof=1)) if accuracies.size > 1 else 0.0,
    }


def _json_line(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, allow_nan=False)


def write_records(path: str, records: Sequence[RunRecord]) -> str:
    """
    Write iteration, final and summary lines

    Records of one configuration are grouped by config hash in seed order.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    groups: Dict[str, List[RunRecord]] = {}
    for record in records:
        groups.setdefault(record.config_hash, []).append(record)

    with open(path, 'w', encoding='utf-8') as f:
        for config_hash, group in groups.items():
            for record in sorted(group, key=lambda r: r.seed):
                for metrics in record.iterations:
                    f.write(_json_line({'type': RECORD_ITERATION, 'config_hash': config_hash,
                                        'seed': record.seed, **metrics}) + "\n")
                f.write(_json_line(record.to_dict()) + "\n")
            f.write(_json_line(summarize(group)) + "\n")
    logger.info(f"Wrote {len(records)} run records to {path}")
    return path


def read_records(path: str) -> List[RunRecord]:
    """Final run records of a JSON-lines file"""
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as error:
                raise ValueError(f"{path}:{line_number}: not a JSON line ({error})") from error
            if data.get('type') == RECORD_FINAL:
                records.append(RunRecord.from_dict(data))
    return records


def run_experiment(config: ExperimentConfig, output_dir: Optional[str] = None, n_jobs: int = 1,
                   checkpoints: bool = False, verbose: bool = False) -> List[RunRecord]:
    """
    Run every expanded configuration for every seed

    Args:
        config: Experiment (grids are expanded)
        output_dir: Directory of the JSON-lines file; nothing is written when None
        n_jobs: Parallel seed workers (joblib)
        checkpoints: Save the final model of each run
        verbose: Progress bars

    Returns:
        RunRecords ordered by configuration then seed
    """
    records: List[RunRecord] = []
    checkpoint_dir = os.path.join(output_dir, 'checkpoints') if (checkpoints and output_dir) else None
    for expanded in config.expand():
        rows = load_rows(expanded)
        logger.info(f"Running {expanded.column_label} with {expanded.spec.label} "
                    f"on seeds {expanded.seeds} ({expanded.config_hash()[:12]})")
        runs = Parallel(n_jobs=n_jobs)(
            delayed(run_single)(expanded, seed, rows, checkpoint_dir, verbose) for seed in expanded.seeds)
        records.extend(runs)

    if output_dir is not None:
        write_records(os.path.join(output_dir, f"{config.name}.jsonl"), records)
    return records


@dataclass
class TheoryReport:
    """Consolidated verification results"""
    budgets: Dict[str, Any]
    sections: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return int(sum(item.get('violations', 0) for items in self.sections.values() for item in items))

    @property
    def is_empty(self) -> bool:
        return not self.sections

    def to_dict(self) -> Dict[str, Any]:
        return {'budgets': self.budgets, 'violations': self.violations, 'sections': self.sections}


def _check_rng(budgets: TheoryBudgets, section: int) -> np.random.Generator:
    return np.random.default_rng([budgets.seed, section])


def _metric_section(budgets: TheoryBudgets, probe_kl_metric: bool) -> List[Dict]:
    models = TheoryVerificationModels()
    rng = _check_rng(budgets, 0)
    reports = [models.check_metric_axioms(spec, g, budgets.trials, budgets.k, rng).to_dict()
               for spec, g in METRIC_DIVERGENCE_PAIRS]
    if probe_kl_metric:
        reports.append(models.check_metric_axioms(DivergenceSpec.kl(), MetricTransform.IDENTITY,
                                                  budgets.trials, budgets.k, rng).to_dict())
    return reports


def _theorem_section(budgets: TheoryBudgets) -> List[Dict]:
    models = TheoryVerificationModels()
    rng = _check_rng(budgets, 1)
    reports = []
    for spec, g in METRIC_DIVERGENCE_PAIRS:
        for noise_rate in budgets.noise_rates:
            for _ in range(budgets.theorem_instances):
                instance = make_theory_instance(rng, budgets.k, budgets.n, budgets.m, noise_rate)
                reports.append(models.check_theorem1(instance, spec, g, budgets.optimizer_steps, noise_rate).to_dict())
    return reports


def _corollary_section(budgets: TheoryBudgets) -> List[Dict]:
    models = TheoryVerificationModels()
    rng = _check_rng(budgets, 2)
    return [models.check_corollary1(spec, g, budgets.corollary_resamples, rng, budgets.k, budgets.n, budgets.m,
                                    noise_rate, budgets.optimizer_steps).to_dict()
            for spec, g in METRIC_DIVERGENCE_PAIRS for noise_rate in budgets.noise_rates]


def _proposition_section(budgets: TheoryBudgets) -> List[Dict]:
    models = TheoryVerificationModels()
    return [models.check_proposition1(None, budgets.trials, _check_rng(budgets, 3),
                                      budgets.inequality_k, budgets.batch_size).to_dict()]


def _inequality_section(budgets: TheoryBudgets) -> List[Dict]:
    models = TheoryVerificationModels()
    return [models.check_der_inequalities(budgets.trials, _check_rng(budgets, 4),
                                          budgets.inequality_k, budgets.batch_size).to_dict()]


def _closed_form_section(budgets: TheoryBudgets) -> List[Dict]:
    models = TheoryVerificationModels()
    return [models.check_closed_forms(None, budgets.trials, _check_rng(budgets, 5),
                                      budgets.inequality_k, budgets.batch_size).to_dict()]


THEORY_SECTIONS: List[Tuple[str, Callable]] = [
    ('metric_axioms', _metric_section),
    ('theorem1', _theorem_section),
    ('corollary1', _corollary_section),
    ('proposition1', _proposition_section),
    ('der_inequalities', _inequality_section),
    ('closed_forms', _closed_form_section),
]


def run_theory_suite(budgets: Optional[TheoryBudgets] = None, probe_kl_metric: bool = False,
                     n_jobs: int = 1) -> TheoryReport:
    """
    Run every theory check under the given budgets

    Each section draws from its own seeded generator, so results do not
    depend on n_jobs. trials=0 skips every check.

    Args:
        budgets: Trial counts and sizes
        probe_kl_metric: Also test KL as if it were a metric (must report violations)
        n_jobs: Parallel section workers

    Returns:
        TheoryReport
    """
    budgets = budgets or TheoryBudgets()
    report = TheoryReport(budgets=asdict(budgets))
    if budgets.trials == 0:
        logger.info("Theory budget trials=0: all checks skipped")
        return report

    outputs = Parallel(n_jobs=n_jobs)(
        delayed(section)(budgets, probe_kl_metric) if name == 'metric_axioms' else delayed(section)(budgets)
        for name, section in THEORY_SECTIONS)
    for (name, _), items in zip(THEORY_SECTIONS, outputs):
        report.sections[name] = items
        logger.info(f"Theory check {name}: {sum(item.get('violations', 0) for item in items)} violations")
    return report
