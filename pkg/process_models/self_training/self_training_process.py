"""
Self-Training Process Models
Divergence-based pseudo-labeling (DP-SSL) and entropy-minimization (DEM-SSL)
self-training loops: warm-up, gated pseudo-label selection, class balancing
and per-iteration retraining from a fresh initialization
"""

import math
import time
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Union

import numpy as np
from tqdm import tqdm

from core.mathematical_models.divergence import DivergenceSpec, divergence_rows
from core.mathematical_models.empirical_risk import (
    RegularizationWeights, RiskObjective, default_beta, mixture_weights, one_hot,
)
from core.datasets.ssl_dataset import LabeledView, UnlabeledView, corrupt_labels
from process_models.classifier.feedforward_model import (
    ClassifierModel, OptimizerState, TrainingData, TrainingResult,
    derive_seed, init_model, mc_uncertainty, train_epochs,
)

logger = logging.getLogger(__name__)

# Purpose keys of derived seeds
_INIT, _TRAIN, _UNCERTAINTY, _BALANCE, _NOISE = range(5)


@dataclass(frozen=True)
class SelectionThresholds:
    """Confidence (tau_p) and uncertainty (kappa_p) thresholds of the selection gate"""
    tau_p: float = 0.7
    kappa_p: float = 0.005
    use_uncertainty: bool = True
    mc_passes: int = 10

    def __post_init__(self):
        if not 0.0 <= self.tau_p <= 1.0 or not 0.0 <= self.kappa_p <= 1.0:
            raise ValueError(f"Thresholds must lie in [0, 1], got tau_p={self.tau_p}, kappa_p={self.kappa_p}")
        if self.mc_passes < 2:
            raise ValueError(f"Uncertainty needs at least 2 dropout passes, got {self.mc_passes}")


def apply_selection_gate(confidences: np.ndarray, uncertainties: np.ndarray,
                         thresholds: SelectionThresholds) -> np.ndarray:
    """
    Selection indicator 1[Q >= tau_p] * 1[U <= kappa_p]

    The uncertainty factor is dropped when use_uncertainty is off.
    """
    selected = np.asarray(confidences) >= thresholds.tau_p
    if thresholds.use_uncertainty:
        selected &= np.asarray(uncertainties) <= thresholds.kappa_p
    return selected


@dataclass
class PseudoLabeledSet:
    """
    Pseudo-labeled rows of the unlabeled pool

    indices point into the unlabeled pool; iterations record when each entry was created.
    """
    indices: np.ndarray
    labels: np.ndarray
    confidences: np.ndarray
    uncertainties: np.ndarray
    iterations: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.confidences = np.asarray(self.confidences, dtype=np.float64)
        self.uncertainties = np.asarray(self.uncertainties, dtype=np.float64)
        self.iterations = np.asarray(self.iterations, dtype=np.int64)
        n = self.indices.size
        for name in ('labels', 'confidences', 'uncertainties', 'iterations'):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"Pseudo-label field {name} must have {n} entries")

    @classmethod
    def empty(cls) -> 'PseudoLabeledSet':
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))

    def __len__(self) -> int:
        return int(self.indices.size)

    def class_counts(self) -> Dict[int, int]:
        classes, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}

    def subset(self, positions: np.ndarray) -> 'PseudoLabeledSet':
        positions = np.asarray(positions, dtype=np.int64)
        return PseudoLabeledSet(self.indices[positions], self.labels[positions], self.confidences[positions],
                                self.uncertainties[positions], self.iterations[positions])

    def with_labels(self, labels: np.ndarray) -> 'PseudoLabeledSet':
        return PseudoLabeledSet(self.indices, labels, self.confidences, self.uncertainties, self.iterations)

    def merge(self, newer: 'PseudoLabeledSet') -> 'PseudoLabeledSet':
        """Union keyed by pool index; entries of `newer` replace existing ones"""
        kept = np.flatnonzero(~np.isin(self.indices, newer.indices))
        combined = PseudoLabeledSet(
            np.concatenate([self.indices[kept], newer.indices]),
            np.concatenate([self.labels[kept], newer.labels]),
            np.concatenate([self.confidences[kept], newer.confidences]),
            np.concatenate([self.uncertainties[kept], newer.uncertainties]),
            np.concatenate([self.iterations[kept], newer.iterations]),
        )
        return combined.subset(np.argsort(combined.indices, kind='stable'))


def select_pseudo_labels(model: ClassifierModel, unlabeled_features: np.ndarray,
                         thresholds: SelectionThresholds, seed: int = 0,
                         iteration: int = 0) -> PseudoLabeledSet:
    """
    Gate every unlabeled row and keep the accepted ones with their argmax class

    Args:
        model: Current classifier
        unlabeled_features: Pool features
        thresholds: Selection gate
        seed: Dropout seed of the uncertainty estimate
        iteration: Provenance tag

    Returns:
        PseudoLabeledSet of accepted rows (rejected rows are dropped, never relabeled)
    """
    X = np.atleast_2d(unlabeled_features)
    if X.shape[0] == 0:
        return PseudoLabeledSet.empty()
    probs = model.predict_proba(X)
    confidences = probs.max(axis=1)
    labels = probs.argmax(axis=1)

    uncertainties = np.full(X.shape[0], np.nan)
    if thresholds.use_uncertainty:
        candidates = np.flatnonzero(confidences >= thresholds.tau_p)
        if candidates.size:
            uncertainties[candidates] = mc_uncertainty(model, X[candidates], thresholds.mc_passes, seed)

    with np.errstate(invalid='ignore'):
        selected = np.flatnonzero(apply_selection_gate(confidences, uncertainties, thresholds))
    return PseudoLabeledSet(selected, labels[selected], confidences[selected], uncertainties[selected],
                            np.full(selected.size, iteration))


def balance(pseudo: PseudoLabeledSet, seed: int) -> PseudoLabeledSet:
    """
    Under-sample every represented class to the minority class count

    Returns:
        Balanced set ordered by pool index
    """
    if len(pseudo) == 0:
        return pseudo
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(pseudo.labels, return_counts=True)
    minimum = int(counts.min())
    keep = np.concatenate([
        rng.choice(np.flatnonzero(pseudo.labels == c), size=minimum, replace=False) for c in classes
    ])
    return pseudo.subset(np.sort(keep))


def inject_label_noise(target: Union[PseudoLabeledSet, LabeledView, np.ndarray], rate: float, k: int,
                       seed: int):
    """
    Replace each hard label, with probability `rate`, by a uniformly drawn different class

    Args:
        target: Pseudo-labeled set, labeled view or label array
        rate: Flip probability in [0, 1]
        k: Number of classes
        seed: Random seed

    Returns:
        Corrupted copy of the same type
    """
    rng = np.random.default_rng(seed)
    if isinstance(target, PseudoLabeledSet):
        return target.with_labels(corrupt_labels(target.labels, rate, k, rng))
    if isinstance(target, LabeledView):
        return LabeledView(target.features, corrupt_labels(target.labels, rate, k, rng), target.k)
    return corrupt_labels(np.asarray(target), rate, k, rng)


@dataclass
class SelfTrainConfig:
    """Parameters of a self-training run"""
    # Risk
    spec: DivergenceSpec = field(default_factory=DivergenceSpec.kl)
    reg: RegularizationWeights = field(default_factory=RegularizationWeights)
    regularizer_spec: Optional[DivergenceSpec] = None
    beta: Optional[float] = None             # None: n / (n + m)

    # Self-training loop
    max_iterations: int = 5                  # includes the warm-up
    thresholds: SelectionThresholds = field(default_factory=SelectionThresholds)
    balancing: bool = True
    noise_rate: float = 0.0                  # flips of new pseudo-labels

    # Model and optimizer
    hidden: int = 128
    hidden_layers: int = 2
    dropout: float = 0.3
    learning_rate: float = 0.03
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 0.0
    epochs: int = 64
    batch_size: int = 512

    seed: int = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError(f"Invalid schedule epochs={self.epochs}, batch_size={self.batch_size}")
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError(f"noise_rate must lie in [0, 1], got {self.noise_rate}")

    def optimizer(self) -> OptimizerState:
        return OptimizerState(self.learning_rate, self.momentum, self.nesterov, self.weight_decay)


@dataclass
class EvaluationData:
    """Held-back labels; read only when recording metrics"""
    test_features: Optional[np.ndarray] = None
    test_labels: Optional[np.ndarray] = None
    unlabeled_labels: Optional[np.ndarray] = None


@dataclass
class IterationMetrics:
    iteration: int
    phase: str
    pseudo_before_balance: int
    pseudo_after_balance: int
    new_selections: int
    no_pseudo_labels: bool
    beta: float
    objective: Optional[float]
    train_accuracy: float
    test_accuracy: Optional[float]
    pseudo_precision: Optional[float]
    ssl_cost: Optional[float]
    marginal_divergence: Optional[float]

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class SelfTrainingResults:
    model: ClassifierModel
    metrics: List[IterationMetrics]
    pseudo_labels: PseudoLabeledSet
    wall_time: float

    @property
    def final_test_accuracy(self) -> Optional[float]:
        return self.metrics[-1].test_accuracy if self.metrics else None


def _optional(value: float) -> Optional[float]:
    return float(value) if value is not None and math.isfinite(value) else None


class SelfTrainingProcess:
    """
    Shared warm-up, training and bookkeeping of the self-training loops

    Iteration 1 trains on labeled rows only; every later iteration trains a
    freshly initialized model on labeled rows plus unlabeled rows with targets
    derived from the previous model.
    """

    name = "supervised"

    def __init__(self, config: SelfTrainConfig):
        self.config = config

    def _init_model(self, d: int, k: int, iteration: int) -> ClassifierModel:
        c = self.config
        return init_model(d, k, c.hidden, c.dropout, derive_seed(c.seed, iteration, _INIT), c.hidden_layers)

    def _train_iteration(self, iteration: int, data: TrainingData, objective: RiskObjective,
                         k: int, verbose: bool) -> TrainingResult:
        c = self.config
        model = self._init_model(data.features.shape[1], k, iteration)
        return train_epochs(model, objective, data, c.optimizer(), c.epochs, c.batch_size,
                            derive_seed(c.seed, iteration, _TRAIN), verbose=verbose)

    @staticmethod
    def mixture_data(labeled: LabeledView, extra_features: np.ndarray, extra_targets: np.ndarray,
                     beta: float, regularize_extra: bool = False) -> TrainingData:
        """Labeled rows (weight beta/n) followed by extra rows (weight (1 - beta)/m)"""
        n, m = len(labeled), int(extra_features.shape[0])
        features = np.vstack([labeled.features, extra_features]) if m else labeled.features
        targets = np.vstack([one_hot(labeled.labels, labeled.k), extra_targets]) if m else one_hot(labeled.labels, labeled.k)
        mask = np.concatenate([np.zeros(n, dtype=bool), np.full(m, regularize_extra)])
        return TrainingData(features, targets, mixture_weights(n, m, beta), mask)

    def warm_up(self, labeled: LabeledView, verbose: bool = False) -> TrainingResult:
        """Supervised training on labeled rows only"""
        if len(labeled) == 0:
            raise ValueError("Self-training needs labeled rows")
        data = TrainingData.supervised(labeled.features, labeled.labels, labeled.k)
        return self._train_iteration(1, data, RiskObjective(self.config.spec), labeled.k, verbose)

    def _record(self, iteration: int, phase: str, result: TrainingResult, labeled: LabeledView,
                unlabeled: Optional[UnlabeledView], evaluation: Optional[EvaluationData], beta: float,
                pseudo_before: int = 0, pseudo_after: int = 0, new_selections: int = 0,
                pool_indices: Optional[np.ndarray] = None,
                pool_targets: Optional[np.ndarray] = None) -> IterationMetrics:
        model = result.model
        k = labeled.k
        test_accuracy = None
        precision = None
        ssl_cost = None
        marginal = None

        if evaluation is not None and evaluation.test_labels is not None and len(evaluation.test_labels):
            test_accuracy = model.accuracy(evaluation.test_features, evaluation.test_labels)

        if (evaluation is not None and evaluation.unlabeled_labels is not None
                and pool_indices is not None and pool_indices.size):
            truth = evaluation.unlabeled_labels[pool_indices]
            precision = float(np.mean(np.argmax(pool_targets, axis=1) == truth))
            # TV between the true and the pseudo beta-mixture joints; labeled rows agree
            tv_rows = divergence_rows(DivergenceSpec.tv(), one_hot(truth, k), pool_targets)
            ssl_cost = float((1.0 - beta) * np.mean(tv_rows))

        if unlabeled is not None and len(unlabeled):
            mean = model.predict_proba(unlabeled.features).mean(axis=0, keepdims=True)
            spec = self.config.regularizer_spec or self.config.spec
            marginal = float(divergence_rows(spec, mean, np.full_like(mean, 1.0 / k))[0])

        metrics = IterationMetrics(
            iteration=iteration,
            phase=phase,
            pseudo_before_balance=int(pseudo_before),
            pseudo_after_balance=int(pseudo_after),
            new_selections=int(new_selections),
            no_pseudo_labels=phase != 'warm-up' and pseudo_after == 0,
            beta=float(beta),
            objective=_optional(result.loss_trace[-1]) if result.loss_trace else None,
            train_accuracy=model.accuracy(labeled.features, labeled.labels),
            test_accuracy=_optional(test_accuracy),
            pseudo_precision=precision,
            ssl_cost=ssl_cost,
            marginal_divergence=_optional(marginal),
        )
        logger.info(f"[{self.name}] iteration {iteration} ({phase}): "
                    f"pseudo={pseudo_after} train_acc={metrics.train_accuracy:.4f} "
                    f"test_acc={metrics.test_accuracy if metrics.test_accuracy is not None else float('nan'):.4f}")
        return metrics

    def run(self, labeled: LabeledView, unlabeled: Optional[UnlabeledView] = None,
            evaluation: Optional[EvaluationData] = None, verbose: bool = False) -> SelfTrainingResults:
        """Warm-up only (the supervised baseline)"""
        start_time = time.time()
        result = self.warm_up(labeled, verbose)
        metrics = [self._record(1, 'warm-up', result, labeled, unlabeled, evaluation, 1.0)]
        return SelfTrainingResults(result.model, metrics, PseudoLabeledSet.empty(), time.time() - start_time)


class PseudoLabelingProcess(SelfTrainingProcess):
    """
    DP-SSL

    1. Warm-up on labeled rows
    2. Select confident, low-uncertainty argmax labels over the whole pool and
       merge them into the pseudo-labeled set (newest label wins)
    3. Re-initialize the model
    4. Balance the pseudo-labeled set
    5. Train on labeled + pseudo-labeled rows with the beta-mixture DER
    """

    name = "dp-ssl"

    def run(self, labeled: LabeledView, unlabeled: UnlabeledView,
            evaluation: Optional[EvaluationData] = None, verbose: bool = False) -> SelfTrainingResults:
        c = self.config
        k = labeled.k
        start_time = time.time()

        result = self.warm_up(labeled, verbose)
        metrics = [self._record(1, 'warm-up', result, labeled, unlabeled, evaluation, 1.0)]
        pseudo = PseudoLabeledSet.empty()

        for iteration in tqdm(range(2, c.max_iterations + 1), desc=self.name, disable=not verbose):
            selected = select_pseudo_labels(result.model, unlabeled.features, c.thresholds,
                                            seed=derive_seed(c.seed, iteration, _UNCERTAINTY),
                                            iteration=iteration)
            if c.noise_rate > 0 and len(selected):
                selected = inject_label_noise(selected, c.noise_rate, k, derive_seed(c.seed, iteration, _NOISE))
            pseudo = pseudo.merge(selected)
            training_set = balance(pseudo, derive_seed(c.seed, iteration, _BALANCE)) if c.balancing else pseudo

            if len(training_set) == 0:
                logger.info(f"[{self.name}] iteration {iteration}: no pseudo-labels passed the gate")
                beta = 1.0
            else:
                beta = c.beta if c.beta is not None else default_beta(len(labeled), len(training_set))

            pseudo_targets = one_hot(training_set.labels, k)
            data = self.mixture_data(labeled, unlabeled.features[training_set.indices], pseudo_targets, beta)
            result = self._train_iteration(iteration, data, RiskObjective(c.spec), k, verbose)
            metrics.append(self._record(
                iteration, 'self-training', result, labeled, unlabeled, evaluation, beta,
                pseudo_before=len(pseudo), pseudo_after=len(training_set), new_selections=len(selected),
                pool_indices=training_set.indices, pool_targets=pseudo_targets))

        return SelfTrainingResults(result.model, metrics, pseudo, time.time() - start_time)


class EntropyMinimizationProcess(SelfTrainingProcess):
    """
    DEM-SSL

    Soft labels are the previous model's predictions on every unlabeled row;
    each iteration minimizes the beta-mixture DER plus lambda_h times the mean
    D-entropy and lambda_u times D(mean prediction || uniform).
    """

    name = "dem-ssl"

    def run(self, labeled: LabeledView, unlabeled: UnlabeledView,
            evaluation: Optional[EvaluationData] = None, verbose: bool = False) -> SelfTrainingResults:
        c = self.config
        k = labeled.k
        m = len(unlabeled)
        start_time = time.time()

        result = self.warm_up(labeled, verbose)
        metrics = [self._record(1, 'warm-up', result, labeled, unlabeled, evaluation, 1.0)]
        objective = RiskObjective(c.spec, c.reg, c.regularizer_spec)
        soft_labels = np.zeros((0, k))

        for iteration in tqdm(range(2, c.max_iterations + 1), desc=self.name, disable=not verbose):
            soft_labels = result.model.predict_proba(unlabeled.features) if m else np.zeros((0, k))
            beta = 1.0 if m == 0 else (c.beta if c.beta is not None else default_beta(len(labeled), m))
            data = self.mixture_data(labeled, unlabeled.features, soft_labels, beta, regularize_extra=True)
            result = self._train_iteration(iteration, data, objective, k, verbose)
            metrics.append(self._record(
                iteration, 'self-training', result, labeled, unlabeled, evaluation, beta,
                pseudo_before=m, pseudo_after=m, new_selections=m,
                pool_indices=np.arange(m), pool_targets=soft_labels))

        soft_set = PseudoLabeledSet(np.arange(soft_labels.shape[0]), soft_labels.argmax(axis=1) if m else np.zeros(0),
                                    soft_labels.max(axis=1) if m else np.zeros(0),
                                    np.full(soft_labels.shape[0], np.nan),
                                    np.full(soft_labels.shape[0], c.max_iterations))
        return SelfTrainingResults(result.model, metrics, soft_set, time.time() - start_time)


def train_supervised(labeled: LabeledView, config: SelfTrainConfig,
                     evaluation: Optional[EvaluationData] = None, verbose: bool = False) -> SelfTrainingResults:
    """Supervised baseline: the warm-up model"""
    return SelfTrainingProcess(config).run(labeled, None, evaluation, verbose)


def dp_ssl(labeled: LabeledView, unlabeled: UnlabeledView, config: SelfTrainConfig,
           evaluation: Optional[EvaluationData] = None, verbose: bool = False) -> SelfTrainingResults:
    return PseudoLabelingProcess(config).run(labeled, unlabeled, evaluation, verbose)


def dem_ssl(labeled: LabeledView, unlabeled: UnlabeledView, config: SelfTrainConfig,
            evaluation: Optional[EvaluationData] = None, verbose: bool = False) -> SelfTrainingResults:
    return EntropyMinimizationProcess(config).run(labeled, unlabeled, evaluation, verbose)


# Settings of the reported self-training variants
STANDARD_SELF_TRAINING_CONDITIONS = {
    'dp_ssl_wu': {
        'thresholds': SelectionThresholds(tau_p=0.7, kappa_p=0.005, use_uncertainty=True),
        'max_iterations': 5, 'balancing': True,
    },
    'dp_ssl_wou': {
        'thresholds': SelectionThresholds(tau_p=0.7, use_uncertainty=False),
        'max_iterations': 5, 'balancing': True,
    },
    'dp_ssl_low_threshold': {
        'thresholds': SelectionThresholds(tau_p=0.3, use_uncertainty=False),
        'max_iterations': 5, 'balancing': True,
    },
    'dp_ssl_no_balancing': {
        'thresholds': SelectionThresholds(tau_p=0.7, use_uncertainty=False),
        'max_iterations': 5, 'balancing': False,
    },
    'dem_ssl': {
        'reg': RegularizationWeights(lambda_h=0.4, lambda_u=0.8),
        'max_iterations': 5,
    },
    'dem_ssl_low_entropy': {
        'reg': RegularizationWeights(lambda_h=0.04, lambda_u=0.8),
        'max_iterations': 5,
    },
}
