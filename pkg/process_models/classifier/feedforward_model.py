"""
Feedforward Classifier Model
Fully connected softmax classifier with dropout, SGD with Nesterov momentum
and cosine annealing, Monte Carlo dropout uncertainty and versioned checkpoints
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import softmax
from tqdm import tqdm

from core.mathematical_models.empirical_risk import RiskObjective, NonFiniteRiskError, one_hot

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


def derive_seed(seed: int, *keys: int) -> int:
    """Reproducible child seed for (run seed, iteration, purpose, ...)"""
    return int(np.random.SeedSequence([int(seed), *[int(key) for key in keys]]).generate_state(1)[0])


class ForwardMode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass needed for backpropagation"""
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    dropout_masks: List[Optional[np.ndarray]]


@dataclass
class ClassifierModel:
    """
    d -> hidden -> ... -> hidden -> k network with ReLU and inverted dropout

    weights[l] has shape (fan_in, fan_out); rows are multiplied from the left.
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    dropout: float = 0.0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("Each layer needs a weight matrix and a bias vector")
        for index, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"Layer {index}: weight {W.shape} incompatible with bias {b.shape}")
            if index and self.weights[index - 1].shape[1] != W.shape[0]:
                raise ValueError(f"Layer {index} expects {W.shape[0]} inputs, previous layer gives "
                                 f"{self.weights[index - 1].shape[1]}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"Dropout rate must lie in [0, 1), got {self.dropout}")

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def d(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def k(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def hidden_layers(self) -> int:
        return len(self.weights) - 1

    def parameters(self) -> List[np.ndarray]:
        """Weights and biases interleaved per layer (updated in place by optimizers)"""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend([W, b])
        return params

    def copy(self) -> 'ClassifierModel':
        return ClassifierModel([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.dropout)

    def _forward_cache(self, X: np.ndarray, training: bool,
                       rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, ForwardCache]:
        cache = ForwardCache([], [], [])
        activation = X
        last = len(self.weights) - 1
        for index, (W, b) in enumerate(zip(self.weights, self.biases)):
            cache.inputs.append(activation)
            z = activation @ W + b
            if index == last:
                return z, cache
            cache.pre_activations.append(z)
            activation = np.maximum(z, 0.0)
            mask = None
            if training and self.dropout > 0:
                mask = (rng.random(activation.shape) >= self.dropout) / (1.0 - self.dropout)
                activation = activation * mask
            cache.dropout_masks.append(mask)
        raise AssertionError("unreachable")

    def forward(self, x: np.ndarray, mode: ForwardMode = ForwardMode.EVAL,
                rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Logits and softmax conditionals P_theta(Y|x)

        Args:
            x: Feature vector (d,) or rows (n, d)
            mode: EVAL (deterministic) or TRAIN (dropout from rng)
            rng: Random generator, required in TRAIN mode

        Returns:
            (logits, probabilities) with the leading shape of x
        """
        X = np.asarray(x, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.d:
            raise ValueError(f"Expected {self.d} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("Input features must be finite")
        training = ForwardMode(mode) is ForwardMode.TRAIN
        if training and rng is None:
            raise ValueError("TRAIN mode needs a random generator for dropout")

        logits, _ = self._forward_cache(X, training, rng)
        probs = softmax(logits, axis=1)
        if single:
            return logits[0], probs[0]
        return logits, probs

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def accuracy(self, X: np.ndarray, labels: np.ndarray) -> float:
        if len(labels) == 0:
            return float('nan')
        return float(np.mean(self.predict(X) == np.asarray(labels)))

    def backward(self, cache: ForwardCache, grad_logits: np.ndarray) -> List[np.ndarray]:
        """
        Backpropagate dL/dlogits

        Returns:
            Gradients in the order of parameters()
        """
        grads: List[np.ndarray] = [None] * (2 * len(self.weights))
        grad = grad_logits
        for index in range(len(self.weights) - 1, -1, -1):
            grads[2 * index] = cache.inputs[index].T @ grad
            grads[2 * index + 1] = grad.sum(axis=0)
            if index == 0:
                break
            grad = grad @ self.weights[index].T
            mask = cache.dropout_masks[index - 1]
            if mask is not None:
                grad = grad * mask
            grad = grad * (cache.pre_activations[index - 1] > 0.0)
        return grads

    def loss_and_gradients(self, X: np.ndarray, objective: RiskObjective, targets: np.ndarray,
                           weights: np.ndarray, unlabeled_mask: Optional[np.ndarray] = None,
                           rng: Optional[np.random.Generator] = None) -> Tuple[float, List[np.ndarray]]:
        """Objective value and parameter gradients (dropout active only when rng is given)"""
        logits, cache = self._forward_cache(np.atleast_2d(X), rng is not None, rng)
        value, grad_logits = objective.value_and_gradient(logits, targets, weights, unlabeled_mask)
        return value, self.backward(cache, grad_logits)


def init_model(d: int, k: int, hidden: int, dropout: float, seed: int,
               hidden_layers: int = 2) -> ClassifierModel:
    """
    Deterministic initialization

    W ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0

    Args:
        d: Input features
        k: Output classes
        hidden: Width of every hidden layer
        dropout: Dropout rate in [0, 1)
        seed: Random seed
        hidden_layers: Number of hidden layers

    Returns:
        ClassifierModel
    """
    if d < 1 or k < 1 or hidden < 1 or hidden_layers < 0:
        raise ValueError(f"Invalid dimensions d={d}, k={k}, hidden={hidden}, hidden_layers={hidden_layers}")
    rng = np.random.default_rng(seed)
    dims = [d] + [hidden] * hidden_layers + [k]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ClassifierModel(weights, biases, dropout)


@dataclass
class OptimizerState:
    """
    SGD with (Nesterov) momentum and cosine annealing

    lr_t = lr_0 * (1 + cos(pi * t / T)) / 2 for t <= T (constant when T = 0)
    buf = mu * buf + g;  step = g + mu * buf (Nesterov) or buf
    """
    learning_rate: float = 0.03
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 0.0
    total_steps: int = 0
    step: int = 0
    buffers: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.learning_rate < 0 or not 0.0 <= self.momentum < 1.0 or self.weight_decay < 0:
            raise ValueError(f"Invalid optimizer settings lr={self.learning_rate}, momentum={self.momentum}, "
                             f"weight_decay={self.weight_decay}")

    def current_learning_rate(self) -> float:
        if self.total_steps <= 0:
            return self.learning_rate
        progress = min(self.step, self.total_steps) / self.total_steps
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))

    def apply(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        """In-place parameter update"""
        if self.buffers is None:
            self.buffers = [np.zeros_like(p) for p in params]
        lr = self.current_learning_rate()
        for param, grad, buffer in zip(params, grads, self.buffers):
            if self.weight_decay:
                grad = grad + self.weight_decay * param
            buffer *= self.momentum
            buffer += grad
            update = grad + self.momentum * buffer if self.nesterov else buffer
            param -= lr * update
        self.step += 1

    def fresh(self) -> 'OptimizerState':
        """Same settings with cleared buffers and schedule"""
        return OptimizerState(self.learning_rate, self.momentum, self.nesterov, self.weight_decay)


@dataclass
class TrainingData:
    """
    Rows of one training set

    targets: label distributions (n, k); weights: joint weights summing to 1;
    unlabeled_mask: rows entering the entropy and mean-prediction regularizers
    """
    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    unlabeled_mask: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.unlabeled_mask = np.asarray(self.unlabeled_mask, dtype=bool).reshape(-1)
        n = self.features.shape[0]
        if self.targets.shape[0] != n or self.weights.shape != (n,) or self.unlabeled_mask.shape != (n,):
            raise ValueError("Features, targets, weights and mask must describe the same rows")

    @classmethod
    def supervised(cls, features: np.ndarray, labels: np.ndarray, k: int) -> 'TrainingData':
        n = len(labels)
        if n == 0:
            raise ValueError("Supervised training needs labeled rows")
        return cls(features, one_hot(labels, k), np.full(n, 1.0 / n), np.zeros(n, dtype=bool))

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass
class TrainingResult:
    model: ClassifierModel
    loss_trace: List[float]
    steps: int


def train_epochs(model: ClassifierModel, objective: RiskObjective, data: TrainingData,
                 optimizer: OptimizerState, epochs: int, batch_size: int, seed: int,
                 verbose: bool = False) -> TrainingResult:
    """
    Mini-batch training of a copy of `model`

    Rows are reshuffled every epoch from the seed; joint weights are
    renormalized within each mini-batch. The cosine schedule spans all steps
    unless the optimizer already has a horizon.

    Args:
        model: Initial model (left untouched)
        objective: Risk objective over logits
        data: Training rows
        optimizer: Optimizer state (mutated)
        epochs: Passes over the data
        batch_size: Rows per step
        seed: Shuffle and dropout seed
        verbose: Show a progress bar

    Returns:
        TrainingResult with the mean objective per epoch
    """
    if epochs < 0 or batch_size < 1:
        raise ValueError(f"Invalid schedule epochs={epochs}, batch_size={batch_size}")
    model = model.copy()
    if epochs == 0 or len(data) == 0:
        return TrainingResult(model, [], 0)

    n = len(data)
    steps_per_epoch = math.ceil(n / batch_size)
    if optimizer.total_steps <= 0:
        optimizer.total_steps = epochs * steps_per_epoch
    rng = np.random.default_rng(seed)
    loss_trace: List[float] = []

    for epoch in tqdm(range(epochs), desc=f"train {objective.label}", disable=not verbose, leave=False):
        order = rng.permutation(n)
        epoch_losses = []
        for step, start in enumerate(range(0, n, batch_size)):
            rows = order[start:start + batch_size]
            weights = data.weights[rows]
            total = weights.sum()
            if total > 0:
                weights = weights / total

            logits, cache = model._forward_cache(data.features[rows], True, rng)
            value, grad_logits = objective.value_and_gradient(
                logits, data.targets[rows], weights, data.unlabeled_mask[rows])
            if not math.isfinite(value) or not np.all(np.isfinite(grad_logits)):
                local = objective.locate_non_finite(logits, data.targets[rows], weights)
                sample = int(rows[local]) if local is not None else None
                raise NonFiniteRiskError(
                    f"Objective {objective.label} is not finite at epoch {epoch}, step {step}"
                    f" (sample {sample})",
                    spec_label=objective.label, sample_index=sample, epoch=epoch, step=step)

            optimizer.apply(model.parameters(), model.backward(cache, grad_logits))
            epoch_losses.append(value)

        loss_trace.append(float(np.mean(epoch_losses)))
        logger.debug(f"epoch {epoch + 1}/{epochs}: loss={loss_trace[-1]:.6f} "
                     f"lr={optimizer.current_learning_rate():.5f}")

    return TrainingResult(model, loss_trace, epochs * steps_per_epoch)


def mc_uncertainty(model: ClassifierModel, x: np.ndarray, passes: int = 10, seed: int = 0):
    """
    Monte Carlo dropout uncertainty

    Sample standard deviation over `passes` dropout forward passes of the
    probability of the class selected by the deterministic prediction.

    Args:
        model: Classifier
        x: Feature vector or rows
        passes: Number of dropout passes (>= 2)
        seed: Dropout seed

    Returns:
        Value in [0, 1] (array for row input)
    """
    if passes < 2:
        raise ValueError(f"Uncertainty needs at least 2 passes, got {passes}")
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    _, probs = model.forward(X)
    selected = np.argmax(probs, axis=1)

    if model.dropout == 0:
        uncertainty = np.zeros(X.shape[0])
    else:
        rng = np.random.default_rng(seed)
        rows = np.arange(X.shape[0])
        samples = np.empty((passes, X.shape[0]))
        for t in range(passes):
            samples[t] = model.forward(X, ForwardMode.TRAIN, rng)[1][rows, selected]
        uncertainty = np.clip(samples.std(axis=0, ddof=1), 0.0, 1.0)
    return float(uncertainty[0]) if single else uncertainty


def save_checkpoint(model: ClassifierModel, path: str) -> str:
    """
    Write a versioned .npz checkpoint

    Layout: format_version (int), dims (int array d, hidden..., k), dropout
    (float64), W0..W{L-1} (fan_in x fan_out float64, row-major), b0..b{L-1}
    """
    if not path.endswith('.npz'):
        path = f"{path}.npz"
    arrays: Dict[str, np.ndarray] = {
        'format_version': np.int64(CHECKPOINT_FORMAT_VERSION),
        'dims': np.array(model.dims, dtype=np.int64),
        'dropout': np.float64(model.dropout),
    }
    for index, (W, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f'W{index}'] = W
        arrays[f'b{index}'] = b
    np.savez(path, **arrays)
    return path


def load_checkpoint(path: str) -> ClassifierModel:
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive['format_version'])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"Unsupported checkpoint version {version} in {path}")
        layers = len(archive['dims']) - 1
        weights = [archive[f'W{index}'].copy() for index in range(layers)]
        biases = [archive[f'b{index}'].copy() for index in range(layers)]
        return ClassifierModel(weights, biases, float(archive['dropout']))
