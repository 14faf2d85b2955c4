"""
Divergence-based Empirical Risk Models
Empirical joint distributions for SL and SSL, the divergence-based empirical
risk (DER) evaluated on them, the entropy-regularized risk, and analytic
gradients of these objectives with respect to classifier logits
"""

import math
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .divergence import (
    DivergenceModels, DivergenceSpec, DivergenceKind, CategoricalDistribution,
    INFINITE, LOG2, PROBABILITY_TOLERANCE,
    divergence_rows, f_divergence_rows, renyi_log_mass,
    generator_derivative, perspective_derivative,
)

logger = logging.getLogger(__name__)


class NonFiniteRiskError(RuntimeError):
    """Raised when a training objective evaluates to a non-finite value"""

    def __init__(self, message: str, spec_label: str, sample_index: Optional[int] = None,
                 epoch: Optional[int] = None, step: Optional[int] = None):
        super().__init__(message)
        self.spec_label = spec_label
        self.sample_index = sample_index
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True, eq=False)
class LabelAssignment:
    """Per-sample target: a hard class index or a soft distribution"""
    hard: Optional[int] = None
    soft: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.hard is None) == (self.soft is None):
            raise ValueError("A label assignment is either hard or soft")
        if self.hard is not None and self.hard < 0:
            raise ValueError(f"Class index must be non-negative, got {self.hard}")
        if self.soft is not None:
            object.__setattr__(self, 'soft', CategoricalDistribution(self.soft).probs)

    @classmethod
    def hard_label(cls, index: int) -> 'LabelAssignment':
        return cls(hard=int(index))

    @classmethod
    def soft_label(cls, probs) -> 'LabelAssignment':
        return cls(soft=probs)

    @property
    def is_hard(self) -> bool:
        return self.hard is not None

    def to_distribution(self, k: int) -> np.ndarray:
        if self.is_hard:
            return CategoricalDistribution.one_hot(self.hard, k).probs
        if self.soft.size != k:
            raise ValueError(f"Soft label has {self.soft.size} classes, expected {k}")
        return self.soft


@dataclass(frozen=True)
class RegularizationWeights:
    """Weights of the D-entropy (lambda_h) and mean-prediction (lambda_u) regularizers"""
    lambda_h: float = 0.0
    lambda_u: float = 0.0

    def __post_init__(self):
        for name in ('lambda_h', 'lambda_u'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")

    @property
    def is_zero(self) -> bool:
        return self.lambda_h == 0.0 and self.lambda_u == 0.0


def one_hot(labels: Sequence[int], k: int) -> np.ndarray:
    """One-hot rows for integer class labels"""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"Class labels must lie in [0, {k})")
    targets = np.zeros((labels.size, k))
    targets[np.arange(labels.size), labels] = 1.0
    return targets


TargetsLike = Union[np.ndarray, Sequence[int], Sequence[LabelAssignment]]


def stack_targets(targets: TargetsLike, k: int) -> np.ndarray:
    """Target distributions as an (n, k) array from labels, assignments or soft rows"""
    if len(targets) and isinstance(targets[0], LabelAssignment):
        return np.array([t.to_distribution(k) for t in targets]).reshape(len(targets), k)
    array = np.asarray(targets)
    if array.ndim == 1:
        return one_hot(array, k)
    return np.asarray(array, dtype=np.float64)


def _validate_rows(name: str, rows: np.ndarray) -> None:
    if rows.size == 0:
        return
    if not np.all(np.isfinite(rows)) or np.any(rows < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    sums = rows.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > PROBABILITY_TOLERANCE):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"{name} row {worst} sums to {sums[worst]:.12f}, expected 1")


@dataclass
class WeightedBatch:
    """
    Rows of an empirical joint distribution

    predictions: model conditionals P_theta(Y|x_s), shape (n, k)
    targets: label distributions (one-hot for hard labels), shape (n, k)
    weights: joint weight of each row, summing to 1
    """
    predictions: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.predictions = np.atleast_2d(np.asarray(self.predictions, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        k = self.predictions.shape[1]
        self.targets = stack_targets(self.targets, k) if len(self.targets) else np.zeros((0, k))

        n = self.predictions.shape[0]
        if self.targets.shape != self.predictions.shape:
            raise ValueError(f"Targets shape {self.targets.shape} does not match predictions {self.predictions.shape}")
        if self.weights.shape != (n,):
            raise ValueError(f"Expected {n} weights, got {self.weights.size}")
        _validate_rows("Predictions", self.predictions)
        _validate_rows("Targets", self.targets)
        if np.any(self.weights < 0):
            raise ValueError("Weights must be non-negative")
        if n and abs(self.weights.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"Weights must sum to 1, got {self.weights.sum():.12f}")

    @classmethod
    def uniform(cls, predictions: np.ndarray, targets: TargetsLike) -> 'WeightedBatch':
        """Rows weighted 1/n (the supervised joint)"""
        predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
        n = predictions.shape[0]
        weights = np.full(n, 1.0 / n) if n else np.zeros(0)
        return cls(predictions, targets, weights)

    @classmethod
    def empty(cls, k: int) -> 'WeightedBatch':
        return cls(np.zeros((0, k)), np.zeros((0, k)), np.zeros(0))

    @property
    def n(self) -> int:
        return int(self.predictions.shape[0])

    @property
    def k(self) -> int:
        return int(self.predictions.shape[1])

    @property
    def is_hard(self) -> bool:
        """All targets are one-hot"""
        return bool(np.all((self.targets == 0.0) | (self.targets == 1.0)))

    @property
    def true_class_probabilities(self) -> np.ndarray:
        """P_s = prediction at the target class (hard targets only)"""
        if not self.is_hard:
            raise ValueError("True-class probabilities need hard targets")
        return self.predictions[np.arange(self.n), np.argmax(self.targets, axis=1)]

    def __len__(self) -> int:
        return self.n


def default_beta(n: int, m: int) -> float:
    """beta = n / (n + m); falls back to 1 without unlabeled rows"""
    if m == 0:
        return 1.0
    return n / (n + m)


def mixture_weights(n: int, m: int, beta: float) -> np.ndarray:
    """Joint weights beta/n on labeled rows followed by (1-beta)/m on unlabeled rows"""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if n == 0 and beta > 0:
        raise ValueError("beta > 0 requires labeled rows")
    if m == 0 and beta < 1:
        raise ValueError("beta < 1 requires unlabeled rows")
    labeled = np.full(n, beta / n) if n else np.zeros(0)
    unlabeled = np.full(m, (1.0 - beta) / m) if m else np.zeros(0)
    return np.concatenate([labeled, unlabeled])


def joint_risk(spec: DivergenceSpec, predictions: np.ndarray, targets: np.ndarray,
               weights: np.ndarray) -> float:
    """
    Divergence between the weighted target joint and the weighted prediction joint

    f-divergences:  sum_s w_s sum_i q_si f(t_si / q_si)
    alpha-Renyi:    1/(a - 1) log sum_s w_s sum_i t_si^a q_si^(1-a)
    Rows with zero weight carry no joint mass and are skipped.
    """
    active = weights > 0
    P = predictions[active]
    T = targets[active]
    w = weights[active]
    if w.size == 0:
        return 0.0

    if spec.kind is DivergenceKind.RENYI:
        alpha = spec.alpha
        if alpha > 1.0 and np.any((T > 0) & (P == 0)):
            return INFINITE
        with np.errstate(divide='ignore', invalid='ignore'):
            log_mass = logsumexp(renyi_log_mass(alpha, T, P) + np.log(w))
            value = log_mass / (alpha - 1.0)
        if math.isnan(value):
            return INFINITE
        return max(float(value), 0.0)

    rows = f_divergence_rows(spec, T, P)
    if np.any(np.isposinf(rows)):
        return INFINITE
    return max(float(np.dot(w, rows)), 0.0)


class DivergenceRiskModels:
    """
    Divergence-based empirical risks

    SL:   R_D(theta) = D(P_hat(Y, X) || P_theta(Y, X)) with weights 1/n
    SSL:  the same divergence between beta-mixtures of labeled and pseudo-labeled rows
    """

    def __init__(self):
        self.divergence_models = DivergenceModels()

    def der_sl(self, spec: DivergenceSpec, batch: WeightedBatch) -> float:
        """
        Supervised DER over a uniformly weighted batch of hard-labeled rows

        For hard labels this equals the closed forms of der_closed_form.

        Args:
            spec: Divergence specification
            batch: Predictions with hard targets and weights 1/n

        Returns:
            Non-negative risk, INFINITE if a required probability is zero
        """
        if batch.n == 0:
            raise ValueError("Supervised DER needs at least one labeled row")
        if not np.allclose(batch.weights, 1.0 / batch.n, rtol=0.0, atol=1e-12):
            raise ValueError("Supervised DER expects uniform weights 1/n")
        if not batch.is_hard:
            raise ValueError("Supervised DER expects hard targets")
        return joint_risk(spec, batch.predictions, batch.targets, batch.weights)

    def der_ssl(self, spec: DivergenceSpec, labeled: WeightedBatch, pseudo: WeightedBatch,
                beta: float) -> float:
        """
        SSL DER between the beta-mixed joints of labeled and pseudo-labeled rows

        Labeled rows get weight beta/n, pseudo rows (1 - beta)/m. For
        f-divergences this decomposes into beta * mean labeled divergence +
        (1 - beta) * mean pseudo divergence; Renyi does not decompose.

        Args:
            spec: Divergence specification
            labeled: Labeled rows (hard targets); their weights are ignored
            pseudo: Pseudo-labeled rows (hard or soft targets); weights ignored
            beta: Mixture weight of the labeled part in [0, 1]

        Returns:
            Non-negative risk
        """
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {beta}")
        if labeled.n and not labeled.is_hard:
            raise ValueError("Labeled rows must carry hard targets")
        if pseudo.n == 0:
            beta = 1.0
        if beta == 0.0:
            labeled = WeightedBatch.empty(pseudo.k)
        if beta == 1.0:
            pseudo = WeightedBatch.empty(labeled.k)

        weights = mixture_weights(labeled.n, pseudo.n, beta)
        predictions = np.vstack([labeled.predictions, pseudo.predictions])
        targets = np.vstack([labeled.targets, pseudo.targets])
        return joint_risk(spec, predictions, targets, weights)

    def convex_combination_bound(self, spec: DivergenceSpec, labeled: WeightedBatch,
                                 pseudo: WeightedBatch, beta: float) -> float:
        """
        beta * DER(labeled) + (1 - beta) * DER(pseudo), each under uniform weights

        Upper bound of der_ssl by joint convexity; equality for f-divergences.
        """
        value = 0.0
        if beta > 0:
            value += beta * joint_risk(spec, labeled.predictions, labeled.targets,
                                       np.full(labeled.n, 1.0 / labeled.n))
        if beta < 1 and pseudo.n:
            value += (1.0 - beta) * joint_risk(spec, pseudo.predictions, pseudo.targets,
                                               np.full(pseudo.n, 1.0 / pseudo.n))
        return value

    def mean_prediction(self, predictions) -> CategoricalDistribution:
        """
        Coordinate-wise average of softmax outputs

        Args:
            predictions: Sequence of distributions or an (m, k) array

        Returns:
            P_bar = (1/m) sum_j P_theta(.|x_j)
        """
        rows = _prediction_rows(predictions)
        if rows.shape[0] == 0:
            raise ValueError("Mean prediction needs at least one prediction")
        return CategoricalDistribution(rows.mean(axis=0))

    def regularized_risk(self, spec: DivergenceSpec, labeled: WeightedBatch, unlabeled_predictions,
                         reg: RegularizationWeights,
                         regularizer_spec: Optional[DivergenceSpec] = None) -> float:
        """
        Entropy-regularized risk

        R = DER_SL(labeled) + lambda_h * (1/m) sum_j H_D(P_j) + lambda_u * D(P_bar || Unif(k))

        Args:
            spec: Divergence of the labeled term
            labeled: Uniformly weighted hard-labeled rows
            unlabeled_predictions: Predictions on unlabeled rows
            reg: Regularizer weights
            regularizer_spec: Divergence of both regularizers (defaults to spec)

        Returns:
            Regularized risk (may be negative through the entropy term)
        """
        value = self.der_sl(spec, labeled)
        reg_spec = regularizer_spec or spec
        rows = _prediction_rows(unlabeled_predictions)

        if reg.lambda_h > 0:
            if rows.shape[0] == 0:
                raise ValueError("Entropy regularizer needs unlabeled predictions")
            uniform = np.full_like(rows, 1.0 / rows.shape[1])
            value += reg.lambda_h * float(np.mean(-divergence_rows(reg_spec, rows, uniform)))
        if reg.lambda_u > 0:
            mean = self.mean_prediction(rows)
            value += reg.lambda_u * self.divergence_models.divergence(
                reg_spec, mean, CategoricalDistribution.uniform(mean.k))
        return value

    def der_closed_form(self, spec: DivergenceSpec, true_class_probs: np.ndarray) -> float:
        """
        Hard-label DER from the per-family closed forms (P_i = prediction at the true class)

        KL      (1/n) sum -log P_i
        TV      (1/n) sum (1 - P_i)
        Chi2    (1/n) sum (1/P_i - 1)
        Power   (1/n) sum (P_i^(1-p) - 1)
        JS      (1/n) sum (2 log 2 + P_i log P_i - (1 + P_i) log(1 + P_i))
        LeCam   (1/n) sum (1 - P_i) / (1 + P_i)
        Renyi   1/(a - 1) log((1/n) sum P_i^(1-a))
        """
        P = np.asarray(true_class_probs, dtype=np.float64).reshape(-1)
        if P.size == 0:
            raise ValueError("Closed-form DER needs at least one sample")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("True-class probabilities must lie in [0, 1]")
        kind = spec.kind
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            if kind is DivergenceKind.KL:
                value = np.mean(-np.log(P))
            elif kind is DivergenceKind.TV:
                value = np.mean(1.0 - P)
            elif kind is DivergenceKind.CHI_SQUARED:
                value = np.mean(1.0 / P - 1.0)
            elif kind is DivergenceKind.POWER:
                value = np.mean(np.power(P, 1.0 - spec.p) - 1.0)
            elif kind is DivergenceKind.JENSEN_SHANNON:
                value = np.mean(2.0 * LOG2 + xlogy(P, P) - (1.0 + P) * np.log1p(P))
            elif kind is DivergenceKind.LE_CAM:
                value = np.mean((1.0 - P) / (1.0 + P))
            elif kind is DivergenceKind.RENYI:
                alpha = spec.alpha
                log_terms = np.where(P > 0, (1.0 - alpha) * np.log(np.maximum(P, 1e-300)),
                                     -np.inf if alpha < 1 else np.inf)
                value = (logsumexp(log_terms) - math.log(P.size)) / (alpha - 1.0)
            else:
                value = 0.0 if np.all(P == 1.0) else INFINITE
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return INFINITE
        return max(value, 0.0)

    def der_gradient(self, spec: DivergenceSpec, logits: np.ndarray, targets: TargetsLike,
                     weights: np.ndarray, reg: RegularizationWeights,
                     unlabeled_mask: Optional[np.ndarray] = None,
                     regularizer_spec: Optional[DivergenceSpec] = None) -> np.ndarray:
        """
        Analytic gradient of DER + both regularizers with respect to the logits

        Returns:
            Array with the shape of logits
        """
        objective = RiskObjective(spec, reg, regularizer_spec)
        _, gradient = objective.value_and_gradient(logits, targets, weights, unlabeled_mask)
        return gradient


def _prediction_rows(predictions) -> np.ndarray:
    if isinstance(predictions, np.ndarray):
        return np.atleast_2d(predictions.astype(np.float64))
    rows = [p.probs if isinstance(p, CategoricalDistribution) else np.asarray(p, dtype=np.float64)
            for p in predictions]
    if not rows:
        return np.zeros((0, 2))
    return np.vstack(rows)


def _divergence_to_uniform_gradient(spec: DivergenceSpec, Q: np.ndarray) -> np.ndarray:
    """Rows of dD(q || Unif(k))/dq"""
    k = Q.shape[-1]
    if spec.kind is DivergenceKind.RENYI:
        alpha = spec.alpha
        log_q = np.log(Q)
        log_norm = logsumexp(alpha * log_q, axis=-1, keepdims=True)
        return alpha / (alpha - 1.0) * np.exp((alpha - 1.0) * log_q - log_norm)
    # D = sum_i (1/k) f(k q_i)
    return generator_derivative(spec, k * Q)


@dataclass
class RiskObjective:
    """
    Training objective over logits

    L = DER(weighted rows) + lambda_h * mean_j H_D(q_j) + lambda_u * D(q_bar || Unif(k))

    The DER term runs over rows with positive weight, the regularizers over the
    rows flagged in unlabeled_mask (all rows when no mask is given).
    """
    spec: DivergenceSpec
    reg: RegularizationWeights = RegularizationWeights()
    regularizer_spec: Optional[DivergenceSpec] = None

    @property
    def label(self) -> str:
        return self.spec.label

    def value_and_gradient(self, logits: np.ndarray, targets: TargetsLike, weights: np.ndarray,
                           unlabeled_mask: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
        """
        Evaluate the objective and its gradient with respect to the logits

        Args:
            logits: Per-row logits, shape (n, k)
            targets: Target distributions or class labels
            weights: Joint weights of the DER term, shape (n,)
            unlabeled_mask: Rows entering the regularizers

        Returns:
            (objective value, gradient of shape (n, k))
        """
        Z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        if not np.all(np.isfinite(Z)):
            raise ValueError("Logits must be finite")
        n, k = Z.shape
        T = stack_targets(targets, k)
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if T.shape != Z.shape or w.shape != (n,):
            raise ValueError(f"Inconsistent objective inputs: logits {Z.shape}, targets {T.shape}, weights {w.shape}")

        Q = softmax(Z, axis=1)
        grad_q = np.zeros_like(Q)
        value = 0.0

        active = w > 0
        if np.any(active):
            value += self._der_term(Q, T, w, active, grad_q)

        mask = np.ones(n, dtype=bool) if unlabeled_mask is None else np.asarray(unlabeled_mask, dtype=bool)
        m_u = int(mask.sum())
        if m_u and not self.reg.is_zero:
            value += self._regularizer_terms(Q, mask, m_u, grad_q)

        grad_z = Q * (grad_q - np.sum(Q * grad_q, axis=1, keepdims=True))
        return float(value), grad_z

    def value(self, logits: np.ndarray, targets: TargetsLike, weights: np.ndarray,
              unlabeled_mask: Optional[np.ndarray] = None) -> float:
        return self.value_and_gradient(logits, targets, weights, unlabeled_mask)[0]

    def _der_term(self, Q: np.ndarray, T: np.ndarray, w: np.ndarray, active: np.ndarray,
                  grad_q: np.ndarray) -> float:
        Qa, Ta, wa = Q[active], T[active], w[active]
        spec = self.spec
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            if spec.kind is DivergenceKind.RENYI:
                alpha = spec.alpha
                log_total = logsumexp(renyi_log_mass(alpha, Ta, Qa) + np.log(wa))
                target_power = np.where(Ta > 0, np.power(Ta, alpha), 0.0)
                # dL/dq = -w t^a q^-a / S
                grad_q[active] = -wa[:, None] * target_power * np.exp(-alpha * np.log(Qa) - log_total)
                return float(log_total / (alpha - 1.0))

            rows = f_divergence_rows(spec, Ta, Qa)
            grad_q[active] = wa[:, None] * perspective_derivative(spec, Ta / Qa)
            return float(np.dot(wa, rows))

    def _regularizer_terms(self, Q: np.ndarray, mask: np.ndarray, m_u: int,
                           grad_q: np.ndarray) -> float:
        reg_spec = self.regularizer_spec or self.spec
        U = Q[mask]
        k = U.shape[1]
        value = 0.0
        if self.reg.lambda_h > 0:
            rows = divergence_rows(reg_spec, U, np.full_like(U, 1.0 / k))
            value -= self.reg.lambda_h * float(np.mean(rows))
            grad_q[mask] -= self.reg.lambda_h / m_u * _divergence_to_uniform_gradient(reg_spec, U)
        if self.reg.lambda_u > 0:
            mean = U.mean(axis=0, keepdims=True)
            value += self.reg.lambda_u * float(divergence_rows(reg_spec, mean, np.full_like(mean, 1.0 / k))[0])
            grad_q[mask] += self.reg.lambda_u / m_u * _divergence_to_uniform_gradient(reg_spec, mean)
        return value

    def locate_non_finite(self, logits: np.ndarray, targets: TargetsLike,
                          weights: np.ndarray) -> Optional[int]:
        """Index of the first weighted row whose own divergence is not finite"""
        Z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        T = stack_targets(targets, Z.shape[1])
        with np.errstate(over='ignore', invalid='ignore'):
            Q = softmax(Z, axis=1)
        rows = divergence_rows(self.spec, T, Q)
        bad = np.flatnonzero((~np.isfinite(rows) | ~np.all(np.isfinite(Z), axis=1)) & (np.asarray(weights) > 0))
        return int(bad[0]) if bad.size else None


def finite_difference_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray,
                               epsilon: float = 1e-5,
                               indices: Optional[Sequence[Tuple[int, ...]]] = None) -> np.ndarray:
    """
    Central finite differences (f(x + e) - f(x - e)) / 2e

    Args:
        fun: Scalar function of an array
        x: Evaluation point
        epsilon: Step size
        indices: Coordinates to probe (all when None); others stay 0

    Returns:
        Numerical gradient with the shape of x
    """
    x = np.array(x, dtype=np.float64)
    gradient = np.zeros_like(x)
    coordinates = indices if indices is not None else list(np.ndindex(*x.shape))
    for index in coordinates:
        original = x[index]
        x[index] = original + epsilon
        upper = fun(x)
        x[index] = original - epsilon
        lower = fun(x)
        x[index] = original
        gradient[index] = (upper - lower) / (2.0 * epsilon)
    return gradient


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / max(max |a|, max |n|, floor)"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
