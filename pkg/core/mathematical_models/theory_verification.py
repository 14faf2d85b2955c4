"""
Theory Verification Models
Numerical checks of the metric, triangle-bound, true-risk-bound, finiteness
and inter-DER inequality properties of divergence-based empirical risks
"""

import math
import logging
from dataclasses import dataclass, asdict
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from .divergence import (
    DivergenceModels, DivergenceSpec, DivergenceKind, MetricTransform, LOG2,
    STANDARD_DIVERGENCES, divergence_rows, sample_categorical, validate_metric_pair,
)
from .empirical_risk import (
    DivergenceRiskModels, RiskObjective, WeightedBatch, mixture_weights, default_beta, one_hot,
)
from ..datasets.ssl_dataset import corrupt_labels

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-9
TRIANGLE_TOLERANCE = 1e-9
BOUND_TOLERANCE = 1e-6
INEQUALITY_TOLERANCE = 1e-9
CLOSED_FORM_TOLERANCE = 1e-10
SCALAR_CONDITION_TOLERANCE = 1e-12
RENYI_ALPHA_GRID = (0.3, 0.6, 0.9, 1.5, 2.0)
RENYI_LIMIT_STEP = 1e-5
RENYI_LIMIT_TOLERANCE = 1e-3

# Metric pairs exercised by the triangle and true-risk bounds
METRIC_DIVERGENCE_PAIRS = [
    (DivergenceSpec.tv(), MetricTransform.IDENTITY),
    (DivergenceSpec.jensen_shannon(), MetricTransform.SQRT),
    (DivergenceSpec.le_cam(), MetricTransform.SQRT),
]


@dataclass
class TheoryInstance:
    """
    Labeled + unlabeled rows with true labels, pseudo targets and beta-mixture weights

    Rows 0..n-1 are labeled (pseudo target = true label); rows n..n+m-1 are
    unlabeled with pseudo targets from a selection rule or injected noise.
    """
    k: int
    n: int
    m: int
    beta: float
    true_labels: np.ndarray
    pseudo_targets: np.ndarray

    def __post_init__(self):
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        self.pseudo_targets = np.asarray(self.pseudo_targets, dtype=np.float64)
        rows = self.n + self.m
        if self.true_labels.shape != (rows,):
            raise ValueError(f"Expected {rows} true labels, got {self.true_labels.shape}")
        if self.pseudo_targets.shape != (rows, self.k):
            raise ValueError(f"Expected pseudo targets of shape {(rows, self.k)}, got {self.pseudo_targets.shape}")
        if not np.array_equal(self.pseudo_targets[:self.n], one_hot(self.true_labels[:self.n], self.k)):
            raise ValueError("Labeled rows must carry their true labels")

    @property
    def weights(self) -> np.ndarray:
        return mixture_weights(self.n, self.m, self.beta)

    @property
    def true_targets(self) -> np.ndarray:
        return one_hot(self.true_labels, self.k)

    def joint(self, conditionals: np.ndarray) -> np.ndarray:
        """Flattened beta-mixture joint over (row, class)"""
        return (self.weights[:, None] * conditionals).ravel()


def make_theory_instance(rng: np.random.Generator, k: int, n: int, m: int,
                         noise_rate: float = 0.0, beta: Optional[float] = None) -> TheoryInstance:
    """
    Random instance: uniform true labels, pseudo-labels = true labels with injected noise

    Args:
        rng: Random generator
        k: Number of classes
        n: Labeled rows
        m: Unlabeled rows
        noise_rate: Probability of flipping each unlabeled pseudo-label
        beta: Mixture weight (defaults to n / (n + m))

    Returns:
        TheoryInstance
    """
    true_labels = rng.integers(0, k, size=n + m)
    pseudo_labels = true_labels.copy()
    pseudo_labels[n:] = corrupt_labels(true_labels[n:], noise_rate, k, rng)
    return TheoryInstance(
        k=k, n=n, m=m,
        beta=default_beta(n, m) if beta is None else beta,
        true_labels=true_labels,
        pseudo_targets=one_hot(pseudo_labels, k),
    )


@dataclass
class TheoryBudgets:
    """Trial counts and problem sizes for the verification suite"""
    trials: int = 1000
    theorem_instances: int = 5
    corollary_resamples: int = 20
    optimizer_steps: int = 300
    k: int = 5
    n: int = 8
    m: int = 32
    batch_size: int = 32
    inequality_k: int = 10
    noise_rates: Tuple[float, ...] = (0.0, 0.2)
    seed: int = 0

    def __post_init__(self):
        for name in ('trials', 'theorem_instances', 'corollary_resamples', 'optimizer_steps'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.k < 2 or self.inequality_k < 2:
            raise ValueError("Theory checks need at least two classes")
        if self.n < 1 or self.m < 1 or self.batch_size < 1:
            raise ValueError("Theory checks need at least one row of each kind")


@dataclass
class MetricAxiomReport:
    spec_label: str
    transform: str
    trials: int
    max_symmetry_gap: float
    min_triangle_slack: float
    violations: int

    def to_dict(self) -> Dict:
        return {'check': 'metric_axioms', **asdict(self)}


@dataclass
class BoundReport:
    """G(FSL) <= G(middle) + G(SSL) at one minimizer"""
    spec_label: str
    transform: str
    noise_rate: float
    fsl_risk: float
    middle_term: float
    ssl_risk: float
    lhs: float
    rhs: float
    slack: float
    holds: bool
    converged: bool

    @property
    def violations(self) -> int:
        return 0 if self.holds else 1

    def to_dict(self) -> Dict:
        return {'check': 'theorem1', **asdict(self), 'violations': self.violations}


@dataclass
class Corollary1Report:
    spec_label: str
    transform: str
    noise_rate: float
    resamples: int
    mean_fsl: float
    mean_middle: float
    mean_ssl: float
    standard_error: float
    bound_holds: bool
    scalar_condition_holds: bool
    scalar_max_excess: float
    unconverged: int

    @property
    def violations(self) -> int:
        return int(not self.bound_holds) + int(not self.scalar_condition_holds)

    def to_dict(self) -> Dict:
        return {'check': 'corollary1', **asdict(self), 'violations': self.violations}


@dataclass
class Proposition1Report:
    trials: int
    finite_counts: Dict[str, int]
    negative_counts: Dict[str, int]
    counterexamples_infinite: Dict[str, bool]
    violations: int

    def to_dict(self) -> Dict:
        return {'check': 'proposition1', **asdict(self)}


@dataclass
class InequalityReport:
    trials: int
    violations_by_inequality: Dict[str, int]
    worst_excess: Dict[str, float]

    @property
    def violations(self) -> int:
        return int(sum(self.violations_by_inequality.values()))

    def to_dict(self) -> Dict:
        return {'check': 'der_inequalities', **asdict(self), 'violations': self.violations}


@dataclass
class ClosedFormReport:
    trials: int
    max_abs_difference: Dict[str, float]
    violations: int

    def to_dict(self) -> Dict:
        return {'check': 'closed_forms', **asdict(self)}


class TheoryVerificationModels:
    """
    Property checks for divergence-based risks

    Metric:        G(D(p||q)) symmetric and satisfies the triangle inequality
    Triangle bound: G(R_FSL(theta)) <= G(D(P_t || P_hat)) + G(R_SSL(theta))
    True-risk bound: R_FSL <= 2 D(P_t || P_hat) + 2 R_SSL when 2G(t/2) <= G(2t)
    """

    def __init__(self):
        self.divergence_models = DivergenceModels()
        self.risk_models = DivergenceRiskModels()

    def check_metric_axioms(self, spec: DivergenceSpec, g: MetricTransform, trials: int, k: int,
                            rng: np.random.Generator,
                            triples: Optional[np.ndarray] = None) -> MetricAxiomReport:
        """
        Symmetry and triangle inequality of G(D) on random distribution triples

        Args:
            spec: Divergence under test
            g: Metric transform
            trials: Number of random triples
            k: Number of classes
            rng: Random generator
            triples: Explicit triples of shape (t, 3, k) replacing the random draw

        Returns:
            MetricAxiomReport
        """
        if triples is None:
            if trials < 1:
                raise ValueError("Metric check needs at least one trial")
            triples = sample_categorical(rng, k, size=3 * trials).reshape(trials, 3, k)
        triples = np.asarray(triples, dtype=np.float64)
        p1, p2, p3 = triples[:, 0], triples[:, 1], triples[:, 2]

        def metric(a, b):
            values = np.maximum(divergence_rows(spec, a, b), 0.0)
            return np.sqrt(values) if MetricTransform(g) is MetricTransform.SQRT else values

        d12, d21 = metric(p1, p2), metric(p2, p1)
        d13, d23 = metric(p1, p3), metric(p2, p3)
        symmetry_gap = np.abs(d12 - d21)
        triangle_slack = d12 + d23 - d13
        violations = int(np.sum(symmetry_gap > SYMMETRY_TOLERANCE) + np.sum(triangle_slack < -TRIANGLE_TOLERANCE))

        report = MetricAxiomReport(
            spec_label=spec.label,
            transform=MetricTransform(g).value,
            trials=int(triples.shape[0]),
            max_symmetry_gap=float(np.max(symmetry_gap)),
            min_triangle_slack=float(np.min(triangle_slack)),
            violations=violations,
        )
        logger.debug(f"Metric axioms {spec.label}/{report.transform}: {violations} violations")
        return report

    def minimize_free_logits(self, instance: TheoryInstance, spec: DivergenceSpec,
                             steps: int) -> Tuple[np.ndarray, bool]:
        """
        theta* = argmin over per-row logits of the SSL DER against the pseudo joint

        Returns:
            (best logits of shape (n + m, k), convergence flag)
        """
        objective = RiskObjective(spec)
        weights = instance.weights
        shape = (instance.n + instance.m, instance.k)

        def fun(flat: np.ndarray):
            value, gradient = objective.value_and_gradient(flat.reshape(shape), instance.pseudo_targets, weights)
            return value, gradient.ravel()

        result = minimize(fun, np.zeros(shape[0] * shape[1]), jac=True, method='L-BFGS-B',
                          options={'maxiter': max(int(steps), 1)})
        if not result.success:
            logger.debug(f"Free-logit minimization for {spec.label} stopped: {result.message}")
        return result.x.reshape(shape), bool(result.success)

    def _bound_terms(self, instance: TheoryInstance, spec: DivergenceSpec,
                     logits: np.ndarray) -> Tuple[float, float, float]:
        true_joint = instance.joint(instance.true_targets)
        pseudo_joint = instance.joint(instance.pseudo_targets)
        model_joint = instance.joint(softmax(logits, axis=1))
        fsl = self.divergence_models.divergence(spec, true_joint, model_joint)
        middle = self.divergence_models.divergence(spec, true_joint, pseudo_joint)
        ssl = self.divergence_models.divergence(spec, pseudo_joint, model_joint)
        return fsl, middle, ssl

    def check_theorem1(self, instance: TheoryInstance, spec: DivergenceSpec, g: MetricTransform,
                       steps: int = 300, noise_rate: float = float('nan')) -> BoundReport:
        """
        Triangle bound at the free-logit minimizer of the SSL risk

        G(R_FSL(theta*)) <= G(D(P_t || P_hat)) + G(R_SSL(theta*))

        Args:
            instance: Theory instance
            spec: Divergence (must form a metric pair with g)
            g: Metric transform
            steps: Optimizer iteration budget
            noise_rate: Noise level of the instance, for reporting

        Returns:
            BoundReport; evaluated at the best iterate even without convergence
        """
        validate_metric_pair(spec, g)
        logits, converged = self.minimize_free_logits(instance, spec, steps)
        fsl, middle, ssl = self._bound_terms(instance, spec, logits)

        G = self.divergence_models.apply_metric_transform
        lhs = G(g, fsl)
        rhs = G(g, middle) + G(g, ssl)
        slack = rhs - lhs
        return BoundReport(
            spec_label=spec.label,
            transform=MetricTransform(g).value,
            noise_rate=noise_rate,
            fsl_risk=fsl,
            middle_term=middle,
            ssl_risk=ssl,
            lhs=lhs,
            rhs=rhs,
            slack=slack,
            holds=bool(slack >= -BOUND_TOLERANCE),
            converged=converged,
        )

    def check_scalar_condition(self, g: MetricTransform,
                               grid: Optional[np.ndarray] = None) -> Tuple[bool, float]:
        """
        2 G(t/2) <= G(2t) on a grid over (0, 4]

        Returns:
            (holds, largest excess 2G(t/2) - G(2t))
        """
        if grid is None:
            grid = np.linspace(0.0, 4.0, 401)[1:]
        t = np.asarray(grid, dtype=np.float64)
        if MetricTransform(g) is MetricTransform.SQRT:
            excess = 2.0 * np.sqrt(t / 2.0) - np.sqrt(2.0 * t)
        else:
            excess = 2.0 * (t / 2.0) - 2.0 * t
        worst = float(np.max(excess))
        return worst <= SCALAR_CONDITION_TOLERANCE, worst

    def check_corollary1(self, spec: DivergenceSpec, g: MetricTransform, resamples: int,
                         rng: np.random.Generator, k: int = 5, n: int = 8, m: int = 32,
                         noise_rate: float = 0.2, steps: int = 300) -> Corollary1Report:
        """
        Monte Carlo true-risk bound over resampled instances

        mean R_FSL <= 2 mean D(P_t || P_hat) + 2 mean R_SSL + 3 standard errors

        Args:
            spec: Divergence (metric pair with g)
            g: Metric transform
            resamples: Number of resampled instances
            rng: Random generator
            k, n, m: Instance sizes
            noise_rate: Pseudo-label noise of each instance
            steps: Optimizer budget per instance

        Returns:
            Corollary1Report, including the scalar 2G(t/2) <= G(2t) check
        """
        validate_metric_pair(spec, g)
        scalar_holds, scalar_excess = self.check_scalar_condition(g)

        fsl, middle, ssl = np.zeros(resamples), np.zeros(resamples), np.zeros(resamples)
        unconverged = 0
        for r in range(resamples):
            instance = make_theory_instance(rng, k, n, m, noise_rate)
            logits, converged = self.minimize_free_logits(instance, spec, steps)
            unconverged += int(not converged)
            fsl[r], middle[r], ssl[r] = self._bound_terms(instance, spec, logits)

        if resamples:
            gap = 2.0 * middle + 2.0 * ssl - fsl
            standard_error = float(np.std(gap, ddof=1) / math.sqrt(resamples)) if resamples > 1 else 0.0
            bound_holds = bool(fsl.mean() <= 2.0 * middle.mean() + 2.0 * ssl.mean() + 3.0 * standard_error + BOUND_TOLERANCE)
        else:
            standard_error, bound_holds = 0.0, True

        return Corollary1Report(
            spec_label=spec.label,
            transform=MetricTransform(g).value,
            noise_rate=noise_rate,
            resamples=resamples,
            mean_fsl=float(fsl.mean()) if resamples else 0.0,
            mean_middle=float(middle.mean()) if resamples else 0.0,
            mean_ssl=float(ssl.mean()) if resamples else 0.0,
            standard_error=standard_error,
            bound_holds=bound_holds,
            scalar_condition_holds=scalar_holds,
            scalar_max_excess=scalar_excess,
            unconverged=unconverged,
        )

    def _random_hard_batch(self, rng: np.random.Generator, k: int, n: int) -> WeightedBatch:
        predictions = sample_categorical(rng, k, size=n)
        labels = rng.integers(0, k, size=n)
        return WeightedBatch.uniform(predictions, labels)

    def check_proposition1(self, specs: Optional[Sequence[DivergenceSpec]], trials: int,
                           rng: np.random.Generator, k: int = 10, n: int = 32) -> Proposition1Report:
        """
        Finiteness of hard-label DERs whose generators have f(0) < inf

        Every batch has strictly positive predictions. The reverse-KL and
        symmetric-KL generators (f(0) = inf) must give the Infinite sentinel.

        Returns:
            Proposition1Report
        """
        if specs is None:
            specs = [spec for spec in STANDARD_DIVERGENCES.values() if spec.is_f_divergence]
        counterexamples = [DivergenceSpec(DivergenceKind.REVERSE_KL), DivergenceSpec(DivergenceKind.SYMMETRIC_KL)]

        finite_counts = {spec.label: 0 for spec in specs}
        negative_counts = {spec.label: 0 for spec in specs}
        counterexamples_infinite = {spec.label: True for spec in counterexamples}
        violations = 0

        for _ in range(trials):
            batch = self._random_hard_batch(rng, k, n)
            for spec in specs:
                value = self.risk_models.der_sl(spec, batch)
                if math.isfinite(value):
                    finite_counts[spec.label] += 1
                elif math.isfinite(spec.generator_at_zero):
                    violations += 1
                if value < 0:
                    negative_counts[spec.label] += 1
                    violations += 1
            for spec in counterexamples:
                if math.isfinite(self.risk_models.der_sl(spec, batch)):
                    counterexamples_infinite[spec.label] = False
                    violations += 1

        return Proposition1Report(trials, finite_counts, negative_counts, counterexamples_infinite, violations)

    def evaluate_der_chain(self, batch: WeightedBatch) -> Dict[str, float]:
        """DERs entering the inequality chain for one hard-label batch"""
        der = self.risk_models.der_sl
        values = {
            'kl': der(DivergenceSpec.kl(), batch),
            'tv': der(DivergenceSpec.tv(), batch),
            'chi2': der(DivergenceSpec.chi_squared(), batch),
            'js': der(DivergenceSpec.jensen_shannon(), batch),
            'lecam': der(DivergenceSpec.le_cam(), batch),
            'renyi_below_1': der(DivergenceSpec.renyi(1.0 - RENYI_LIMIT_STEP), batch),
            'renyi_above_1': der(DivergenceSpec.renyi(1.0 + RENYI_LIMIT_STEP), batch),
        }
        for alpha in RENYI_ALPHA_GRID:
            values[f'renyi_{alpha:g}'] = der(DivergenceSpec.renyi(alpha), batch)
        return values

    def inequality_excess(self, values: Dict[str, float]) -> Dict[str, float]:
        """Amount by which each inequality fails (<= 0 when it holds)"""
        renyi = [values[f'renyi_{alpha:g}'] for alpha in RENYI_ALPHA_GRID]
        return {
            'pinsker': 2.0 * values['tv'] ** 2 - values['kl'],
            'kl_le_chi2': values['kl'] - values['chi2'],
            'js_le_lecam': values['js'] - 2.0 * LOG2 * values['lecam'],
            'tv_bounded': values['tv'] - 1.0,
            'js_bounded': values['js'] - 2.0 * LOG2,
            'lecam_bounded': values['lecam'] - 1.0,
            'renyi_monotone': float(max(a - b for a, b in zip(renyi[:-1], renyi[1:]))),
            'renyi_limit': max(abs(values['renyi_below_1'] - values['kl']),
                               abs(values['renyi_above_1'] - values['kl'])) - RENYI_LIMIT_TOLERANCE,
        }

    def check_der_inequalities(self, trials: int, rng: np.random.Generator, k: int = 10,
                               n: int = 32) -> InequalityReport:
        """
        Pinsker, KL <= Chi2, JS <= 2 log 2 LeCam, boundedness, Renyi monotonicity
        in alpha and the alpha -> 1 limit on random hard-label batches

        Returns:
            InequalityReport with per-inequality violation counts
        """
        counts: Dict[str, int] = {}
        worst: Dict[str, float] = {}
        for _ in range(trials):
            excess = self.inequality_excess(self.evaluate_der_chain(self._random_hard_batch(rng, k, n)))
            for name, value in excess.items():
                counts[name] = counts.get(name, 0) + int(value > INEQUALITY_TOLERANCE)
                worst[name] = max(worst.get(name, -math.inf), float(value))
        return InequalityReport(trials, counts, worst)

    def check_closed_forms(self, specs: Optional[Sequence[DivergenceSpec]], trials: int,
                           rng: np.random.Generator, k: int = 10, n: int = 32) -> ClosedFormReport:
        """
        Closed-form hard-label DERs against the generic joint-divergence path

        A mismatch counts when |closed - generic| > 1e-10 * max(1, |generic|).
        """
        if specs is None:
            specs = list(STANDARD_DIVERGENCES.values())
        max_difference = {spec.label: 0.0 for spec in specs}
        violations = 0
        for _ in range(trials):
            batch = self._random_hard_batch(rng, k, n)
            true_probs = batch.true_class_probabilities
            for spec in specs:
                generic = self.risk_models.der_sl(spec, batch)
                closed = self.risk_models.der_closed_form(spec, true_probs)
                difference = abs(closed - generic)
                max_difference[spec.label] = max(max_difference[spec.label], difference)
                if difference > CLOSED_FORM_TOLERANCE * max(1.0, abs(generic)):
                    violations += 1
        return ClosedFormReport(trials, max_difference, violations)


if __name__ == "__main__":
    models = TheoryVerificationModels()
    rng = np.random.default_rng(0)

    print("Theory Verification Test")
    print("=" * 40)
    for spec, g in METRIC_DIVERGENCE_PAIRS:
        report = models.check_metric_axioms(spec, g, 200, 5, rng)
        print(f"{spec.label:>6}/{g.value:<8} metric violations: {report.violations}")
        bound = models.check_theorem1(make_theory_instance(rng, 5, 8, 32, 0.2), spec, g)
        print(f"{'':>15} triangle bound slack: {bound.slack:.6f}")
