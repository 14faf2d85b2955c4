#!/usr/bin/env python3
"""
Comprehensive Test Suite for the Divergence Risk Framework
Tests divergences, D-entropies, empirical risks, analytic gradients and
the theory verification checks
"""

import math
import numpy as np
import sys
import os
import unittest
import warnings
from scipy.special import softmax
warnings.filterwarnings('ignore')

# Add paths to modules
sys.path.append(os.path.dirname(__file__))

from core.mathematical_models.divergence import (
    DivergenceModels, DivergenceSpec, DivergenceKind, CategoricalDistribution, MetricTransform,
    STANDARD_DIVERGENCES, GENERATOR_AT_ZERO, LOG2, is_infinite, sample_categorical, validate_metric_pair,
)
from core.mathematical_models.empirical_risk import (
    DivergenceRiskModels, LabelAssignment, RegularizationWeights, RiskObjective, WeightedBatch,
    default_beta, finite_difference_gradient, joint_risk, mixture_weights, relative_error,
)
from core.mathematical_models.theory_verification import (
    TheoryBudgets, TheoryVerificationModels, METRIC_DIVERGENCE_PAIRS, make_theory_instance,
)
from core.mathematical_models import get_model, list_available_models


class TestDivergenceSpec(unittest.TestCase):
    """Test divergence selection and parameter validation"""

    def test_power_requires_p_above_one(self):
        """Power divergence rejects p <= 1"""
        with self.assertRaises(ValueError):
            DivergenceSpec.power(1.0)
        with self.assertRaises(ValueError):
            DivergenceSpec(DivergenceKind.POWER)
        self.assertEqual(DivergenceSpec.power(1.2).p, 1.2)

    def test_renyi_alpha_validation(self):
        """Renyi rejects alpha = 1 and negative orders"""
        with self.assertRaises(ValueError):
            DivergenceSpec.renyi(1.0)
        with self.assertRaises(ValueError):
            DivergenceSpec.renyi(-0.5)
        self.assertEqual(DivergenceSpec.renyi(0.6).alpha, 0.6)

    def test_parameters_only_on_their_family(self):
        """p and alpha are rejected on other families"""
        with self.assertRaises(ValueError):
            DivergenceSpec(DivergenceKind.KL, p=2.0)
        with self.assertRaises(ValueError):
            DivergenceSpec(DivergenceKind.TV, alpha=0.5)

    def test_from_name(self):
        """Short names resolve case-insensitively"""
        self.assertEqual(DivergenceSpec.from_name('JS'), DivergenceSpec.jensen_shannon())
        self.assertEqual(DivergenceSpec.from_name('power', p=1.5), DivergenceSpec.power(1.5))
        self.assertEqual(DivergenceSpec.from_name('kl', alpha=0.3), DivergenceSpec.kl())
        with self.assertRaises(ValueError):
            DivergenceSpec.from_name('hellinger')

    def test_labels_and_order(self):
        """Display labels and canonical row order"""
        self.assertEqual(DivergenceSpec.power(1.2).label, "Power(p=1.2)")
        self.assertEqual(DivergenceSpec.renyi(0.6).label, "Renyi(alpha=0.6)")
        keys = [spec.order_key for spec in STANDARD_DIVERGENCES.values()]
        self.assertEqual(keys, sorted(keys))

    def test_positive_prediction_requirement(self):
        """Families unbounded at a zero prediction"""
        self.assertTrue(DivergenceSpec.kl().requires_positive_predictions)
        self.assertTrue(DivergenceSpec.chi_squared().requires_positive_predictions)
        self.assertTrue(DivergenceSpec.renyi(2.0).requires_positive_predictions)
        self.assertFalse(DivergenceSpec.tv().requires_positive_predictions)
        self.assertFalse(DivergenceSpec.jensen_shannon().requires_positive_predictions)
        self.assertFalse(DivergenceSpec.renyi(0.5).requires_positive_predictions)


class TestCategoricalDistribution(unittest.TestCase):
    """Test probability vector validation"""

    def test_valid_distribution(self):
        """Valid vectors are accepted and frozen"""
        dist = CategoricalDistribution([0.2, 0.8])
        self.assertEqual(dist.k, 2)
        with self.assertRaises(ValueError):
            dist.probs[0] = 0.5

    def test_invalid_distributions(self):
        """Bad sums, negative entries and short vectors raise"""
        with self.assertRaises(ValueError):
            CategoricalDistribution([0.5, 0.6])
        with self.assertRaises(ValueError):
            CategoricalDistribution([1.5, -0.5])
        with self.assertRaises(ValueError):
            CategoricalDistribution([1.0])

    def test_constructors(self):
        """Uniform and one-hot constructors"""
        np.testing.assert_allclose(CategoricalDistribution.uniform(4).probs, np.full(4, 0.25))
        np.testing.assert_array_equal(CategoricalDistribution.one_hot(1, 3).probs, [0.0, 1.0, 0.0])
        with self.assertRaises(ValueError):
            CategoricalDistribution.one_hot(3, 3)

    def test_simplex_sampling(self):
        """Sampled rows lie on the simplex"""
        rows = sample_categorical(np.random.default_rng(0), 6, size=50)
        self.assertEqual(rows.shape, (50, 6))
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
        self.assertTrue(np.all(rows > 0))


class TestDivergenceModels(unittest.TestCase):
    """Test divergence and D-entropy evaluation"""

    def setUp(self):
        self.models = DivergenceModels()
        self.rng = np.random.default_rng(7)

    def test_kl_example(self):
        """KL((0.5, 0.5) || (0.25, 0.75))"""
        value = self.models.divergence(DivergenceSpec.kl(), [0.5, 0.5], [0.25, 0.75])
        self.assertAlmostEqual(value, 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0), places=12)
        self.assertAlmostEqual(value, 0.14384, places=5)

    def test_tv_one_hot_against_uniform(self):
        """TV((1, 0) || uniform) = 0.5"""
        value = self.models.divergence(DivergenceSpec.tv(), [1.0, 0.0], [0.5, 0.5])
        self.assertAlmostEqual(value, 0.5, places=12)

    def test_renyi_example(self):
        """Renyi alpha = 0.5 of (1, 0) || (0.25, 0.75) is 2 log 2"""
        value = self.models.renyi_divergence(0.5, [1.0, 0.0], [0.25, 0.75])
        self.assertAlmostEqual(value, 2.0 * LOG2, places=12)

    def test_identity_of_indiscernibles(self):
        """D(p || p) = 0 for every family"""
        p = sample_categorical(self.rng, 5)
        for spec in STANDARD_DIVERGENCES.values():
            self.assertAlmostEqual(self.models.divergence(spec, p, p), 0.0, places=12, msg=spec.label)

    def test_non_negativity(self):
        """Divergences of random pairs are non-negative"""
        for _ in range(20):
            p, q = sample_categorical(self.rng, 4), sample_categorical(self.rng, 4)
            for spec in STANDARD_DIVERGENCES.values():
                self.assertGreaterEqual(self.models.divergence(spec, p, q), 0.0)

    def test_generator_values(self):
        """f(1) = 0 and the tabulated right limits at 0"""
        for spec in STANDARD_DIVERGENCES.values():
            if not spec.is_f_divergence:
                continue
            self.assertEqual(self.models.generator_value(spec, 1.0), 0.0)
            self.assertAlmostEqual(self.models.generator_value(spec, 0.0), GENERATOR_AT_ZERO[spec.kind],
                                   places=12, msg=spec.label)
        self.assertAlmostEqual(self.models.generator_value(DivergenceSpec.jensen_shannon(), 0.0), LOG2, places=12)
        with self.assertRaises(ValueError):
            self.models.generator_value(DivergenceSpec.renyi(0.5), 1.0)
        with self.assertRaises(ValueError):
            self.models.generator_value(DivergenceSpec.kl(), -0.1)

    def test_support_mismatch(self):
        """Zero reference mass under positive mass"""
        p, q = [0.5, 0.5], [1.0, 0.0]
        self.assertTrue(is_infinite(self.models.divergence(DivergenceSpec.kl(), p, q)))
        self.assertTrue(is_infinite(self.models.divergence(DivergenceSpec.renyi(2.0), p, q)))
        self.assertAlmostEqual(self.models.divergence(DivergenceSpec.tv(), p, q), 0.5, places=12)
        self.assertTrue(math.isfinite(self.models.divergence(DivergenceSpec.renyi(0.5), p, q)))

    def test_disjoint_supports_renyi_below_one(self):
        """Disjoint supports are unbounded for every order"""
        value = self.models.renyi_divergence(0.5, [1.0, 0.0], [0.0, 1.0])
        self.assertTrue(is_infinite(value))

    def test_dimension_mismatch(self):
        """Different k raises"""
        with self.assertRaises(ValueError):
            self.models.divergence(DivergenceSpec.kl(), [0.5, 0.5], [0.2, 0.3, 0.5])

    def test_d_entropy_examples(self):
        """D-entropy of a one-hot and of the uniform distribution"""
        self.assertAlmostEqual(self.models.d_entropy(DivergenceSpec.kl(), [1.0, 0.0]), -LOG2, places=12)
        self.assertAlmostEqual(self.models.d_entropy(DivergenceSpec.tv(), [1.0, 0.0]), -0.5, places=12)
        for spec in STANDARD_DIVERGENCES.values():
            self.assertAlmostEqual(self.models.d_entropy(spec, CategoricalDistribution.uniform(5)), 0.0, places=12)

    def test_d_entropy_closed_forms(self):
        """Closed-form D-entropies agree with -D(p || uniform)"""
        for _ in range(20):
            p = sample_categorical(self.rng, 6)
            for spec in STANDARD_DIVERGENCES.values():
                self.assertAlmostEqual(self.models.d_entropy_closed_form(spec, p),
                                       self.models.d_entropy(spec, p), places=9, msg=spec.label)

    def test_metric_transform(self):
        """G = sqrt and G = identity"""
        self.assertEqual(self.models.apply_metric_transform(MetricTransform.SQRT, 0.25), 0.5)
        self.assertEqual(self.models.apply_metric_transform(MetricTransform.IDENTITY, 0.25), 0.25)
        with self.assertRaises(ValueError):
            self.models.apply_metric_transform(MetricTransform.SQRT, -1.0)

    def test_metric_pairs(self):
        """Only TV/identity, JS/sqrt and LeCam/sqrt are metric pairs"""
        for spec, g in METRIC_DIVERGENCE_PAIRS:
            validate_metric_pair(spec, g)
        with self.assertRaises(ValueError):
            validate_metric_pair(DivergenceSpec.kl(), MetricTransform.SQRT)
        with self.assertRaises(ValueError):
            validate_metric_pair(DivergenceSpec.tv(), MetricTransform.SQRT)


class TestEmpiricalRisk(unittest.TestCase):
    """Test divergence-based empirical risks"""

    def setUp(self):
        self.models = DivergenceRiskModels()
        self.rng = np.random.default_rng(11)

    def _hard_batch(self, true_probs):
        """Two-class batch whose true class 0 has the given probabilities"""
        P = np.asarray(true_probs, dtype=np.float64)
        return WeightedBatch.uniform(np.column_stack([P, 1.0 - P]), np.zeros(P.size, dtype=int))

    def test_der_sl_examples(self):
        """Hard-label DER values"""
        kl = self.models.der_sl(DivergenceSpec.kl(), self._hard_batch([0.5, 0.25]))
        self.assertAlmostEqual(kl, 0.5 * (-math.log(0.5) - math.log(0.25)), places=12)
        self.assertAlmostEqual(kl, 1.0397, places=4)

        perfect = WeightedBatch.uniform([[1.0, 0.0], [0.0, 1.0]], [0, 1])
        self.assertEqual(self.models.der_sl(DivergenceSpec.tv(), perfect), 0.0)

        chi2 = self.models.der_sl(DivergenceSpec.chi_squared(), self._hard_batch([0.5]))
        self.assertAlmostEqual(chi2, 1.0, places=12)

        renyi = self.models.der_sl(DivergenceSpec.renyi(0.5), self._hard_batch([0.25]))
        self.assertAlmostEqual(renyi, 2.0 * LOG2, places=12)

    def test_der_sl_preconditions(self):
        """Soft targets and non-uniform weights are rejected"""
        with self.assertRaises(ValueError):
            self.models.der_sl(DivergenceSpec.kl(), WeightedBatch.uniform([[0.5, 0.5]], [[0.3, 0.7]]))
        batch = WeightedBatch([[0.5, 0.5], [0.4, 0.6]], [0, 1], [0.3, 0.7])
        with self.assertRaises(ValueError):
            self.models.der_sl(DivergenceSpec.kl(), batch)

    def test_zero_prediction(self):
        """A zero true-class probability is unbounded for KL but not for TV"""
        batch = WeightedBatch.uniform([[0.0, 1.0]], [0])
        self.assertTrue(is_infinite(self.models.der_sl(DivergenceSpec.kl(), batch)))
        self.assertAlmostEqual(self.models.der_sl(DivergenceSpec.tv(), batch), 1.0, places=12)

    def test_batch_validation(self):
        """Weights must sum to one and shapes must agree"""
        with self.assertRaises(ValueError):
            WeightedBatch([[0.5, 0.5]], [0], [0.5])
        with self.assertRaises(ValueError):
            WeightedBatch.uniform([[0.5, 0.5]], [0, 1])
        with self.assertRaises(ValueError):
            WeightedBatch.uniform([[0.5, 0.6]], [0])

    def test_label_assignments(self):
        """Hard and soft label assignments"""
        self.assertTrue(LabelAssignment.hard_label(2).is_hard)
        np.testing.assert_array_equal(LabelAssignment.hard_label(1).to_distribution(3), [0.0, 1.0, 0.0])
        soft = LabelAssignment.soft_label([0.2, 0.8])
        self.assertFalse(soft.is_hard)
        with self.assertRaises(ValueError):
            soft.to_distribution(3)
        with self.assertRaises(ValueError):
            LabelAssignment()
        batch = WeightedBatch.uniform([[0.5, 0.5], [0.3, 0.7]], [LabelAssignment.hard_label(0), soft])
        np.testing.assert_allclose(batch.targets, [[1.0, 0.0], [0.2, 0.8]])

    def test_beta_and_weights(self):
        """Default beta and mixture weights"""
        self.assertAlmostEqual(default_beta(104, 416), 0.2)
        self.assertEqual(default_beta(10, 0), 1.0)
        weights = mixture_weights(2, 4, 0.5)
        np.testing.assert_allclose(weights, [0.25, 0.25, 0.125, 0.125, 0.125, 0.125])
        with self.assertRaises(ValueError):
            mixture_weights(2, 4, 1.5)
        with self.assertRaises(ValueError):
            mixture_weights(2, 0, 0.5)

    def test_der_ssl_examples(self):
        """beta = 1 reduces to SL; KL and Renyi mixtures"""
        labeled = self._hard_batch([0.5])
        pseudo = self._hard_batch([0.25])
        for spec in STANDARD_DIVERGENCES.values():
            self.assertAlmostEqual(self.models.der_ssl(spec, labeled, pseudo, 1.0),
                                   self.models.der_sl(spec, labeled), places=12)

        kl = self.models.der_ssl(DivergenceSpec.kl(), labeled, pseudo, 0.5)
        self.assertAlmostEqual(kl, 0.5 * -math.log(0.5) + 0.5 * -math.log(0.25), places=12)

        renyi = self.models.der_ssl(DivergenceSpec.renyi(0.6), labeled, pseudo, 0.5)
        expected = math.log(0.5 * 0.5 ** 0.4 + 0.5 * 0.25 ** 0.4) / -0.4
        self.assertAlmostEqual(renyi, expected, places=12)

    def test_beta_zero_ignores_labeled(self):
        """beta = 0 evaluates the pseudo rows alone"""
        labeled = self._hard_batch([0.1])
        pseudo = self._hard_batch([0.8, 0.6])
        spec = DivergenceSpec.chi_squared()
        self.assertAlmostEqual(self.models.der_ssl(spec, labeled, pseudo, 0.0),
                               self.models.der_sl(spec, pseudo), places=12)

    def test_joint_decomposition(self):
        """f-divergence SSL risks decompose; Renyi is bounded by the combination"""
        for _ in range(10):
            labeled = WeightedBatch.uniform(sample_categorical(self.rng, 4, size=5), self.rng.integers(0, 4, size=5))
            pseudo = WeightedBatch.uniform(sample_categorical(self.rng, 4, size=7), sample_categorical(self.rng, 4, size=7))
            beta = float(self.rng.uniform(0.05, 0.95))
            for spec in STANDARD_DIVERGENCES.values():
                joint = self.models.der_ssl(spec, labeled, pseudo, beta)
                combined = self.models.convex_combination_bound(spec, labeled, pseudo, beta)
                if spec.is_f_divergence:
                    self.assertAlmostEqual(joint, combined, delta=1e-10, msg=spec.label)
                else:
                    self.assertLessEqual(joint, combined + 1e-12)

    def test_zero_risk_at_targets(self):
        """Predictions equal to the targets give zero risk"""
        targets = sample_categorical(self.rng, 5, size=8)
        weights = np.full(8, 1.0 / 8)
        for spec in STANDARD_DIVERGENCES.values():
            self.assertAlmostEqual(joint_risk(spec, targets, targets, weights), 0.0, delta=1e-12, msg=spec.label)

    def test_closed_forms_against_generic(self):
        """Tabulated hard-label closed forms on random batches"""
        report = TheoryVerificationModels().check_closed_forms(None, 1000, self.rng)
        self.assertEqual(report.violations, 0)
        self.assertAlmostEqual(self.models.der_closed_form(DivergenceSpec.kl(), [0.5, 0.25]), 1.0397, places=4)
        self.assertAlmostEqual(self.models.der_closed_form(DivergenceSpec.tv(), [0.5]), 0.5, places=12)

    def test_mean_prediction(self):
        """Coordinate-wise average of predictions"""
        np.testing.assert_allclose(self.models.mean_prediction([[1.0, 0.0], [0.0, 1.0]]).probs, [0.5, 0.5])
        np.testing.assert_allclose(self.models.mean_prediction([CategoricalDistribution([0.2, 0.8])]).probs, [0.2, 0.8])
        np.testing.assert_allclose(
            self.models.mean_prediction(np.array([[0.6, 0.4], [0.2, 0.8], [0.7, 0.3]])).probs, [0.5, 0.5])
        with self.assertRaises(ValueError):
            self.models.mean_prediction([])

    def test_regularized_risk(self):
        """Entropy and mean-prediction regularizers"""
        labeled = self._hard_batch([0.7, 0.4])
        spec = DivergenceSpec.kl()
        base = self.models.der_sl(spec, labeled)

        self.assertAlmostEqual(
            self.models.regularized_risk(spec, labeled, [[0.9, 0.1]], RegularizationWeights(0.0, 0.0)), base, places=12)
        uniform = np.full((3, 2), 0.5)
        self.assertAlmostEqual(
            self.models.regularized_risk(spec, labeled, uniform, RegularizationWeights(0.4, 5.0)), base, places=12)
        self.assertAlmostEqual(
            self.models.regularized_risk(spec, labeled, [[1.0, 0.0]], RegularizationWeights(0.4, 0.0)),
            base + 0.4 * -LOG2, places=12)

    def test_regularization_weights_validation(self):
        """Negative or non-finite weights raise"""
        with self.assertRaises(ValueError):
            RegularizationWeights(-0.1, 0.0)
        with self.assertRaises(ValueError):
            RegularizationWeights(0.0, float('inf'))
        self.assertTrue(RegularizationWeights().is_zero)


GRADIENT_INSTANCES = 100
KINK_MARGIN = 1e-3


def away_from_kinks(logits, targets, mask):
    """No |t - q| or |q - 1/k| close to zero, where the TV generator is not differentiable"""
    probs = softmax(logits, axis=1)
    k = probs.shape[1]
    if np.min(np.abs(targets - probs)[targets > 0]) <= KINK_MARGIN:
        return False
    unlabeled = probs[mask]
    if unlabeled.size == 0:
        return True
    return (np.min(np.abs(unlabeled - 1.0 / k)) > KINK_MARGIN
            and np.min(np.abs(unlabeled.mean(axis=0) - 1.0 / k)) > KINK_MARGIN)


def draw_risk_instance(seed):
    """
    Random beta-mixture problem: hard labeled rows followed by extra rows that
    are hard or soft at random; the extra rows enter the regularizers
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 7))
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, 6))
    beta = float(rng.uniform(0.05, 0.95))
    hard = np.eye(k)[rng.integers(0, k, size=n + m)]
    soft = sample_categorical(rng, k, size=m)
    extra = np.where((rng.random(m) < 0.5)[:, None], hard[n:], soft)
    targets = np.vstack([hard[:n], extra])
    weights = mixture_weights(n, m, beta)
    mask = np.arange(n + m) >= n
    lambdas = (float(rng.uniform(0.05, 1.0)), float(rng.uniform(0.05, 1.0)))
    while True:
        logits = rng.normal(scale=1.5, size=(n + m, k))
        if away_from_kinks(logits, targets, mask):
            return logits, targets, weights, mask, lambdas


class TestRiskGradients(unittest.TestCase):
    """Test analytic logit gradients against central finite differences"""

    @staticmethod
    def _relative_error(objective, logits, targets, weights, mask):
        value, analytic = objective.value_and_gradient(logits, targets, weights, mask)
        if not math.isfinite(value):
            return float('inf')
        numeric = finite_difference_gradient(
            lambda z: objective.value(z, targets, weights, mask), logits, epsilon=1e-5)
        return relative_error(analytic, numeric)

    def _check_instances(self, objectives_for):
        for seed in range(GRADIENT_INSTANCES):
            logits, targets, weights, mask, lambdas = draw_risk_instance(seed)
            for label, objective in objectives_for(lambdas):
                error = self._relative_error(objective, logits, targets, weights, mask)
                self.assertLessEqual(error, 1e-4, msg=f"{label}, instance {seed}")

    def test_instance_draws(self):
        """Instances vary in shape and mix hard and soft extra rows"""
        shapes = set()
        soft_rows = 0
        for seed in range(GRADIENT_INSTANCES):
            logits, targets, weights, mask, _ = draw_risk_instance(seed)
            shapes.add(logits.shape)
            soft_rows += int(np.sum(np.max(targets[mask], axis=1) < 1.0))
            self.assertAlmostEqual(weights.sum(), 1.0, places=12)
        self.assertGreater(len(shapes), 10)
        self.assertGreater(soft_rows, 0)

    def test_der_gradients(self):
        """Gradient of the DER term for every family"""
        self._check_instances(lambda lambdas: [
            (spec.label, RiskObjective(spec)) for spec in STANDARD_DIVERGENCES.values()])

    def test_entropy_regularizer_gradients(self):
        """Gradient with the D-entropy term only"""
        self._check_instances(lambda lambdas: [
            (spec.label, RiskObjective(spec, RegularizationWeights(lambdas[0], 0.0)))
            for spec in STANDARD_DIVERGENCES.values()])

    def test_marginal_regularizer_gradients(self):
        """Gradient with the mean-prediction term only"""
        self._check_instances(lambda lambdas: [
            (spec.label, RiskObjective(spec, RegularizationWeights(0.0, lambdas[1])))
            for spec in STANDARD_DIVERGENCES.values()])

    def test_regularized_gradients(self):
        """Gradient with both regularizers active"""
        self._check_instances(lambda lambdas: [
            (spec.label, RiskObjective(spec, RegularizationWeights(*lambdas)))
            for spec in STANDARD_DIVERGENCES.values()])

    def test_separate_regularizer_divergence(self):
        """Labeled and regularizer terms may use different divergences"""
        self._check_instances(lambda lambdas: [
            ('KL with JS regularizers', RiskObjective(DivergenceSpec.kl(), RegularizationWeights(*lambdas),
                                                      DivergenceSpec.jensen_shannon())),
            ('JS with TV regularizers', RiskObjective(DivergenceSpec.jensen_shannon(),
                                                      RegularizationWeights(*lambdas), DivergenceSpec.tv())),
        ])

    def test_gradient_vanishes_at_minimum(self):
        """KL gradient at a confident correct prediction"""
        gradient = DivergenceRiskModels().der_gradient(
            DivergenceSpec.kl(), np.array([[20.0, 0.0]]), [0], np.array([1.0]), RegularizationWeights())
        self.assertLess(np.linalg.norm(gradient), 1e-6)

    def test_non_finite_logits(self):
        """Non-finite logits raise"""
        with self.assertRaises(ValueError):
            RiskObjective(DivergenceSpec.kl()).value(np.array([[np.inf, 0.0]]), [0], np.array([1.0]))


class TestTheoryVerification(unittest.TestCase):
    """Test the property checks on small budgets"""

    def setUp(self):
        self.models = TheoryVerificationModels()
        self.rng = np.random.default_rng(0)

    def test_metric_pairs_hold(self):
        """Symmetry and triangle inequality of the metric pairs"""
        for spec, g in METRIC_DIVERGENCE_PAIRS:
            report = self.models.check_metric_axioms(spec, g, 200, 5, self.rng)
            self.assertEqual(report.violations, 0, msg=spec.label)
            self.assertLessEqual(report.max_symmetry_gap, 1e-9)

    def test_kl_is_not_a_metric(self):
        """KL fails symmetry on random triples"""
        report = self.models.check_metric_axioms(DivergenceSpec.kl(), MetricTransform.IDENTITY, 200, 5, self.rng)
        self.assertGreater(report.violations, 0)

    def test_triangle_bound(self):
        """Triangle bound at the free-logit minimizer"""
        instance = make_theory_instance(self.rng, 4, 6, 20, noise_rate=0.2)
        for spec, g in METRIC_DIVERGENCE_PAIRS:
            report = self.models.check_theorem1(instance, spec, g, steps=100)
            self.assertTrue(report.holds, msg=spec.label)
            self.assertGreaterEqual(report.slack, -1e-6)

    def test_triangle_bound_rejects_non_metric(self):
        """The bound needs a metric pair"""
        instance = make_theory_instance(self.rng, 3, 4, 8)
        with self.assertRaises(ValueError):
            self.models.check_theorem1(instance, DivergenceSpec.kl(), MetricTransform.IDENTITY)

    def test_noise_free_middle_term(self):
        """Without pseudo-label noise the pseudo joint equals the true joint"""
        instance = make_theory_instance(self.rng, 4, 6, 20, noise_rate=0.0)
        report = self.models.check_theorem1(instance, DivergenceSpec.tv(), MetricTransform.IDENTITY, steps=50)
        self.assertAlmostEqual(report.middle_term, 0.0, places=12)

    def test_scalar_condition(self):
        """2 G(t/2) <= G(2t) for both transforms"""
        for g in MetricTransform:
            holds, _ = self.models.check_scalar_condition(g)
            self.assertTrue(holds)

    def test_true_risk_bound(self):
        """Monte Carlo true-risk bound with few resamples"""
        report = self.models.check_corollary1(DivergenceSpec.jensen_shannon(), MetricTransform.SQRT, 3, self.rng,
                                              k=3, n=4, m=8, steps=50)
        self.assertTrue(report.bound_holds)
        self.assertEqual(report.violations, 0)

    def test_finiteness(self):
        """Finite generators give finite DERs; reverse and symmetric KL do not"""
        report = self.models.check_proposition1(None, 20, self.rng)
        self.assertEqual(report.violations, 0)
        self.assertTrue(all(report.counterexamples_infinite.values()))
        self.assertTrue(all(count == 20 for count in report.finite_counts.values()))

    def test_der_inequalities(self):
        """Pinsker, KL <= Chi2, boundedness and Renyi monotonicity"""
        report = self.models.check_der_inequalities(50, self.rng)
        self.assertEqual(report.violations, 0, msg=str(report.worst_excess))

    def test_budget_validation(self):
        """Negative budgets and degenerate sizes raise"""
        with self.assertRaises(ValueError):
            TheoryBudgets(trials=-1)
        with self.assertRaises(ValueError):
            TheoryBudgets(k=1)


class TestModelRegistry(unittest.TestCase):
    """Test dynamic model access"""

    def test_registered_models(self):
        self.assertEqual(sorted(list_available_models()), ['divergence', 'empirical_risk', 'theory_verification'])
        self.assertIs(get_model('divergence'), DivergenceModels)
        self.assertIsNone(get_model('unknown_model'))


def run_comprehensive_tests():
    """Run all tests and generate report"""

    print("=" * 80)
    print("DIVERGENCE RISK FRAMEWORK TEST SUITE")
    print("=" * 80)

    test_classes = [
        TestDivergenceSpec,
        TestCategoricalDistribution,
        TestDivergenceModels,
        TestEmpiricalRisk,
        TestRiskGradients,
        TestTheoryVerification,
        TestModelRegistry,
    ]

    total_tests = 0
    total_failures = 0
    total_errors = 0

    for test_class in test_classes:
        print(f"\nRunning {test_class.__name__}...")

        suite = unittest.TestLoader().loadTestsFromTestCase(test_class)
        with open(os.devnull, 'w') as devnull:
            result = unittest.TextTestRunner(verbosity=1, stream=devnull).run(suite)

        total_tests += result.testsRun
        total_failures += len(result.failures)
        total_errors += len(result.errors)

        if result.failures:
            print(f"  ✗ {len(result.failures)} failures")
            for test, _ in result.failures:
                print(f"    FAIL: {test}")

        if result.errors:
            print(f"  ✗ {len(result.errors)} errors")
            for test, _ in result.errors:
                print(f"    ERROR: {test}")

        if not result.failures and not result.errors:
            print(f"  ✓ All {result.testsRun} tests passed")

    print("\n" + "=" * 80)
    print("TEST SUMMARY")
    print("=" * 80)
    print(f"Total tests run: {total_tests}")
    print(f"Failures: {total_failures}")
    print(f"Errors: {total_errors}")
    if total_tests:
        print(f"Success rate: {(total_tests - total_failures - total_errors) / total_tests * 100:.1f}%")

    return total_failures == 0 and total_errors == 0


if __name__ == "__main__":
    success = run_comprehensive_tests()
    sys.exit(0 if success else 1)
