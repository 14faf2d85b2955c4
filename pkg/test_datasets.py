#!/usr/bin/env python3
"""
Test Suite for SSL Dataset Handling
Tests sparse and CSV parsing, the cache container, synthetic mixtures,
splits, normalization and label corruption
"""

import io
import os
import sys
import tempfile
import unittest
import numpy as np

sys.path.append(os.path.dirname(__file__))

from core.datasets.ssl_dataset import (
    DATASET_PRESETS, DatasetFormatError, LabeledRows, SplitRole,
    corrupt_labels, load_dataset, load_dataset_cache, make_synthetic_mixture, normalize_features,
    parse_dense_csv, parse_sparse_dataset, remap_labels, save_dataset_cache, split,
)


class TestSparseParsing(unittest.TestCase):
    """Test the '<label> <index>:<value>' format"""

    def test_dense_expansion(self):
        """Absent indices become zero"""
        rows = parse_sparse_dataset(["1 1:0.5 3:2.0\n", "2 2:1.0\n"])
        np.testing.assert_array_equal(rows.features, [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(rows.labels, [0, 1])
        self.assertEqual(rows.label_names, ('1', '2'))

    def test_explicit_dimension(self):
        """n_features pads rows beyond the largest index"""
        rows = parse_sparse_dataset(["3 1:1\n"], n_features=4)
        self.assertEqual(rows.d, 4)

    def test_comments_and_blank_lines(self):
        """Blank and comment lines are skipped"""
        rows = parse_sparse_dataset(["# header\n", "\n", "1 1:1 # trailing\n", "1 2:1\n"])
        self.assertEqual(len(rows), 2)
        self.assertEqual(rows.k, 1)

    def test_descending_index_line_number(self):
        """Errors carry the 1-based line number"""
        with self.assertRaises(DatasetFormatError) as context:
            parse_sparse_dataset(["1 1:1 2:1\n", "2 3:1 2:1\n"])
        self.assertEqual(context.exception.line_number, 2)
        self.assertIn("line 2", str(context.exception))

    def test_malformed_entries(self):
        """Bad labels, indices and tokens raise"""
        for line in ["abc 1:1", "1 0:1", "1 1-2", "1 x:1", "1 1:y", "1 2:1 2:3"]:
            with self.assertRaises(DatasetFormatError, msg=line):
                parse_sparse_dataset([line])

    def test_dimension_exceeded(self):
        """Indices beyond n_features raise"""
        with self.assertRaises(DatasetFormatError):
            parse_sparse_dataset(["1 5:1"], n_features=4)

    def test_label_remapping(self):
        """Numeric labels sort numerically"""
        ids, names = remap_labels(['10', '2', '1', '2'])
        self.assertEqual(names, ('1', '2', '10'))
        np.testing.assert_array_equal(ids, [2, 1, 0, 1])


class TestCsvParsing(unittest.TestCase):
    """Test 'label,v1,...,vd' rows"""

    def test_letters(self):
        """Alphabetic labels map to contiguous ids"""
        rows = parse_dense_csv(io.StringIO("B,1,2\nA,3,4\nB,5,6\n"))
        self.assertEqual(rows.label_names, ('A', 'B'))
        np.testing.assert_array_equal(rows.labels, [1, 0, 1])
        np.testing.assert_array_equal(rows.features, [[1, 2], [3, 4], [5, 6]])

    def test_header(self):
        """A header row is skipped on request"""
        rows = parse_dense_csv(io.StringIO("label,x,y\nA,1,2\n"), header=True)
        self.assertEqual(len(rows), 1)

    def test_non_numeric_value(self):
        """Non-numeric features report their line"""
        with self.assertRaises(DatasetFormatError) as context:
            parse_dense_csv(io.StringIO("A,1,2\nB,1,x\n"))
        self.assertEqual(context.exception.line_number, 2)

    def test_missing_features(self):
        """Rows need at least one feature"""
        with self.assertRaises(DatasetFormatError):
            parse_dense_csv(io.StringIO("A\nB\n"))


class TestDatasetFiles(unittest.TestCase):
    """Test the cache container and file dispatch"""

    def setUp(self):
        self.rows = LabeledRows(np.array([[0.25, 1.0], [2.0, -3.5]]), np.array([1, 0]), ('a', 'b'))

    def test_cache_round_trip(self):
        """Cache files reproduce the rows exactly"""
        with tempfile.TemporaryDirectory() as directory:
            path = save_dataset_cache(self.rows, os.path.join(directory, "rows"))
            self.assertTrue(path.endswith('.npz'))
            loaded = load_dataset_cache(path)
        np.testing.assert_array_equal(loaded.features, self.rows.features)
        np.testing.assert_array_equal(loaded.labels, self.rows.labels)
        self.assertEqual(loaded.label_names, ('a', 'b'))

    def test_dispatch_by_suffix(self):
        """Sparse, CSV and cache files load through one entry point"""
        with tempfile.TemporaryDirectory() as directory:
            sparse = os.path.join(directory, "rows.txt")
            with open(sparse, 'w', encoding='utf-8') as f:
                f.write("1 1:1\n2 2:1\n")
            csv = os.path.join(directory, "rows.csv")
            with open(csv, 'w', encoding='utf-8') as f:
                f.write("label,x\nA,1\n")
            self.assertEqual(load_dataset(sparse).d, 2)
            self.assertEqual(len(load_dataset(csv, csv_header=True)), 1)
            cache = save_dataset_cache(self.rows, os.path.join(directory, "rows.npz"))
            self.assertEqual(load_dataset(cache).k, 2)

    def test_missing_file(self):
        """Missing files raise FileNotFoundError"""
        with self.assertRaises(FileNotFoundError):
            load_dataset("/nonexistent/rows.txt")

    def test_rows_validation(self):
        """Labels must match rows and lie in range"""
        with self.assertRaises(ValueError):
            LabeledRows(np.zeros((2, 2)), np.array([0]), ('a',))
        with self.assertRaises(ValueError):
            LabeledRows(np.zeros((2, 2)), np.array([0, 2]), ('a', 'b'))


class TestSyntheticMixture(unittest.TestCase):
    """Test Gaussian-mixture generation"""

    def test_deterministic(self):
        """Same seed gives identical rows"""
        a = make_synthetic_mixture(3, 2, 20, 0.3, seed=5)
        b = make_synthetic_mixture(3, 2, 20, 0.3, seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        self.assertEqual(len(a), 60)
        self.assertEqual(a.k, 3)

    def test_zero_spread_sits_on_grid(self):
        """Without noise every row is its class mean"""
        rows = make_synthetic_mixture(4, 2, 2, 0.0, seed=0, scale=2.0)
        expected = {0: [0.0, 0.0], 1: [2.0, 0.0], 2: [0.0, 2.0], 3: [2.0, 2.0]}
        for features, label in zip(rows.features, rows.labels):
            np.testing.assert_array_equal(features, expected[int(label)])

    def test_class_proportions(self):
        """Imbalanced pools scale to the largest class"""
        rows = make_synthetic_mixture(2, 2, 100, 0.1, seed=0, class_proportions=[1.0, 0.25])
        self.assertEqual(list(np.bincount(rows.labels)), [100, 25])

    def test_invalid_settings(self):
        """Invalid sizes raise"""
        with self.assertRaises(ValueError):
            make_synthetic_mixture(0, 2, 10, 0.1, seed=0)
        with self.assertRaises(ValueError):
            make_synthetic_mixture(2, 2, 10, -0.1, seed=0)

    def test_presets(self):
        """Synthetic presets match the Letter shape"""
        preset = DATASET_PRESETS['synthetic_letter']
        self.assertEqual((preset['k'], preset['d'], preset['n_labeled']), (26, 16, 104))


class TestSplitting(unittest.TestCase):
    """Test labeled / unlabeled / test assignment"""

    def setUp(self):
        self.rows = make_synthetic_mixture(3, 2, 50, 0.3, seed=0)

    def test_sizes(self):
        """Requested sizes are honored"""
        dataset = split(self.rows, 9, 30, seed=1)
        self.assertEqual((dataset.n_labeled, dataset.n_unlabeled, dataset.n_test), (9, 111, 30))

    def test_stratified(self):
        """Stratified labeled rows are balanced"""
        dataset = split(self.rows, 9, 30, seed=1)
        self.assertEqual(list(np.bincount(dataset.labeled_view().labels, minlength=3)), [3, 3, 3])

    def test_deterministic(self):
        """Same seed, same roles; other seed, other roles"""
        a = split(self.rows, 9, 30, seed=1)
        b = split(self.rows, 9, 30, seed=1)
        c = split(self.rows, 9, 30, seed=2)
        np.testing.assert_array_equal(a.roles, b.roles)
        self.assertFalse(np.array_equal(a.roles, c.roles))

    def test_views(self):
        """Unlabeled rows expose no labels"""
        dataset = split(self.rows, 9, 30, seed=1)
        unlabeled = dataset.unlabeled_view()
        self.assertFalse(hasattr(unlabeled, 'labels'))
        self.assertEqual(len(unlabeled), 111)
        self.assertEqual(len(dataset.fully_labeled_view()), 120)
        self.assertEqual(len(dataset.unlabeled_evaluation_labels()), 111)
        self.assertEqual(len(dataset.test_view()), 30)

    def test_oversized_request(self):
        """More rows than available raise"""
        with self.assertRaises(ValueError):
            split(self.rows, 100, 100, seed=0)


class TestNormalization(unittest.TestCase):
    """Test train-only standardization"""

    def test_training_statistics(self):
        """Training rows end up with zero mean and unit variance"""
        dataset = split(make_synthetic_mixture(3, 2, 50, 0.3, seed=0), 9, 30, seed=1)
        normalized, transform = normalize_features(dataset)
        train = normalized.features[normalized.roles != SplitRole.TEST]
        np.testing.assert_allclose(train.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(train.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(transform.apply(dataset.features), normalized.features)

    def test_constant_column(self):
        """Constant columns are shifted but not scaled"""
        features = np.column_stack([np.arange(6, dtype=float), np.full(6, 3.0)])
        rows = LabeledRows(features, np.array([0, 1, 0, 1, 0, 1]), ('a', 'b'))
        normalized, transform = normalize_features(split(rows, 2, 2, seed=0))
        self.assertEqual(transform.scale[1], 1.0)
        np.testing.assert_array_equal(normalized.features[:, 1], 0.0)


class TestLabelCorruption(unittest.TestCase):
    """Test uniform label flipping"""

    def test_full_rate_flips_everything(self):
        """Rate 1 changes every label to another class"""
        labels = np.arange(20) % 4
        corrupted = corrupt_labels(labels, 1.0, 4, np.random.default_rng(0))
        self.assertTrue(np.all(corrupted != labels))
        self.assertTrue(np.all((corrupted >= 0) & (corrupted < 4)))

    def test_zero_rate(self):
        """Rate 0 keeps the labels"""
        labels = np.arange(20) % 4
        np.testing.assert_array_equal(corrupt_labels(labels, 0.0, 4, np.random.default_rng(0)), labels)

    def test_invalid_rate(self):
        """Rates outside [0, 1] raise"""
        with self.assertRaises(ValueError):
            corrupt_labels(np.zeros(3, dtype=int), 1.5, 2, np.random.default_rng(0))


if __name__ == "__main__":
    unittest.main()
