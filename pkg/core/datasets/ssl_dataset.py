"""
SSL Dataset Handling
Sparse (LIBSVM-style) and dense CSV ingestion, synthetic Gaussian mixtures,
deterministic labeled/unlabeled/test splits and train-only standardization
"""

import os
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, IO, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DATASET_CACHE_VERSION = 1

# Relative tolerance under which a training column counts as constant
ZERO_VARIANCE_TOLERANCE = 1e-12


class DatasetFormatError(ValueError):
    """Malformed dataset input; line_number is 1-based when known"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line_number = line_number


@dataclass
class LabeledRows:
    """Dense feature rows with contiguous class ids and the original label of each id"""
    features: np.ndarray
    labels: np.ndarray
    label_names: Tuple[str, ...]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.label_names = tuple(str(name) for name in self.label_names)
        if self.features.ndim != 2:
            raise ValueError(f"Features must be a 2-D array, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError(f"Expected {self.features.shape[0]} labels, got {self.labels.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError(f"Class ids must lie in [0, {self.k})")

    @property
    def k(self) -> int:
        return len(self.label_names)

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return int(self.features.shape[0])


def _label_sort_key(label: str) -> Tuple[int, float, str]:
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def remap_labels(raw_labels: Sequence[str]) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """
    Map original labels to contiguous ids in sorted order

    Numeric labels sort numerically, others alphabetically.

    Returns:
        (ids, names) with names[id] the original label
    """
    names = tuple(sorted(set(raw_labels), key=_label_sort_key))
    lookup = {name: index for index, name in enumerate(names)}
    return np.array([lookup[label] for label in raw_labels], dtype=np.int64), names


def parse_sparse_line(line: str, line_number: int) -> Optional[Tuple[str, List[Tuple[int, float]]]]:
    """
    Parse '<label> <index>:<value> ...' with 1-based strictly ascending indices

    Returns:
        (label, [(index, value), ...]) or None for blank and comment lines
    """
    text = line.split('#', 1)[0].strip()
    if not text:
        return None
    tokens = text.split()
    label = tokens[0]
    try:
        float(label)
    except ValueError:
        raise DatasetFormatError(f"invalid label '{label}'", line_number) from None

    entries = []
    previous = 0
    for token in tokens[1:]:
        index_text, separator, value_text = token.partition(':')
        if not separator:
            raise DatasetFormatError(f"malformed feature '{token}'", line_number)
        try:
            index = int(index_text)
            value = float(value_text)
        except ValueError:
            raise DatasetFormatError(f"malformed feature '{token}'", line_number) from None
        if index < 1:
            raise DatasetFormatError(f"feature index {index} is not 1-based", line_number)
        if index <= previous:
            raise DatasetFormatError(f"feature index {index} not ascending after {previous}", line_number)
        previous = index
        entries.append((index, value))
    return label, entries


def parse_sparse_dataset(stream: Iterable[str], n_features: Optional[int] = None) -> LabeledRows:
    """
    Read the sparse text format into dense rows

    Args:
        stream: Text lines
        n_features: Feature dimension (inferred from the largest index when None)

    Returns:
        LabeledRows with absent indices set to 0
    """
    labels: List[str] = []
    rows: List[List[Tuple[int, float]]] = []
    max_index = 0
    for line_number, line in enumerate(stream, start=1):
        parsed = parse_sparse_line(line, line_number)
        if parsed is None:
            continue
        label, entries = parsed
        if entries:
            max_index = max(max_index, entries[-1][0])
            if n_features is not None and entries[-1][0] > n_features:
                raise DatasetFormatError(f"feature index {entries[-1][0]} exceeds dimension {n_features}",
                                         line_number)
        labels.append(label)
        rows.append(entries)

    d = max_index if n_features is None else n_features
    features = np.zeros((len(rows), d))
    for row, entries in enumerate(rows):
        for index, value in entries:
            features[row, index - 1] = value

    ids, names = remap_labels(labels)
    logger.info(f"Parsed {len(rows)} sparse rows: d={d}, k={len(names)}")
    return LabeledRows(features, ids, names)


def parse_dense_csv(stream: Union[str, IO[str]], header: bool = False) -> LabeledRows:
    """
    Read 'label,v1,...,vd' rows

    Args:
        stream: Path or text stream
        header: Whether the first line holds column names

    Returns:
        LabeledRows
    """
    try:
        frame = pd.read_csv(stream, header=None, skiprows=1 if header else 0, dtype={0: str},
                            skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetFormatError(f"unreadable CSV: {exc}") from exc
    if frame.shape[1] < 2:
        raise DatasetFormatError("CSV rows need a label and at least one feature")

    values = frame.iloc[:, 1:].apply(pd.to_numeric, errors='coerce')
    bad_rows = np.flatnonzero(values.isna().any(axis=1).to_numpy())
    if bad_rows.size:
        raise DatasetFormatError("non-numeric feature value", int(bad_rows[0]) + 1 + int(header))

    raw_labels = frame.iloc[:, 0].astype(str).str.strip().tolist()
    ids, names = remap_labels(raw_labels)
    return LabeledRows(values.to_numpy(dtype=np.float64), ids, names)


def save_dataset_cache(rows: LabeledRows, path: str) -> str:
    """
    Write the canonical cache container

    Layout (.npz): format_version (int), features (N x d float64, row-major),
    labels (N int64), label_names (k unicode strings)
    """
    if not path.endswith('.npz'):
        path = f"{path}.npz"
    np.savez(path,
             format_version=np.int64(DATASET_CACHE_VERSION),
             features=rows.features,
             labels=rows.labels,
             label_names=np.array(rows.label_names, dtype=str))
    logger.info(f"Dataset cache written to {path}")
    return path


def load_dataset_cache(path: str) -> LabeledRows:
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive['format_version'])
        if version != DATASET_CACHE_VERSION:
            raise DatasetFormatError(f"unsupported cache version {version} in {path}")
        return LabeledRows(archive['features'], archive['labels'], tuple(archive['label_names'].tolist()))


def load_dataset(path: str, n_features: Optional[int] = None, csv_header: bool = False) -> LabeledRows:
    """Load a cache (.npz), dense CSV (.csv) or sparse text file"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Dataset file not found: {path}")
    suffix = os.path.splitext(path)[1].lower()
    if suffix == '.npz':
        return load_dataset_cache(path)
    if suffix == '.csv':
        return parse_dense_csv(path, header=csv_header)
    with open(path, 'r', encoding='utf-8') as stream:
        return parse_sparse_dataset(stream, n_features)


def _grid_means(k: int, d: int, scale: float) -> np.ndarray:
    """Class c sits at scale * (base-b digits of c), b the smallest base with b^d >= k"""
    base = 2
    while base ** d < k:
        base += 1
    means = np.zeros((k, d))
    for c in range(k):
        value = c
        for j in range(d):
            means[c, j] = value % base
            value //= base
    return scale * means


def make_synthetic_mixture(k: int, d: int, per_class: int, spread: float, seed: int,
                           scale: float = 1.0,
                           class_proportions: Optional[Sequence[float]] = None) -> LabeledRows:
    """
    Isotropic Gaussian blobs around deterministic grid means

    Neighbouring means are `scale` apart.

    Args:
        k: Number of classes
        d: Feature dimension
        per_class: Rows per class (rows of the largest class with class_proportions)
        spread: Standard deviation of the isotropic noise
        seed: Random seed
        scale: Grid spacing
        class_proportions: Relative class frequencies for imbalanced pools

    Returns:
        LabeledRows
    """
    if k < 1 or d < 1 or per_class < 1:
        raise ValueError(f"k, d and per_class must be >= 1, got k={k}, d={d}, per_class={per_class}")
    if spread < 0 or scale <= 0:
        raise ValueError(f"Need spread >= 0 and scale > 0, got spread={spread}, scale={scale}")

    if class_proportions is None:
        counts = np.full(k, per_class, dtype=np.int64)
    else:
        proportions = np.asarray(class_proportions, dtype=np.float64)
        if proportions.shape != (k,) or np.any(proportions <= 0):
            raise ValueError("class_proportions needs k positive entries")
        counts = np.maximum(1, np.round(per_class * proportions / proportions.max())).astype(np.int64)

    rng = np.random.default_rng(seed)
    means = _grid_means(k, d, scale)
    labels = np.repeat(np.arange(k), counts)
    features = means[labels] + spread * rng.standard_normal((labels.size, d))
    return LabeledRows(features, labels, tuple(str(c) for c in range(k)))


def corrupt_labels(labels: np.ndarray, rate: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    Flip each label with probability `rate` to a uniformly drawn different class

    Returns:
        New label array
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"Noise rate must lie in [0, 1], got {rate}")
    labels = np.asarray(labels, dtype=np.int64)
    if rate > 0 and k < 2:
        raise ValueError("Label noise needs at least two classes")
    flip = rng.random(labels.size) < rate
    offsets = rng.integers(1, max(k, 2), size=labels.size)
    return np.where(flip, (labels + offsets) % k, labels)


class SplitRole(IntEnum):
    LABELED = 0
    UNLABELED = 1
    TEST = 2


@dataclass(frozen=True, eq=False)
class LabeledView:
    """Features with labels (labeled, test or fully labeled rows)"""
    features: np.ndarray
    labels: np.ndarray
    k: int

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True, eq=False)
class UnlabeledView:
    """Features of unlabeled rows; carries no label accessor"""
    features: np.ndarray
    k: int

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass
class AffineTransform:
    """x -> (x - shift) / scale per dimension"""
    shift: np.ndarray
    scale: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.shift) / self.scale

    def to_dict(self) -> Dict[str, List[float]]:
        return {'shift': self.shift.tolist(), 'scale': self.scale.tolist()}


@dataclass
class SslDataset:
    """All rows with their split role; unlabeled true labels are only reachable for evaluation"""
    features: np.ndarray
    labels: np.ndarray
    roles: np.ndarray
    label_names: Tuple[str, ...]

    def __post_init__(self):
        self.roles = np.asarray(self.roles, dtype=np.int8)
        if self.roles.shape != self.labels.shape:
            raise ValueError("Every row needs a split role")

    @property
    def k(self) -> int:
        return len(self.label_names)

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def _mask(self, role: SplitRole) -> np.ndarray:
        return self.roles == role

    @property
    def n_labeled(self) -> int:
        return int(np.sum(self._mask(SplitRole.LABELED)))

    @property
    def n_unlabeled(self) -> int:
        return int(np.sum(self._mask(SplitRole.UNLABELED)))

    @property
    def n_test(self) -> int:
        return int(np.sum(self._mask(SplitRole.TEST)))

    def labeled_view(self) -> LabeledView:
        mask = self._mask(SplitRole.LABELED)
        return LabeledView(self.features[mask], self.labels[mask], self.k)

    def unlabeled_view(self) -> UnlabeledView:
        return UnlabeledView(self.features[self._mask(SplitRole.UNLABELED)], self.k)

    def test_view(self) -> LabeledView:
        mask = self._mask(SplitRole.TEST)
        return LabeledView(self.features[mask], self.labels[mask], self.k)

    def fully_labeled_view(self) -> LabeledView:
        """Labeled and unlabeled rows with their true labels"""
        mask = self.roles != SplitRole.TEST
        return LabeledView(self.features[mask], self.labels[mask], self.k)

    def unlabeled_evaluation_labels(self) -> np.ndarray:
        """True labels of unlabeled rows, for pseudo-label auditing only"""
        return self.labels[self._mask(SplitRole.UNLABELED)].copy()

    def with_features(self, features: np.ndarray) -> 'SslDataset':
        return SslDataset(features, self.labels, self.roles, self.label_names)


def _stratified_pick(pool: np.ndarray, pool_labels: np.ndarray, n_labeled: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Round-robin quota over classes in random order; per-class counts differ by at most one
    unless a class runs out of rows"""
    classes = np.unique(pool_labels)
    available = {c: pool[pool_labels == c] for c in classes}
    quota = {c: 0 for c in classes}
    remaining = n_labeled
    class_order = rng.permutation(classes)
    while remaining > 0:
        progressed = False
        for c in class_order:
            if remaining == 0:
                break
            if quota[c] < available[c].size:
                quota[c] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break
    return np.concatenate([available[c][:quota[c]] for c in classes]) if classes.size else pool[:0]


def split(rows: LabeledRows, n_labeled: int, n_test: int, seed: int,
          stratified: bool = True) -> SslDataset:
    """
    Deterministic labeled / unlabeled / test assignment

    Test rows are drawn uniformly first; labeled rows are then drawn from the
    remainder (stratified by class when requested); the rest is unlabeled.

    Args:
        rows: Full dataset
        n_labeled: Number of labeled rows
        n_test: Number of test rows
        seed: Random seed
        stratified: Balance labeled rows across classes

    Returns:
        SslDataset
    """
    total = len(rows)
    if n_labeled < 0 or n_test < 0 or n_labeled + n_test > total:
        raise ValueError(f"Cannot split {total} rows into {n_labeled} labeled and {n_test} test rows")

    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    test_rows = order[:n_test]
    pool = order[n_test:]
    if stratified:
        labeled_rows = _stratified_pick(pool, rows.labels[pool], n_labeled, rng)
    else:
        labeled_rows = pool[:n_labeled]

    roles = np.full(total, SplitRole.UNLABELED, dtype=np.int8)
    roles[test_rows] = SplitRole.TEST
    roles[labeled_rows] = SplitRole.LABELED
    dataset = SslDataset(rows.features, rows.labels, roles, rows.label_names)
    logger.info(f"Split {total} rows: n={dataset.n_labeled}, m={dataset.n_unlabeled}, test={dataset.n_test}")
    return dataset


def normalize_features(dataset: SslDataset) -> Tuple[SslDataset, AffineTransform]:
    """
    Standardize every dimension with labeled + unlabeled statistics

    Constant training columns keep scale 1 and are only shifted by their mean.

    Returns:
        (transformed dataset, transform)
    """
    train = dataset.roles != SplitRole.TEST
    if not np.any(train):
        raise ValueError("Normalization needs at least one training row")
    training_features = dataset.features[train]
    shift = training_features.mean(axis=0)
    std = training_features.std(axis=0)
    constant = std <= ZERO_VARIANCE_TOLERANCE * np.maximum(1.0, np.abs(shift))
    scale = np.where(constant, 1.0, std)
    transform = AffineTransform(shift, scale)
    return dataset.with_features(transform.apply(dataset.features)), transform


# Dataset setups of the reported experiments
DATASET_PRESETS = {
    'letter': {'file': 'letter.scale', 'n_labeled': 104, 'n_test': 2000, 'k': 26, 'd': 16},
    'synthetic_letter': {'k': 26, 'd': 16, 'per_class': 770, 'spread': 0.35,
                         'n_labeled': 104, 'n_test': 2000},
    'synthetic_small': {'k': 3, 'd': 2, 'per_class': 1100, 'spread': 0.45,
                        'n_labeled': 30, 'n_test': 300},
}
