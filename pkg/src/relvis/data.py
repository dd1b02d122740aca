"""Building the two count views: kernels, label co-membership, files, synthetic data."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import CountMatrix, PairDistribution, all_pairs


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    ids: tuple

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError("feature matrix must be two-dimensional")
        if X.shape[0] < 2:
            raise DataError("need at least two items")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix has non-finite entries")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != X.shape[0]:
            raise DataError("one id per feature row required")
        if len(set(ids)) != len(ids):
            raise DataError("item ids must be unique")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_array(cls, X):
        return cls(X, tuple(str(i) for i in range(len(X))))

    @property
    def n_items(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class LabelSet:
    """Class memberships per item index; items may carry several labels."""

    assignments: dict

    @classmethod
    def from_sequence(cls, labels):
        """One label per item; ``None`` marks an unlabeled item."""
        return cls({i: {str(lab)} for i, lab in enumerate(labels) if lab is not None})

    @property
    def labels(self):
        return sorted(set().union(*self.assignments.values())) if self.assignments else []

    def classes(self, i):
        return self.assignments.get(i, set())

    def union(self, other):
        merged = {i: set(s) for i, s in self.assignments.items()}
        for i, s in other.assignments.items():
            merged.setdefault(i, set()).update(s)
        return LabelSet(merged)


@dataclass(frozen=True)
class SyntheticSpec:
    n_items: int = 200
    n_relevant_classes: int = 4
    n_irrelevant_classes: int = 4
    feature_dim: int = 10
    cluster_separation: float = 6.0
    noise_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_items < 2:
            raise ValueError("n_items must be at least 2")
        if self.n_relevant_classes < 2:
            raise ValueError("need at least two relevant classes")
        if self.n_irrelevant_classes == 1 or self.n_irrelevant_classes < 0:
            raise ValueError("n_irrelevant_classes must be 0 or at least 2")
        if self.feature_dim < self.n_relevant_classes:
            raise ValueError("feature_dim must be at least n_relevant_classes")
        if not self.cluster_separation > 0:
            raise ValueError("cluster_separation must be positive")
        if not 0 <= self.noise_rate <= 1:
            raise ValueError("noise_rate must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _pair_sq_distances(X):
    rows, cols = all_pairs(X.shape[0])
    diff = X[rows] - X[cols]
    return rows, cols, np.einsum("ij,ij->i", diff, diff)


def gaussian_similarity(features, sigma):
    """Dense count matrix with ``exp(-||x_i - x_j||^2 / sigma^2)`` on every pair."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    X = features.X if isinstance(features, FeatureMatrix) else np.asarray(features, float)
    rows, cols, sq = _pair_sq_distances(X)
    return CountMatrix(X.shape[0], rows, cols, np.exp(-sq / sigma**2))


def median_sigma(features):
    """Median pairwise Euclidean distance."""
    X = features.X if isinstance(features, FeatureMatrix) else np.asarray(features, float)
    _, _, sq = _pair_sq_distances(X)
    if not np.any(sq > 0):
        raise DataError("degenerate feature matrix: all points identical")
    return float(np.median(np.sqrt(sq)))


def labels_to_counts(labels, n_items):
    """Co-membership counts ``|classes(i) & classes(j)|`` over pairs of labeled items.

    Pairs involving an unlabeled item are left out of the observed set.
    """
    labeled = sorted(i for i, s in labels.assignments.items() if s and 0 <= i < n_items)
    if len(labeled) < 2:
        raise DataError("need at least two labeled items")
    vocab = {lab: c for c, lab in enumerate(labels.labels)}
    onehot = np.zeros((len(labeled), len(vocab)))
    for r, i in enumerate(labeled):
        onehot[r, [vocab[lab] for lab in labels.assignments[i]]] = 1.0
    shared = onehot @ onehot.T
    r, c = np.triu_indices(len(labeled), k=1)
    idx = np.asarray(labeled)
    return CountMatrix(n_items, idx[r], idx[c], shared[r, c])


def normalize(counts):
    total = counts.counts.sum()
    if not total > 0:
        raise DataError("cannot normalize a view with zero total count")
    return PairDistribution(counts.n_items, counts.rows, counts.cols, counts.counts / total)


def synth_generate(spec):
    """Synthetic primary features plus a user view carrying structured noise.

    Relevant classes are assigned round-robin and shape the features;
    irrelevant classes are a shuffled round-robin assignment that appears
    only in the user view.  A ``noise_rate`` share of the user count mass
    is moved onto uniformly drawn random pairs.

    Returns
    -------
    features : FeatureMatrix
    user_view : CountMatrix
    relevant, irrelevant : LabelSet
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_items
    rel = np.arange(n) % spec.n_relevant_classes
    X = rng.standard_normal((n, spec.feature_dim))
    X[np.arange(n), rel] += spec.cluster_separation
    relevant = LabelSet.from_sequence([f"rel{c}" for c in rel])
    if spec.n_irrelevant_classes:
        irr = rng.permutation(np.arange(n) % spec.n_irrelevant_classes)
        irrelevant = LabelSet.from_sequence([f"irr{c}" for c in irr])
    else:
        irrelevant = LabelSet({})
    user = labels_to_counts(relevant.union(irrelevant), n)
    if spec.noise_rate > 0:
        user = _add_count_noise(user, spec.noise_rate, rng)
    return FeatureMatrix.from_array(X), user, relevant, irrelevant


def _add_count_noise(counts, rate, rng):
    total = counts.counts.sum()
    n_draws = int(np.count_nonzero(counts.counts))
    hits = rng.multinomial(n_draws, np.full(counts.rows.size, 1.0 / counts.rows.size))
    noisy = (1.0 - rate) * counts.counts + rate * total * hits / n_draws
    return CountMatrix(counts.n_items, counts.rows, counts.cols, noisy)


def synth_two_aspects(n_items=150, n_classes_a=3, n_classes_b=3, separation=6.0,
                      noise_dim=2, seed=0):
    """Features carrying two independent class structures in disjoint dimensions.

    Labelling A is round-robin; labelling B is an independent shuffle.
    Returns ``(features, labels_a, labels_b)``.
    """
    rng = np.random.default_rng(seed)
    a = np.arange(n_items) % n_classes_a
    b = rng.permutation(np.arange(n_items) % n_classes_b)
    X = rng.standard_normal((n_items, n_classes_a + n_classes_b + noise_dim))
    X[np.arange(n_items), a] += separation
    X[np.arange(n_items), n_classes_a + b] += separation
    return (FeatureMatrix.from_array(X),
            LabelSet.from_sequence([f"a{c}" for c in a]),
            LabelSet.from_sequence([f"b{c}" for c in b]))


# -- file formats ---------------------------------------------------------

def _read_rows(path, header):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            first = next(reader, None)
            if first is None:
                raise DataError(f"{path}: empty file, expected header {','.join(header)}")
            got = [h.strip() for h in first]
            if got[:len(header)] != header:
                raise DataError(f"{path}, line 1: expected header starting "
                                f"{','.join(header)!r}, got {','.join(got)!r}")
            for row in reader:
                if not row or all(not cell.strip() for cell in row):
                    continue
                yield reader.line_num, got, [cell.strip() for cell in row]
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc


def _parse_float(path, line, text, what):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}, line {line}: {what} {text!r} is not a number") from None
    if not math.isfinite(value):
        raise DataError(f"{path}, line {line}: {what} must be finite")
    return value


def load_features(path):
    """Read a ``id,f1,...,fD`` CSV."""
    ids, rows = [], []
    width = None
    for line, header, row in _read_rows(path, ["id"]):
        if width is None:
            width = len(header)
            if width < 2:
                raise DataError(f"{path}, line 1: no feature columns")
        if len(row) != width:
            raise DataError(f"{path}, line {line}: expected {width} fields, got {len(row)}")
        ids.append(row[0])
        rows.append([_parse_float(path, line, v, "feature") for v in row[1:]])
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DataError(f"{path}: duplicate item id {dup!r}")
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two items")
    return FeatureMatrix(np.array(rows), tuple(ids))


def load_labels(path, ids, min_labels=2):
    """Read a ``id,label`` CSV; repeated ids accumulate labels."""
    index = {item: k for k, item in enumerate(ids)}
    assignments = {}
    for line, _, row in _read_rows(path, ["id", "label"]):
        if len(row) != 2 or not row[1]:
            raise DataError(f"{path}, line {line}: expected 'id,label'")
        if row[0] not in index:
            raise DataError(f"{path}, line {line}: unknown item id {row[0]!r}")
        assignments.setdefault(index[row[0]], set()).add(row[1])
    labels = LabelSet(assignments)
    if len(labels.labels) < min_labels:
        raise DataError(f"{path}: need at least {min_labels} distinct labels, "
                        f"found {len(labels.labels)}")
    return labels


def load_counts(path, ids):
    """Read a ``i,j,count`` CSV; symmetric duplicates are summed."""
    index = {item: k for k, item in enumerate(ids)}
    rows, cols, vals = [], [], []
    for line, _, row in _read_rows(path, ["i", "j", "count"]):
        if len(row) != 3:
            raise DataError(f"{path}, line {line}: expected 'i,j,count'")
        for item in row[:2]:
            if item not in index:
                raise DataError(f"{path}, line {line}: unknown item id {item!r}")
        a, b = index[row[0]], index[row[1]]
        if a == b:
            raise DataError(f"{path}, line {line}: self-pair {row[0]!r}")
        count = _parse_float(path, line, row[2], "count")
        if count < 0:
            raise DataError(f"{path}, line {line}: negative count")
        rows.append(a)
        cols.append(b)
        vals.append(count)
    if not any(v > 0 for v in vals):
        raise DataError(f"{path}: zero total count")
    return CountMatrix(len(ids), rows, cols, vals)


def write_features(fh, features):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["id"] + [f"f{k + 1}" for k in range(features.dim)])
    for item, x in zip(features.ids, features.X):
        w.writerow([item] + [repr(float(v)) for v in x])


def write_labels(fh, labels, ids):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["id", "label"])
    for i in sorted(labels.assignments):
        for lab in sorted(labels.assignments[i]):
            w.writerow([ids[i], lab])


def write_counts(fh, counts, ids, skip_zero=True):
    """Write ``i,j,count`` rows; zero counts are omitted unless ``skip_zero`` is false."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "j", "count"])
    for i, j, c in counts.entries:
        if skip_zero and c == 0:
            continue
        w.writerow([ids[i], ids[j], repr(float(c))])
