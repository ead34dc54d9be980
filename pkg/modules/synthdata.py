#!/usr/bin/env python3
"""
Synthetic Data and Label Noise
Gaussian-cluster datasets with a retained ground-truth clean mask, symmetric,
asymmetric and open-set noise injectors, and the CSV dataset format.

Every operation is pure: inputs are never mutated and each call owns its
seeded generator.
"""

import csv
import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataFormatError, ParameterError

logger = logging.getLogger(__name__)

SPLIT_TAGS = ("train", "test")
# true_label of an open-set sample, in memory and in CSV files
OPEN_SET_LABEL = -1


@dataclass(frozen=True)
class Dataset:
    """Features with given (possibly corrupted) and true labels"""
    features: np.ndarray
    given_labels: np.ndarray
    true_labels: np.ndarray
    num_classes: int
    split_tag: str = "train"
    # false when the source carried no true labels; noise-oracle metrics are then disabled
    has_oracle: bool = True
    # open-set samples: their true class is outside the label space and recorded as -1
    open_mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ParameterError("features must be a 2-D matrix")
        n = self.features.shape[0]
        if self.given_labels.shape != (n,) or self.true_labels.shape != (n,):
            raise ParameterError("label arrays must have one entry per feature row")
        if self.num_classes < 2:
            raise ParameterError("num_classes must be >= 2")
        if self.split_tag not in SPLIT_TAGS:
            raise ParameterError(f"split_tag must be one of {SPLIT_TAGS}")
        if not np.all(np.isfinite(self.features)):
            raise ParameterError("features contain non-finite entries")
        if n and (self.given_labels.min() < 0 or self.given_labels.max() >= self.num_classes):
            raise ParameterError(f"given labels must lie in [0,{self.num_classes})")
        open_mask = self.open_mask if self.open_mask is not None else np.zeros(n, dtype=bool)
        in_range = (self.true_labels >= 0) & (self.true_labels < self.num_classes)
        if not np.all(in_range | (open_mask & (self.true_labels == OPEN_SET_LABEL))):
            raise ParameterError(f"true labels must lie in [0,{self.num_classes})")

    @property
    def clean_mask(self) -> np.ndarray:
        return self.given_labels == self.true_labels

    @property
    def num_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def noise_rate(self) -> float:
        if self.num_samples == 0:
            return 0.0
        return float(np.mean(~self.clean_mask))


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate <= 1.0:
        raise ParameterError(f"noise rate must lie in [0,1], got {rate}")


def _check_unnoised(dataset: Dataset) -> None:
    if not np.all(dataset.clean_mask):
        raise ParameterError("noise can only be injected once into a clean dataset")


def make_centers(num_classes: int, dim: int, radius: float, seed: int) -> np.ndarray:
    """
    Distinct cluster means at distance `radius` from the origin

    K <= d gives orthonormal directions (pairwise distance radius*sqrt(2));
    otherwise directions are random unit vectors.
    """
    if num_classes < 2 or dim < 1:
        raise ParameterError("need num_classes >= 2 and dim >= 1")
    if not radius > 0:
        raise ParameterError("radius must be > 0")
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(max(dim, num_classes), dim))
    if num_classes <= dim:
        q, _ = np.linalg.qr(raw[:dim].T)
        directions = q.T[:num_classes]
    else:
        directions = raw[:num_classes] / np.linalg.norm(raw[:num_classes], axis=1, keepdims=True)
    centers = radius * directions
    if len({tuple(row) for row in centers}) != num_classes:
        raise ParameterError("cluster means are not distinct")
    return centers


def sample_clusters(centers: np.ndarray,
                    per_class: int,
                    spread: float,
                    seed: int,
                    split_tag: str = "train",
                    class_spreads: Optional[Sequence[float]] = None) -> Dataset:
    """Draw per_class isotropic Gaussian samples around every center"""
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] < 2:
        raise ParameterError("centers must be a K x d matrix with K >= 2")
    if per_class < 1:
        raise ParameterError("per_class must be >= 1")
    if not spread > 0:
        raise ParameterError("spread must be > 0")
    k, d = centers.shape
    spreads = np.full(k, float(spread)) if class_spreads is None else np.asarray(class_spreads, dtype=float)
    if spreads.shape != (k,) or np.any(spreads <= 0):
        raise ParameterError("class_spreads must hold one positive spread per class")

    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), per_class)
    noise = rng.normal(size=(k * per_class, d))
    features = centers[labels] + noise * spreads[labels][:, None]
    return Dataset(
        features=features,
        given_labels=labels.copy(),
        true_labels=labels,
        num_classes=k,
        split_tag=split_tag,
    )


def generate_clusters(num_classes: int,
                      dim: int,
                      per_class: int,
                      spread: float,
                      seed: int,
                      radius: float = 4.0,
                      centers: Optional[np.ndarray] = None) -> Dataset:
    """
    Generate a labeled Gaussian-cluster dataset

    Args:
        num_classes: number of clusters K (>= 2)
        dim: feature dimension d (>= 1)
        per_class: samples per cluster n (>= 1)
        spread: isotropic standard deviation of every cluster
        seed: generator seed; identical seeds give bit-identical datasets
        radius: distance of generated means from the origin
        centers: explicit K x d means, overriding generated ones

    Returns:
        Clean Dataset of K*n samples with given_labels == true_labels
    """
    if num_classes < 2 or dim < 1 or per_class < 1 or not spread > 0:
        raise ParameterError("need num_classes >= 2, dim >= 1, per_class >= 1 and spread > 0")
    seq = np.random.SeedSequence(seed)
    center_seed, sample_seed = seq.spawn(2)
    if centers is None:
        centers = make_centers(num_classes, dim, radius, center_seed)
    elif np.asarray(centers).shape != (num_classes, dim):
        raise ParameterError("centers must be a num_classes x dim matrix")
    return sample_clusters(centers, per_class, spread, sample_seed)


def inject_symmetric(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Flip each label with probability `rate` to a uniformly random different class"""
    _check_rate(rate)
    _check_unnoised(dataset)
    rng = np.random.default_rng(seed)
    n, k = dataset.num_samples, dataset.num_classes
    flip = rng.random(n) < rate
    offsets = rng.integers(1, k, size=n)
    given = np.where(flip, (dataset.true_labels + offsets) % k, dataset.true_labels)
    logger.debug(f"Symmetric noise at rate {rate}: {int(flip.sum())}/{n} labels flipped")
    return replace(dataset, given_labels=given)


def inject_asymmetric(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Flip each label with probability `rate` to (y + 1) mod K"""
    _check_rate(rate)
    _check_unnoised(dataset)
    rng = np.random.default_rng(seed)
    n, k = dataset.num_samples, dataset.num_classes
    flip = rng.random(n) < rate
    given = np.where(flip, (dataset.true_labels + 1) % k, dataset.true_labels)
    logger.debug(f"Asymmetric noise at rate {rate}: {int(flip.sum())}/{n} labels flipped")
    return replace(dataset, given_labels=given)


def _closed_classes(num_classes: int, open_classes: Iterable[int]) -> Tuple[np.ndarray, np.ndarray]:
    open_set = set(int(c) for c in open_classes)
    if not open_set:
        raise ParameterError("open_classes must be non-empty")
    if any(not 0 <= c < num_classes for c in open_set):
        raise ParameterError(f"open_classes must lie in [0,{num_classes})")
    if len(open_set) >= num_classes:
        raise ParameterError("open_classes must not cover every class")
    if num_classes - len(open_set) < 2:
        raise ParameterError("open_classes must leave at least two closed classes")
    closed = np.array([c for c in range(num_classes) if c not in open_set])
    remap = np.full(num_classes, -1)
    remap[closed] = np.arange(closed.size)
    return closed, remap


def inject_openset(dataset: Dataset, open_classes: Iterable[int], rate: float, seed: int) -> Dataset:
    """
    Open-set noise

    Samples of open classes are relabeled to a uniformly random closed class
    (true label recorded as -1); closed-class samples then receive symmetric
    noise at `rate` within the closed label space, which is remapped to
    [0, K_closed).
    """
    _check_rate(rate)
    _check_unnoised(dataset)
    closed, remap = _closed_classes(dataset.num_classes, open_classes)
    k_closed = closed.size
    rng = np.random.default_rng(seed)
    n = dataset.num_samples

    mapped = remap[dataset.true_labels]
    is_open = mapped < 0
    open_targets = rng.integers(0, k_closed, size=n)
    flip = (rng.random(n) < rate) & ~is_open
    offsets = rng.integers(1, k_closed, size=n)
    flipped = np.where(flip, (mapped + offsets) % k_closed, mapped)
    given = np.where(is_open, open_targets, flipped)
    true = np.where(is_open, OPEN_SET_LABEL, mapped)
    logger.debug(f"Open-set noise: {int(is_open.sum())} open samples, {k_closed} closed classes")
    return Dataset(
        features=dataset.features,
        given_labels=given,
        true_labels=true,
        num_classes=k_closed,
        split_tag=dataset.split_tag,
        has_oracle=dataset.has_oracle,
        open_mask=is_open,
    )


def restrict_to_closed(dataset: Dataset, open_classes: Iterable[int]) -> Dataset:
    """Drop open-class samples and remap the remaining labels to [0, K_closed)"""
    closed, remap = _closed_classes(dataset.num_classes, open_classes)
    keep = remap[dataset.true_labels] >= 0
    return Dataset(
        features=dataset.features[keep],
        given_labels=remap[dataset.given_labels[keep]],
        true_labels=remap[dataset.true_labels[keep]],
        num_classes=closed.size,
        split_tag=dataset.split_tag,
        has_oracle=dataset.has_oracle,
    )


def dataset_hash(dataset: Dataset) -> str:
    """sha256 over features, labels and the class count"""
    h = hashlib.sha256()
    h.update(f"{dataset.num_classes}:{dataset.num_samples}:{dataset.dim}".encode())
    h.update(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(dataset.given_labels, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(dataset.true_labels, dtype="<i8").tobytes())
    return h.hexdigest()


def load_csv(path: Union[str, Path], num_classes: Optional[int] = None, split_tag: str = "train") -> Dataset:
    """
    Load a dataset from CSV

    Header: f0,...,f{d-1},label[,true_label]. Without true_label the clean mask
    is all true and has_oracle is false. A true_label of -1 marks an open-set
    sample (true class outside the label space).

    Args:
        path: CSV file (UTF-8, '.' decimal point)
        num_classes: label space size; inferred as max label + 1 when omitted
        split_tag: train or test

    Returns:
        Parsed Dataset
    """
    path = Path(path)
    if not path.is_file():
        raise DataFormatError("file not found", path=str(path))
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Error reading dataset {path}: {str(e)}")
        raise DataFormatError(f"cannot read file: {e}", path=str(path)) from e

    if not rows:
        raise DataFormatError("missing header row", path=str(path), line=1)
    header = [h.strip() for h in rows[0]]
    if not header:
        raise DataFormatError("missing header row", path=str(path), line=1)
    has_true = header[-1:] == ["true_label"]
    n_label_cols = 2 if has_true else 1
    feature_cols = header[:-n_label_cols]
    if header[len(feature_cols)] != "label" or not feature_cols:
        raise DataFormatError("header must be f0,...,f{d-1},label[,true_label]", path=str(path), line=1)
    if feature_cols != [f"f{j}" for j in range(len(feature_cols))]:
        raise DataFormatError("feature columns must be named f0,...,f{d-1}", path=str(path), line=1)

    d = len(feature_cols)
    features, given, true = [], [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, found {len(row)}", path=str(path), line=line_no)
        try:
            values = [float(v) for v in row[:d]]
        except ValueError:
            raise DataFormatError("non-numeric feature value", path=str(path), line=line_no)
        if not all(np.isfinite(values)):
            raise DataFormatError("non-finite feature value", path=str(path), line=line_no)
        try:
            labels = [int(v) for v in row[d:]]
        except ValueError:
            raise DataFormatError("labels must be integers", path=str(path), line=line_no)
        for pos, label in enumerate(labels):
            if label == OPEN_SET_LABEL and pos == 1:
                continue
            if label < 0 or (num_classes is not None and label >= num_classes):
                bound = num_classes if num_classes is not None else "K"
                raise DataFormatError(f"label {label} out of range [0,{bound})", path=str(path), line=line_no)
        features.append(values)
        given.append(labels[0])
        true.append(labels[1] if has_true else labels[0])

    given_arr = np.array(given, dtype=np.int64)
    true_arr = np.array(true, dtype=np.int64)
    open_mask = true_arr == OPEN_SET_LABEL
    if num_classes is None:
        num_classes = max(2, int(max(given_arr.max(initial=0), true_arr.max(initial=0))) + 1)
    if not has_true:
        logger.warning(f"{path} has no true_label column; noise-oracle metrics disabled")
    logger.info(f"Loaded {len(given)} samples with {d} features from {path}")
    return Dataset(
        features=np.array(features, dtype=float).reshape(len(given), d),
        given_labels=given_arr,
        true_labels=true_arr,
        num_classes=num_classes,
        split_tag=split_tag,
        has_oracle=has_true,
        open_mask=open_mask if open_mask.any() else None,
    )


def save_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    """Write a dataset in the load_csv format, true_label column included (-1 for open-set samples)"""
    path = Path(path)
    header = [f"f{j}" for j in range(dataset.dim)] + ["label", "true_label"]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for x, y, t in zip(dataset.features, dataset.given_labels, dataset.true_labels):
                writer.writerow([repr(float(v)) for v in x] + [int(y), int(t)])
    except OSError as e:
        logger.error(f"Error writing dataset {path}: {str(e)}")
        raise
    logger.info(f"Saved {dataset.num_samples} samples to {path}")


def build_datasets(data_config, noise_config, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Build the (noisy train, clean test) pair a run trains on

    Data and noise seeds derive only from `seed`, so every ablation variant
    sees the same datasets for a given seed.
    """
    seq = np.random.SeedSequence(seed)
    center_seed, train_seed, test_seed, noise_seed = seq.spawn(4)

    if data_config.train_csv:
        train = load_csv(data_config.train_csv, split_tag="train")
        k = train.num_classes
        test = load_csv(data_config.test_csv, num_classes=k, split_tag="test") if data_config.test_csv else replace(
            train, split_tag="test")
    else:
        k = data_config.num_classes
        centers = make_centers(k, data_config.dim, data_config.center_radius, center_seed)
        spreads = np.full(k, data_config.spread)
        for c in data_config.hard_classes:
            spreads[c] *= data_config.hard_spread_factor
        train = sample_clusters(centers, data_config.train_per_class, data_config.spread, train_seed,
                                "train", class_spreads=spreads)
        test = sample_clusters(centers, data_config.test_per_class, data_config.spread, test_seed,
                               "test", class_spreads=spreads)

    noise_seed_int = int(noise_seed.generate_state(1)[0])
    kind = noise_config.kind
    if kind == "none" or not train.has_oracle:
        if kind != "none":
            logger.warning("Training data carries no true labels; noise injection skipped")
    elif not np.all(train.clean_mask):
        logger.info("Training data already carries label noise; injection skipped")
    elif kind == "symmetric":
        train = inject_symmetric(train, noise_config.rate, noise_seed_int)
    elif kind == "asymmetric":
        train = inject_asymmetric(train, noise_config.rate, noise_seed_int)
    elif kind == "openset":
        train = inject_openset(train, noise_config.open_classes, noise_config.rate, noise_seed_int)
        test = restrict_to_closed(test, noise_config.open_classes)
    else:
        raise ParameterError(f"unknown noise kind {kind!r}")

    logger.info(f"Built datasets: {train.num_samples} train ({train.noise_rate:.1%} noisy), "
                f"{test.num_samples} test, {train.num_classes} classes")
    return train, test
