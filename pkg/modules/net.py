#!/usr/bin/env python3
"""
Classifier Network
One-hidden-layer ReLU MLP with softmax output, hand-derived gradients,
weight-normalized cross-entropy, plain SGD and mean-teacher EMA.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NumericError, ParameterError, RunStoreError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "sedlab-mlp"
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "W2", "b2")

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class ModelParams:
    """Weights of the classifier; instances are never mutated in place"""
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        d, h = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape[0] != h or self.b2.shape != (self.W2.shape[1],):
            raise ParameterError("parameter shapes are inconsistent")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    def map(self, fn, other: Optional["ModelParams"] = None) -> "ModelParams":
        if other is None:
            return ModelParams(**{k: fn(v) for k, v in self.arrays().items()})
        o = other.arrays()
        return ModelParams(**{k: fn(v, o[k]) for k, v in self.arrays().items()})

    def equals(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays().values(), other.arrays().values()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())


@dataclass(frozen=True)
class Batch:
    """Minibatch of features, target labels and per-sample weights in [0,1]"""
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        b = self.features.shape[0]
        if b < 1:
            raise ParameterError("a batch needs at least one sample")
        if self.labels.shape != (b,) or self.weights.shape != (b,):
            raise ParameterError("labels and weights need one entry per sample")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ParameterError("batch weights must lie in [0,1]")

    @classmethod
    def unweighted(cls, features: np.ndarray, labels: np.ndarray) -> "Batch":
        return cls(features, labels, np.ones(labels.shape[0]))


def init_params(d: int, h: int, k: int, seed) -> ModelParams:
    """Gaussian weights scaled by 1/sqrt(fan_in); zero biases"""
    if d < 1 or h < 1 or k < 1:
        raise ParameterError("d, h and K must be >= 1")
    rng = np.random.default_rng(seed)
    return ModelParams(
        W1=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, h)),
        b1=np.zeros(h),
        W2=rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, k)),
        b2=np.zeros(k),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def _forward_cache(params: ModelParams, features: np.ndarray):
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != params.W1.shape[0]:
        raise ParameterError(f"expected features of width {params.W1.shape[0]}")
    if not np.all(np.isfinite(features)):
        raise NumericError("non-finite input features")
    z1 = features @ params.W1 + params.b1
    hidden = np.maximum(z1, 0.0)
    logits = hidden @ params.W2 + params.b2
    probs = softmax(logits)
    if not np.all(np.isfinite(probs)):
        raise NumericError("non-finite probabilities in forward pass")
    return features, z1, hidden, probs


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probabilities, one simplex row per sample"""
    return _forward_cache(params, features)[3]


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(forward(params, features), axis=1)


def weighted_ce(probs: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
    """Sum of weight * -log p(label) normalized by the weight sum (0 when the sum is 0)"""
    total = float(np.sum(weights))
    if total == 0.0:
        return 0.0
    picked = probs[np.arange(labels.shape[0]), labels]
    per_sample = -np.log(np.maximum(picked, _TINY))
    return float(np.sum(weights * per_sample) / total)


def loss_and_grad(params: ModelParams, batch: Batch) -> Tuple[float, ModelParams]:
    """weighted_ce of the batch and its analytic gradient"""
    x, z1, hidden, probs = _forward_cache(params, batch.features)
    loss = weighted_ce(probs, batch.labels, batch.weights)
    total = float(np.sum(batch.weights))
    if total == 0.0:
        return 0.0, params.map(np.zeros_like)

    dlogits = probs.copy()
    dlogits[np.arange(batch.labels.shape[0]), batch.labels] -= 1.0
    dlogits *= (batch.weights / total)[:, None]

    dW2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ params.W2.T
    dz1 = dhidden * (z1 > 0)
    dW1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return loss, ModelParams(W1=dW1, b1=db1, W2=dW2, b2=db2)


def composite_step(params: ModelParams,
                   parts: Sequence[Tuple[Batch, float]],
                   lr: float) -> Tuple[ModelParams, float]:
    """
    One SGD step on sum(coef * weighted_ce(batch)) over the given parts

    Returns:
        (updated params, pre-step composite loss)
    """
    if lr < 0:
        raise ParameterError("lr must be >= 0")
    total_loss = 0.0
    grads = None
    for batch, coef in parts:
        loss, g = loss_and_grad(params, batch)
        total_loss += coef * loss
        g = g.map(lambda a: coef * a)
        grads = g if grads is None else grads.map(np.add, g)
    if grads is None:
        return params, 0.0
    if not grads.is_finite():
        raise NumericError("non-finite gradient")
    return params.map(lambda p, g: p - lr * g, grads), total_loss


def sgd_step(params: ModelParams, batch: Batch, lr: float) -> Tuple[ModelParams, float]:
    """One plain SGD step on the batch's weighted cross-entropy"""
    return composite_step(params, [(batch, 1.0)], lr)


def ema_update_teacher(teacher: ModelParams, student: ModelParams, alpha: float) -> ModelParams:
    """teacher' = alpha * teacher + (1 - alpha) * student, per parameter"""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError("alpha must lie in [0,1]")
    if teacher.dims != student.dims:
        raise ParameterError(f"teacher dims {teacher.dims} do not match student dims {student.dims}")
    return teacher.map(lambda t, s: alpha * t + (1.0 - alpha) * s, student)


def evaluate(params: ModelParams, dataset) -> float:
    """Accuracy of argmax predictions against the dataset's true labels"""
    if dataset.num_samples == 0:
        raise ParameterError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(params, dataset.features) == dataset.true_labels))


def save_checkpoint(params: ModelParams, path: Union[str, Path]) -> None:
    """Write params as a versioned JSON document"""
    d, h, k = params.dims
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {"d": d, "h": h, "K": k},
        "arrays": {name: arr.tolist() for name, arr in params.arrays().items()},
    }
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc), encoding="utf-8")
    except OSError as e:
        logger.error(f"Error saving checkpoint {path}: {str(e)}")
        raise RunStoreError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path: Union[str, Path]) -> ModelParams:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading checkpoint {path}: {str(e)}")
        raise RunStoreError(f"cannot read checkpoint {path}: {e}") from e
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise RunStoreError(f"{path} is not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    params = ModelParams(**{name: np.array(doc["arrays"][name], dtype=float) for name in PARAM_NAMES})
    dims = doc["dims"]
    if params.dims != (dims["d"], dims["h"], dims["K"]):
        raise RunStoreError(f"{path}: arrays do not match the dims header")
    return params
