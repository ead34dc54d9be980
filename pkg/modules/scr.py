#!/usr/bin/env python3
"""
Self-adaptive Class-balanced Re-weighting
Mean-teacher label correction and per-class truncated-normal CDF weights of
the correction confidence.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import ndtr

from .errors import ParameterError

logger = logging.getLogger(__name__)

# moments of the uniform distribution on [0,1]; used until a class is first seen
PRIOR_MU = 0.5
PRIOR_VAR = 1.0 / 12.0


@dataclass(frozen=True)
class ClassStats:
    """Per-class EMA mean and variance of correction confidence"""
    mu: np.ndarray
    var: np.ndarray
    m: float
    sigma_floor: float = 1e-3
    seen: np.ndarray = None

    @classmethod
    def create(cls, num_classes: int, m: float, sigma_floor: float = 1e-3) -> "ClassStats":
        if not 0.0 <= m <= 1.0:
            raise ParameterError("m must lie in [0,1]")
        if not sigma_floor > 0:
            raise ParameterError("sigma_floor must be > 0")
        return cls(
            mu=np.full(num_classes, PRIOR_MU),
            var=np.full(num_classes, max(PRIOR_VAR, sigma_floor ** 2)),
            m=m,
            sigma_floor=sigma_floor,
            seen=np.zeros(num_classes, dtype=bool),
        )

    @property
    def initialized(self) -> bool:
        return bool(np.any(self.seen))

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.var)


@dataclass(frozen=True)
class Correction:
    """Teacher labels, their confidence and re-weighting weights for D_noisy"""
    corrected_labels: np.ndarray
    confidence: np.ndarray
    weights: np.ndarray


def correct(teacher_probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Teacher argmax (ties to the lowest index) and its probability"""
    if teacher_probs.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    labels = np.argmax(teacher_probs, axis=1)
    return labels, teacher_probs[np.arange(labels.shape[0]), labels]


def update_class_stats(stats: ClassStats, confidence: np.ndarray, corrected_labels: np.ndarray,
                       m: float) -> ClassStats:
    """
    EMA-merge this epoch's per-class confidence mean and variance

    Classes without samples keep their values; a class seen for the first
    time adopts its batch statistics directly. Variances never drop below
    sigma_floor**2.
    """
    if not 0.0 <= m <= 1.0:
        raise ParameterError("m must lie in [0,1]")
    k = stats.mu.shape[0]
    floor = stats.sigma_floor ** 2
    counts = np.bincount(corrected_labels, minlength=k)[:k].astype(float)
    present = counts > 0
    safe = np.where(present, counts, 1.0)
    batch_mu = np.bincount(corrected_labels, weights=confidence, minlength=k)[:k] / safe
    sq_dev = (confidence - batch_mu[corrected_labels]) ** 2
    batch_var = np.bincount(corrected_labels, weights=sq_dev, minlength=k)[:k] / safe

    fresh = present & ~stats.seen
    merge = present & stats.seen
    mu = stats.mu.copy()
    var = stats.var.copy()
    mu[fresh] = batch_mu[fresh]
    var[fresh] = np.maximum(floor, batch_var[fresh])
    mu[merge] = m * stats.mu[merge] + (1.0 - m) * batch_mu[merge]
    var[merge] = np.maximum(floor, m * stats.var[merge] + (1.0 - m) * batch_var[merge])
    return ClassStats(mu=mu, var=var, m=m, sigma_floor=stats.sigma_floor, seen=stats.seen | present)


def tn_cdf(x, mu, sigma):
    """
    CDF of the normal N(mu, sigma^2) truncated to [0,1]

    Vectorized over x, mu and sigma; x is clipped into [0,1] so the endpoints
    map exactly to 0 and 1.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ParameterError("sigma must be > 0")
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    mu = np.asarray(mu, dtype=float)
    lower = ndtr((0.0 - mu) / sigma)
    upper = ndtr((1.0 - mu) / sigma)
    span = upper - lower
    if np.any(span <= 0):
        raise ParameterError("truncation interval carries no probability mass for these mu/sigma")
    out = np.clip((ndtr((x - mu) / sigma) - lower) / span, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def weights(confidence: np.ndarray, corrected_labels: np.ndarray, stats: ClassStats) -> np.ndarray:
    """Per-sample weight: truncated-normal CDF under the corrected class's stats"""
    if confidence.shape[0] == 0:
        return np.zeros(0)
    return np.asarray(tn_cdf(confidence, stats.mu[corrected_labels], stats.sigma[corrected_labels]))


def correction_for(teacher_probs: np.ndarray, stats: ClassStats, reweight: bool = True) -> Correction:
    labels, conf = correct(teacher_probs)
    w = weights(conf, labels, stats) if reweight else np.ones(conf.shape[0])
    return Correction(corrected_labels=labels, confidence=conf, weights=w)
