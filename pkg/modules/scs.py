#!/usr/bin/env python3
"""
Self-adaptive Class-balanced Selection
EMA global threshold, per-class local thresholds derived from it, and the
clean/noisy partition of an epoch (threshold pass, agreement mining,
reliability weights).

All functions are state-in/state-out; the trainer owns the single
ThresholdState and updates it once per epoch.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from .errors import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThresholdState:
    """Global threshold and EMA of the per-class mean predicted probability"""
    tau_global: float
    class_prob_ema: np.ndarray
    m: float
    initialized: bool = False

    @classmethod
    def create(cls, num_classes: int, m: float) -> "ThresholdState":
        if not 0.0 <= m <= 1.0:
            raise ParameterError("m must lie in [0,1]")
        return cls(tau_global=0.0, class_prob_ema=np.zeros(num_classes), m=m)


@dataclass(frozen=True)
class Partition:
    """Clean/noisy split of an epoch's sample indices"""
    clean_idx: np.ndarray
    noisy_idx: np.ndarray
    mined_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    reliability: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_clean(self) -> int:
        return int(self.clean_idx.size)

    @property
    def num_noisy(self) -> int:
        return int(self.noisy_idx.size)

    def clean_mask(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        mask[self.clean_idx] = True
        return mask


def epoch_stats(probs: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean max-probability and per-class mean probability over the epoch"""
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ParameterError("epoch_stats needs a non-empty N x K probability matrix")
    return float(np.mean(probs.max(axis=1))), probs.mean(axis=0)


def update_thresholds(state: ThresholdState, stats: Tuple[float, np.ndarray], m: float) -> ThresholdState:
    """EMA-merge epoch statistics into the state; the first call adopts them"""
    if not 0.0 <= m <= 1.0:
        raise ParameterError("m must lie in [0,1]")
    mean_max_prob, class_mean_prob = stats
    class_mean_prob = np.asarray(class_mean_prob, dtype=float)
    if not state.initialized:
        return ThresholdState(tau_global=float(mean_max_prob), class_prob_ema=class_mean_prob.copy(),
                              m=m, initialized=True)
    return ThresholdState(
        tau_global=m * state.tau_global + (1.0 - m) * float(mean_max_prob),
        class_prob_ema=m * state.class_prob_ema + (1.0 - m) * class_mean_prob,
        m=m,
        initialized=True,
    )


def local_thresholds(state: ThresholdState) -> np.ndarray:
    """tau(c) = tau_global * p(c) / max p; tau_global everywhere when all p are zero"""
    if not state.initialized:
        raise ParameterError("threshold state is not initialized")
    peak = float(np.max(state.class_prob_ema))
    if peak <= 0.0:
        return np.full(state.class_prob_ema.shape, state.tau_global)
    return state.tau_global * state.class_prob_ema / peak


def select(probs: np.ndarray, given_labels: np.ndarray, thresholds: np.ndarray) -> Partition:
    """Clean iff the probability of the given label reaches its class threshold"""
    given_prob = probs[np.arange(given_labels.shape[0]), given_labels]
    clean = given_prob >= thresholds[given_labels]
    return Partition(clean_idx=np.flatnonzero(clean), noisy_idx=np.flatnonzero(~clean))


def mine(probs: np.ndarray, given_labels: np.ndarray, partition: Partition) -> Partition:
    """Move noisy samples whose argmax agrees with the given label into the clean set"""
    noisy = partition.noisy_idx
    agrees = np.argmax(probs[noisy], axis=1) == given_labels[noisy] if noisy.size else np.zeros(0, dtype=bool)
    mined = noisy[agrees]
    return Partition(
        clean_idx=np.sort(np.concatenate([partition.clean_idx, mined])),
        noisy_idx=noisy[~agrees],
        mined_idx=np.concatenate([partition.mined_idx, mined]),
    )


def reliability(probs: np.ndarray, given_labels: np.ndarray, clean_idx: np.ndarray) -> np.ndarray:
    """Weight of every clean sample: the probability of its given label"""
    return probs[clean_idx, given_labels[clean_idx]]


class ClassBalancedSelector:
    """
    Selection policy with the threshold ablation switches

    use_local=False uses tau_global for every class; use_global=False uses
    the class EMA probability itself as the class threshold.
    """

    def __init__(self, use_local: bool = True, use_global: bool = True, use_mining: bool = True):
        self.use_local = use_local
        self.use_global = use_global
        self.use_mining = use_mining

    def thresholds(self, state: ThresholdState) -> np.ndarray:
        if not self.use_local:
            return np.full(state.class_prob_ema.shape, state.tau_global)
        if not self.use_global:
            return state.class_prob_ema.copy()
        return local_thresholds(state)

    def partition(self, probs: np.ndarray, given_labels: np.ndarray, state: ThresholdState) -> Partition:
        part = select(probs, given_labels, self.thresholds(state))
        if self.use_mining:
            part = mine(probs, given_labels, part)
        if part.num_clean == 0:
            logger.warning("Selection produced an empty clean subset")
        return replace(part, reliability=reliability(probs, given_labels, part.clean_idx))
