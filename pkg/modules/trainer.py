#!/usr/bin/env python3
"""
SED Trainer
Warm-up with plain cross-entropy, then per-epoch selection (SCS), mean-teacher
correction with re-weighting (SCR) and consistency regularization (CR) for the
robust network, a plain-CE baseline network trained on the same batches, and
the teacher EMA.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import metrics, net, scr, scs
from .config import TrainConfig, config_to_dict
from .errors import ParameterError
from .metrics import EpochLog
from .net import Batch, ModelParams
from .progress_tracker import ProgressTracker
from .synthdata import Dataset, build_datasets, dataset_hash

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunSeeds:
    """Generator seeds of a run, all derived from the config seed"""
    data: int
    init: np.random.SeedSequence
    shuffle: np.random.SeedSequence


def derive_seeds(seed: int) -> RunSeeds:
    # data seeds come from SeedSequence(seed) inside build_datasets; training
    # streams use a separate entropy pool so they never collide with them
    init, shuffle = np.random.SeedSequence([seed, 0x5ED]).spawn(2)
    return RunSeeds(data=seed, init=init, shuffle=shuffle)


@dataclass
class NetworkState:
    """Everything that evolves across epochs"""
    params_a: ModelParams
    params_b: ModelParams
    teacher: Optional[ModelParams]
    thresholds: scs.ThresholdState
    class_stats: scr.ClassStats


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    dc: float
    dn: float
    dreg: float


@dataclass
class RunReport:
    """Per-epoch logs plus everything summary.json echoes"""
    epochs: List[EpochLog]
    config: Dict[str, Any]
    dataset_hash: str
    trajectories: Dict[str, list]
    started_at: str = ""
    final_state: Optional[NetworkState] = field(default=None, repr=False, compare=False)

    @property
    def final_acc_A(self) -> Optional[float]:
        return self.epochs[-1].test_acc_A if self.epochs else None

    @property
    def final_acc_B(self) -> Optional[float]:
        return self.epochs[-1].test_acc_B if self.epochs else None

    @property
    def best_acc_A(self) -> Optional[float]:
        return max(e.test_acc_A for e in self.epochs) if self.epochs else None

    @property
    def best_acc_B(self) -> Optional[float]:
        return max(e.test_acc_B for e in self.epochs) if self.epochs else None

    @property
    def final_precision(self) -> Optional[float]:
        return self.epochs[-1].sel_precision if self.epochs else None

    @property
    def final_recall(self) -> Optional[float]:
        return self.epochs[-1].sel_recall if self.epochs else None


def combine_losses(dc: float, dn: float, dreg: float, lambda_n: float, lambda_r: float) -> float:
    """L_total = L_Dc + lambda_n * L_Dn + lambda_r * L_Dreg"""
    return dc + lambda_n * dn + lambda_r * dreg


def loss_parts(clean_batch: Optional[Batch], noisy_batch: Optional[Batch], reg_batch: Optional[Batch],
               lambda_n: float, lambda_r: float) -> List[Tuple[Batch, float]]:
    """The (batch, coefficient) terms of L_total; absent components are skipped"""
    parts = []
    if clean_batch is not None:
        parts.append((clean_batch, 1.0))
    if noisy_batch is not None:
        parts.append((noisy_batch, lambda_n))
    if reg_batch is not None:
        parts.append((reg_batch, lambda_r))
    return parts


def total_loss(params: ModelParams,
               clean_batch: Optional[Batch],
               noisy_batch: Optional[Batch],
               reg_batch: Optional[Batch],
               lambda_n: float = 1.0,
               lambda_r: float = 1.0) -> LossBreakdown:
    """
    Three-part loss of the robust network

    Args:
        clean_batch: clean samples, given labels, reliability weights
        noisy_batch: noisy samples, teacher-corrected labels, truncated-normal weights
        reg_batch: clean samples, teacher-corrected labels, truncated-normal weights

    Returns:
        LossBreakdown with the weighted total and each component (0 when absent)
    """
    def component(batch: Optional[Batch]) -> float:
        if batch is None:
            return 0.0
        return net.weighted_ce(net.forward(params, batch.features), batch.labels, batch.weights)

    dc, dn, dreg = component(clean_batch), component(noisy_batch), component(reg_batch)
    return LossBreakdown(total=combine_losses(dc, dn, dreg, lambda_n, lambda_r), dc=dc, dn=dn, dreg=dreg)


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.shape[0], batch_size):
        yield order[start:start + batch_size]


def _subset_batch(features: np.ndarray, labels: np.ndarray, weights: np.ndarray,
                  idx: np.ndarray) -> Optional[Batch]:
    if idx.size == 0:
        return None
    return Batch(features[idx], labels[idx], weights[idx])


def warmup_epoch(params_a: ModelParams, params_b: ModelParams, dataset: Dataset, config: TrainConfig,
                 order: np.ndarray) -> Tuple[ModelParams, ModelParams, float]:
    """
    One plain-CE pass of both networks over the shuffled training set

    Returns:
        (params_a', params_b', mean pre-step loss of params_a)
    """
    losses = []
    for idx in _batches(order, config.batch_size):
        batch = Batch.unweighted(dataset.features[idx], dataset.given_labels[idx])
        params_a, loss_a = net.sgd_step(params_a, batch, config.lr)
        params_b, _ = net.sgd_step(params_b, batch, config.lr)
        losses.append(loss_a)
    return params_a, params_b, float(np.mean(losses)) if losses else 0.0


@dataclass(frozen=True)
class SedEpochResult:
    partition: scs.Partition
    thresholds: np.ndarray
    losses: LossBreakdown


def sed_epoch(state: NetworkState, dataset: Dataset, config: TrainConfig,
              order: np.ndarray) -> Tuple[NetworkState, SedEpochResult]:
    """
    One SED epoch

    Selection statistics come from a full inference pass of the robust
    network at epoch start, label correction from the teacher; the robust
    network then trains on the three-part loss, the baseline on plain CE over
    the same batches, and the teacher tracks the robust network by EMA.
    """
    n, k = dataset.num_samples, dataset.num_classes
    x, given = dataset.features, dataset.given_labels
    m_eff = config.m if config.use_ema else 0.0
    teacher = state.teacher if state.teacher is not None else state.params_a.copy()

    # selection
    thresholds_state = state.thresholds
    if config.use_scs:
        probs_a = net.forward(state.params_a, x)
        thresholds_state = scs.update_thresholds(thresholds_state, scs.epoch_stats(probs_a), m_eff)
        selector = scs.ClassBalancedSelector(config.use_local_thresholds, config.use_global_thresholds,
                                             config.use_mining)
        taus = selector.thresholds(thresholds_state)
        partition = selector.partition(probs_a, given, thresholds_state)
    else:
        taus = np.zeros(k)
        everything = np.arange(n)
        partition = scs.Partition(clean_idx=everything, noisy_idx=np.zeros(0, dtype=np.int64),
                                  reliability=np.ones(n))
    clean_mask = partition.clean_mask(n)
    reliability_full = np.zeros(n)
    reliability_full[partition.clean_idx] = partition.reliability

    # correction and re-weighting
    stats = state.class_stats
    corrected = np.zeros(n, dtype=np.int64)
    tn_weights = np.ones(n)
    target_mask = np.zeros(n, dtype=bool)
    if config.use_scr or config.use_cr:
        corrected, confidence = scr.correct(net.forward(teacher, x))
        if config.use_scr:
            # without selection every sample is a correction target
            target_mask = ~clean_mask if config.use_scs else np.ones(n, dtype=bool)
            stat_idx = np.flatnonzero(target_mask)
        else:
            stat_idx = partition.clean_idx
        stats = scr.update_class_stats(stats, confidence[stat_idx], corrected[stat_idx], m_eff)
        if config.use_reweighting:
            tn_weights = scr.weights(confidence, corrected, stats)

    if partition.num_clean == 0:
        logger.warning("Empty clean subset: L_Dc and L_Dreg contribute 0 this epoch")

    # updates
    params_a, params_b = state.params_a, state.params_b
    sums = np.zeros(3)
    counts = np.zeros(3)
    for idx in _batches(order, config.batch_size):
        clean_idx = idx[clean_mask[idx]]
        clean_batch = _subset_batch(x, given, reliability_full, clean_idx)
        noisy_batch = _subset_batch(x, corrected, tn_weights, idx[target_mask[idx]]) if config.use_scr else None
        reg_batch = _subset_batch(x, corrected, tn_weights, clean_idx) if config.use_cr else None

        parts = loss_parts(clean_batch, noisy_batch, reg_batch, config.lambda_n, config.lambda_r)
        for slot, batch in enumerate((clean_batch, noisy_batch, reg_batch)):
            if batch is not None:
                sums[slot] += net.weighted_ce(net.forward(params_a, batch.features), batch.labels, batch.weights)
                counts[slot] += 1
        params_a, _ = net.composite_step(params_a, parts, config.lr)
        params_b, _ = net.sgd_step(params_b, Batch.unweighted(x[idx], given[idx]), config.lr)

    teacher = net.ema_update_teacher(teacher, params_a, config.alpha)
    means = np.divide(sums, counts, out=np.zeros(3), where=counts > 0)
    losses = LossBreakdown(total=combine_losses(means[0], means[1], means[2], config.lambda_n, config.lambda_r),
                           dc=float(means[0]), dn=float(means[1]), dreg=float(means[2]))
    new_state = NetworkState(params_a=params_a, params_b=params_b, teacher=teacher,
                             thresholds=thresholds_state, class_stats=stats)
    return new_state, SedEpochResult(partition=partition, thresholds=taus, losses=losses)


def _selection_metrics(dataset: Dataset, partition: scs.Partition):
    if not dataset.has_oracle:
        return None, None, None
    mask = dataset.clean_mask
    unmined = np.setdiff1d(partition.clean_idx, partition.mined_idx)
    return (metrics.selection_precision(partition.clean_idx, mask),
            metrics.selection_recall(partition.clean_idx, mask),
            metrics.selection_precision(unmined, mask))


class SEDTrainer:
    """Runs warm-up and SED epochs for one configuration"""

    def __init__(self,
                 config: TrainConfig,
                 progress: Optional[ProgressTracker] = None,
                 checkpoint_dir: Optional[Union[str, Path]] = None):
        self.config = config
        self.progress = progress
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    def _evaluate(self, state: NetworkState, test: Dataset) -> Tuple[float, float]:
        return net.evaluate(state.params_a, test), net.evaluate(state.params_b, test)

    def _checkpoint(self, epoch: int, state: NetworkState):
        every = self.config.checkpoint_every
        if self.checkpoint_dir is None or every <= 0 or epoch % every:
            return
        net.save_checkpoint(state.params_a, self.checkpoint_dir / f"epoch_{epoch:04d}_A.json")
        net.save_checkpoint(state.params_b, self.checkpoint_dir / f"epoch_{epoch:04d}_B.json")
        if state.teacher is not None:
            net.save_checkpoint(state.teacher, self.checkpoint_dir / f"epoch_{epoch:04d}_teacher.json")
        logger.debug(f"Saved checkpoints for epoch {epoch}")

    def run(self, datasets: Optional[Tuple[Dataset, Dataset]] = None) -> RunReport:
        """
        Execute warm-up then SED epochs

        Args:
            datasets: optional prebuilt (train, test); built from the config otherwise

        Returns:
            RunReport with exactly total_epochs epoch logs
        """
        config = self.config
        started_at = datetime.now().isoformat()
        seeds = derive_seeds(config.seed)
        progress = self.progress

        if progress:
            progress.start_stage("data")
        train, test = datasets if datasets is not None else build_datasets(config.data, config.noise, seeds.data)
        if train.num_samples == 0 or test.num_samples == 0:
            raise ParameterError("train and test splits must be non-empty")
        if progress:
            progress.complete_stage("data")

        k = train.num_classes
        init = net.init_params(train.dim, config.hidden, k, seeds.init)
        state = NetworkState(
            params_a=init,
            params_b=init.copy(),
            teacher=None,
            thresholds=scs.ThresholdState.create(k, config.m),
            class_stats=scr.ClassStats.create(k, config.m, config.sigma_floor),
        )
        shuffle_rng = np.random.default_rng(seeds.shuffle)
        all_idx = np.arange(train.num_samples)
        full_balance = metrics.class_balance(all_idx, train.given_labels, k)
        warm_precision = float(np.mean(train.clean_mask)) if train.has_oracle else None

        epochs: List[EpochLog] = []
        trajectories: Dict[str, list] = {"tau_global": [], "tau_local": [], "mu": [], "sigma": []}

        for epoch in range(1, config.total_epochs + 1):
            order = shuffle_rng.permutation(train.num_samples)
            if epoch <= config.warmup_epochs:
                if epoch == 1 and progress:
                    progress.start_stage("warmup")
                params_a, params_b, loss = warmup_epoch(state.params_a, state.params_b, train, config, order)
                state = NetworkState(params_a, params_b, None, state.thresholds, state.class_stats)
                acc_a, acc_b = self._evaluate(state, test)
                log = EpochLog(
                    epoch=epoch, test_acc_A=acc_a, test_acc_B=acc_b,
                    sel_precision=warm_precision, sel_recall=1.0 if train.has_oracle else None,
                    class_balance=full_balance, loss_dc=loss, loss_dn=0.0, loss_dreg=0.0,
                    tau_global=0.0, tau_local_mean=0.0, mu_mean=0.0, sigma_mean=0.0,
                    sel_precision_unmined=warm_precision, n_clean=train.num_samples, n_mined=0,
                )
                taus = np.zeros(k)
                stage = "warmup"
            else:
                if epoch == config.warmup_epochs + 1:
                    if progress:
                        if config.warmup_epochs:
                            progress.complete_stage("warmup")
                        progress.start_stage("sed")
                    state.teacher = state.params_a.copy()
                state, result = sed_epoch(state, train, config, order)
                acc_a, acc_b = self._evaluate(state, test)
                precision, recall, unmined = _selection_metrics(train, result.partition)
                part = result.partition
                taus = result.thresholds
                log = EpochLog(
                    epoch=epoch, test_acc_A=acc_a, test_acc_B=acc_b,
                    sel_precision=precision, sel_recall=recall,
                    class_balance=metrics.class_balance(part.clean_idx, train.given_labels, k),
                    loss_dc=result.losses.dc, loss_dn=result.losses.dn, loss_dreg=result.losses.dreg,
                    tau_global=state.thresholds.tau_global if config.use_scs else 0.0,
                    tau_local_mean=float(np.mean(taus)),
                    mu_mean=float(np.mean(state.class_stats.mu)),
                    sigma_mean=float(np.mean(state.class_stats.sigma)),
                    sel_precision_unmined=unmined, n_clean=part.num_clean, n_mined=int(part.mined_idx.size),
                )
                stage = "sed"

            epochs.append(log)
            trajectories["tau_global"].append(log.tau_global)
            trajectories["tau_local"].append([float(t) for t in taus])
            trajectories["mu"].append([float(v) for v in state.class_stats.mu])
            trajectories["sigma"].append([float(v) for v in state.class_stats.sigma])
            self._checkpoint(epoch, state)
            logger.info(f"epoch {epoch}/{config.total_epochs} [{stage}] acc_A={acc_a:.4f} acc_B={acc_b:.4f} "
                        f"clean={log.n_clean}")
            if progress:
                progress.advance(stage, details={"epoch": epoch})
                progress.update_statistics(epochs_done=epoch, last_acc_A=acc_a, last_acc_B=acc_b,
                                           last_precision=log.sel_precision)

        if progress:
            if config.total_epochs > config.warmup_epochs:
                progress.complete_stage("sed")
            elif config.warmup_epochs:
                progress.complete_stage("warmup")

        return RunReport(
            epochs=epochs,
            config=config_to_dict(config),
            dataset_hash=dataset_hash(train),
            trajectories=trajectories,
            started_at=started_at,
            final_state=state,
        )


def run(config: TrainConfig,
        datasets: Optional[Tuple[Dataset, Dataset]] = None,
        progress: Optional[ProgressTracker] = None,
        checkpoint_dir: Optional[Union[str, Path]] = None) -> RunReport:
    """Run one configuration; the report is a pure function of the config"""
    return SEDTrainer(config, progress=progress, checkpoint_dir=checkpoint_dir).run(datasets)
