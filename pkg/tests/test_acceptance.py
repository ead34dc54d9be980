"""
Desk-scale training experiments: robustness against plain CE, component and
threshold orderings, and the memorization effect. Minutes per seed; run with
`pytest -m slow`.
"""

import numpy as np
import pytest

from modules import trainer
from modules.ablation import resolve_grid
from modules.config import TrainConfig, merge_overrides

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


def _runs(config, overrides, seeds=SEEDS):
    return [trainer.run(merge_overrides(config, {**overrides, "seed": s})) for s in seeds]


def _mean_final(config, overrides, seeds=SEEDS):
    return float(np.mean([r.final_acc_A for r in _runs(config, overrides, seeds)]))


def _components():
    return {v.name: v.overrides for v in resolve_grid("components", TrainConfig())}


def test_robust_network_beats_plain_ce_under_symmetric_noise():
    config = TrainConfig()
    gaps, precisions = [], []
    for seed in SEEDS:
        report = trainer.run(merge_overrides(config, {"seed": seed}))
        gaps.append(report.final_acc_A - report.final_acc_B)
        precisions.append(report.final_precision)
    assert np.mean(gaps) >= 0.08
    assert np.mean(precisions) >= 0.90


def test_components_improve_in_order():
    config = TrainConfig()
    grid = _components()
    acc = {name: _mean_final(config, grid[name]) for name in ("standard", "scs", "scs_scr", "full")}
    assert acc["full"] >= acc["scs_scr"] - 0.005
    assert acc["scs_scr"] >= acc["scs"] - 0.005
    assert acc["scs"] >= acc["standard"] - 0.005
    assert acc["full"] - acc["standard"] >= 0.05


HARD_CLASS = {
    "data": {"num_classes": 5, "dim": 16, "train_per_class": 1000, "test_per_class": 1000,
             "hard_classes": [0], "hard_spread_factor": 2.0},
    "noise": {"kind": "symmetric", "rate": 0.6},
}


def test_threshold_parts_each_help_on_a_hard_class():
    # five classes so one hard class carries a fifth of the accuracy
    config = merge_overrides(TrainConfig(), HARD_CLASS)
    grid = _components()
    scs_runs = _runs(config, grid["scs"])
    scs_acc = float(np.mean([r.final_acc_A for r in scs_runs]))

    final_taus = np.mean([r.trajectories["tau_local"][-1] for r in scs_runs], axis=0)
    assert int(np.argmin(final_taus)) == 0

    ablated = {name: _mean_final(config, grid[name]) for name in ("scs_wo_local", "scs_wo_global", "scs_wo_ema")}
    for name, acc in ablated.items():
        assert scs_acc >= acc, name
    assert scs_acc - ablated["scs_wo_local"] >= 0.02


def test_memorization_hits_plain_ce_but_not_the_robust_network():
    config = merge_overrides(TrainConfig(), {"noise": {"kind": "symmetric", "rate": 0.6}})
    for seed in SEEDS:
        report = trainer.run(merge_overrides(config, {"seed": seed}))
        assert report.best_acc_B - report.final_acc_B >= 0.03
        assert report.best_acc_A - report.final_acc_A <= 0.01
