#!/usr/bin/env python3
"""
Ablation Grids
Built-in variant grids (component ablation, m and alpha sweeps, noise
conditions), multi-seed execution and the ablation.csv comparison table.
"""

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from . import trainer
from .config import TrainConfig, config_from_dict, config_to_dict, merge_overrides
from .errors import ParameterError
from .run_store import RunStore

logger = logging.getLogger(__name__)

SWEEP_VALUES = (0.85, 0.90, 0.95, 0.99, 0.999)
# EMA factor held fixed while the other one is swept
SWEEP_FIXED = 0.85

_OFF = {"use_scs": False, "use_scr": False, "use_cr": False}

ABLATION_COLUMNS = ("variant", "label", "n_seeds", "acc_A_mean", "acc_A_sd", "acc_B_mean", "acc_B_sd",
                    "best_acc_A_mean", "precision_mean", "dataset_hashes")


@dataclass(frozen=True)
class Variant:
    name: str
    label: str
    overrides: Dict[str, Any] = field(default_factory=dict)


def _components() -> List[Variant]:
    def only(**on):
        return {**_OFF, **on}

    return [
        Variant("standard", "Standard", dict(_OFF)),
        Variant("scs_wo_local", "Standard+SCS w/o local threshold", only(use_scs=True, use_local_thresholds=False)),
        Variant("scs_wo_global", "Standard+SCS w/o global threshold", only(use_scs=True, use_global_thresholds=False)),
        Variant("scs_wo_ema", "Standard+SCS w/o EMA", only(use_scs=True, use_ema=False)),
        Variant("scs", "Standard+SCS", only(use_scs=True)),
        Variant("scr", "Standard+SCR", only(use_scr=True)),
        Variant("cr", "Standard+CR", only(use_cr=True)),
        Variant("scs_scr_wo_reweighting", "Standard+SCS+SCR w/o re-weighting",
                only(use_scs=True, use_scr=True, use_reweighting=False)),
        Variant("scs_scr_wo_ema", "Standard+SCS+SCR w/o EMA", only(use_scs=True, use_scr=True, use_ema=False)),
        Variant("scs_scr", "Standard+SCS+SCR", only(use_scs=True, use_scr=True)),
        Variant("scs_cr", "Standard+SCS+CR", only(use_scs=True, use_cr=True)),
        Variant("scr_cr", "Standard+SCR+CR", only(use_scr=True, use_cr=True)),
        Variant("full", "Standard+SCS+SCR+CR", only(use_scs=True, use_scr=True, use_cr=True)),
    ]


def _m_sweep() -> List[Variant]:
    return [Variant(f"m_{m}", f"m={m}, alpha={SWEEP_FIXED}", {"m": m, "alpha": SWEEP_FIXED})
            for m in SWEEP_VALUES]


def _alpha_sweep() -> List[Variant]:
    return [Variant(f"alpha_{a}", f"m={SWEEP_FIXED}, alpha={a}", {"m": SWEEP_FIXED, "alpha": a})
            for a in SWEEP_VALUES]


def _noise_sweep(config: TrainConfig) -> List[Variant]:
    k = config.data.num_classes
    open_classes = list(range(k - max(1, k // 5), k))
    variants = [Variant(f"sym_{int(r * 100)}", f"Sym-{int(r * 100)}%",
                        {"noise": {"kind": "symmetric", "rate": r, "open_classes": []}})
                for r in (0.2, 0.4, 0.8)]
    variants += [Variant(f"asym_{int(r * 100)}", f"Asym-{int(r * 100)}%",
                         {"noise": {"kind": "asymmetric", "rate": r, "open_classes": []}})
                 for r in (0.2, 0.4)]
    if k - len(open_classes) >= 2:
        variants.append(Variant("openset_20", "Open-set, Sym-20%",
                                {"noise": {"kind": "openset", "rate": 0.2, "open_classes": open_classes}}))
    return variants


GRIDS = {
    "components": lambda config: _components(),
    "m-sweep": lambda config: _m_sweep(),
    "alpha-sweep": lambda config: _alpha_sweep(),
    "noise-sweep": _noise_sweep,
}


def resolve_grid(selector: str, config: TrainConfig) -> List[Variant]:
    """
    Variants named by a grid selector

    Args:
        selector: "<grid>" or "<grid>:<variant>,<variant>"
        config: base config (the noise sweep sizes its open classes from it)
    """
    name, _, picked = selector.partition(":")
    if name not in GRIDS:
        raise ParameterError(f"unknown grid {name!r}; available grids: {', '.join(sorted(GRIDS))}")
    variants = GRIDS[name](config)
    if picked:
        wanted = [v.strip() for v in picked.split(",") if v.strip()]
        by_name = {v.name: v for v in variants}
        missing = [w for w in wanted if w not in by_name]
        if missing:
            raise ParameterError(f"grid {name!r} has no variant(s) {', '.join(missing)}; "
                                 f"available: {', '.join(by_name)}")
        variants = [by_name[w] for w in wanted]
    return variants


@dataclass
class AblationResult:
    grid: str
    rows: List[Dict[str, Any]]
    run_dirs: Dict[str, List[Path]]
    table_path: Optional[Path] = None


def _run_variant(config_dict: Dict[str, Any], out_dir: str, run_name: str) -> Dict[str, Any]:
    """Worker: run one (variant, seed) and write its run directory"""
    config = config_from_dict(config_dict)
    report = trainer.run(config, checkpoint_dir=Path(out_dir) / run_name / "checkpoints")
    store = RunStore(out_dir)
    store.save_run(report, run_name, index=False)
    return {"name": run_name, **RunStore.describe(report)}


def _sd(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def ablation_table(variants: Sequence[Variant], results: Dict[str, List[Dict[str, Any]]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_COLUMNS)
    for variant in variants:
        runs = results[variant.name]
        acc_a = [r["final"]["test_acc_A"] for r in runs]
        acc_b = [r["final"]["test_acc_B"] for r in runs]
        best_a = [r["best"]["test_acc_A"] for r in runs]
        prec = [r["final"]["sel_precision"] for r in runs if r["final"]["sel_precision"] is not None]
        writer.writerow([
            variant.name, variant.label, len(runs),
            f"{np.mean(acc_a):.6f}", f"{_sd(acc_a):.6f}",
            f"{np.mean(acc_b):.6f}", f"{_sd(acc_b):.6f}",
            f"{np.mean(best_a):.6f}",
            f"{np.mean(prec):.6f}" if prec else "",
            " ".join(r["dataset_hash"][:16] for r in runs),
        ])
    return buf.getvalue()


def ablate(config: TrainConfig,
           selector: str,
           out_dir: Union[str, Path],
           seeds: int = 3,
           workers: int = 1) -> AblationResult:
    """
    Run every variant of a grid over `seeds` consecutive seeds

    Run directories are <out>/<variant>/seed_<seed>; ablation.csv and the
    index are written once all runs are complete.
    """
    if seeds < 1:
        raise ParameterError("seeds must be >= 1")
    variants = resolve_grid(selector, config)
    store = RunStore(out_dir)
    jobs = []
    for variant in variants:
        for i in range(seeds):
            seed = config.seed + i
            variant_config = merge_overrides(config, {**variant.overrides, "seed": seed})
            jobs.append((variant.name, config_to_dict(variant_config), f"{variant.name}/seed_{seed}"))
    logger.info(f"Ablation {selector}: {len(variants)} variants x {seeds} seeds on {workers} worker(s)")

    if workers <= 1 or len(jobs) == 1:
        outcomes = [_run_variant(cfg, str(store.base_dir), run_name) for _, cfg, run_name in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_variant, cfg, str(store.base_dir), run_name) for _, cfg, run_name in jobs]
            outcomes = [f.result() for f in futures]

    results: Dict[str, List[Dict[str, Any]]] = {v.name: [] for v in variants}
    run_dirs: Dict[str, List[Path]] = {v.name: [] for v in variants}
    for (variant_name, _, run_name), outcome in zip(jobs, outcomes):
        results[variant_name].append(outcome)
        run_dirs[variant_name].append(store.base_dir / run_name)
        store.record_run(run_name, {k: v for k, v in outcome.items() if k != "name"})

    table_path = store.base_dir / "ablation.csv"
    try:
        table_path.write_text(ablation_table(variants, results), encoding="utf-8")
    except OSError as e:
        logger.error(f"Error writing ablation table {table_path}: {str(e)}")
        raise
    logger.info(f"Wrote {table_path}")
    grid_name = selector.partition(":")[0]
    return AblationResult(grid=grid_name, rows=[{"variant": v.name, "runs": results[v.name]} for v in variants],
                          run_dirs=run_dirs, table_path=table_path)
