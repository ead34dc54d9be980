#!/usr/bin/env python3
"""
Run Metrics and Reports
Selection quality against the ground-truth noise mask, per-epoch logs, and
the run directory outputs: epochs.csv, summary.json and curves.svg.

summary.json keys:
    format_version   integer layout version
    config           echo of the run configuration
    dataset_hash     sha256 of the noisy training split
    num_epochs       number of epoch rows
    warmup_epochs    warm-up epoch count
    final            test_acc_A, test_acc_B, sel_precision, sel_recall of the last epoch
    best             test_acc_A, test_acc_B and the (1-based) epochs they were reached
    trajectories     tau_global, tau_local, mu, sigma per epoch (per class for the last three)
    started_at       ISO timestamp; the only field that differs between identical runs
"""

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, fields
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ParameterError, RunStoreError  # noqa: E402

logger = logging.getLogger(__name__)

SUMMARY_FORMAT_VERSION = 1

EPOCH_COLUMNS = (
    "epoch", "test_acc_A", "test_acc_B", "sel_precision", "sel_recall", "class_balance",
    "loss_dc", "loss_dn", "loss_dreg", "tau_global", "tau_local_mean", "mu_mean", "sigma_mean",
    "sel_precision_unmined", "n_clean", "n_mined",
)
RATIO_COLUMNS = ("test_acc_A", "test_acc_B", "sel_precision", "sel_recall", "class_balance",
                 "sel_precision_unmined")
_INT_COLUMNS = ("epoch", "n_clean", "n_mined")


@dataclass(frozen=True)
class EpochLog:
    """One row of epochs.csv"""
    epoch: int
    test_acc_A: float
    test_acc_B: float
    sel_precision: Optional[float]
    sel_recall: Optional[float]
    class_balance: float
    loss_dc: float
    loss_dn: float
    loss_dreg: float
    tau_global: float
    tau_local_mean: float
    mu_mean: float
    sigma_mean: float
    sel_precision_unmined: Optional[float] = None
    n_clean: int = 0
    n_mined: int = 0


def selection_precision(clean_idx: np.ndarray, clean_mask: np.ndarray) -> float:
    """Fraction of selected samples that are truly clean; 1.0 for an empty selection"""
    if clean_idx.size == 0:
        logger.warning("Empty selection; precision reported as 1.0")
        return 1.0
    return float(np.count_nonzero(clean_mask[clean_idx]) / clean_idx.size)


def selection_recall(clean_idx: np.ndarray, clean_mask: np.ndarray) -> float:
    """Fraction of truly clean samples that were selected; 1.0 when nothing is clean"""
    total = int(np.count_nonzero(clean_mask))
    if total == 0:
        return 1.0
    return float(np.count_nonzero(clean_mask[clean_idx]) / total)


def class_balance(clean_idx: np.ndarray, given_labels: np.ndarray, num_classes: int) -> float:
    """Normalized entropy H(p)/ln K of the selected samples' class distribution"""
    if num_classes < 2:
        raise ParameterError("class_balance needs K >= 2")
    if clean_idx.size == 0:
        logger.warning("Empty selection; class balance reported as 0.0")
        return 0.0
    counts = np.bincount(given_labels[clean_idx], minlength=num_classes).astype(float)
    p = counts[counts > 0] / counts.sum()
    return float(max(0.0, -np.sum(p * np.log(p)) / np.log(num_classes)))


def _format(column: str, value: Any) -> str:
    if value is None:
        return ""
    if column in _INT_COLUMNS:
        return str(int(value))
    return f"{float(value):.6f}"


def epochs_to_csv(epochs: Sequence[EpochLog]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EPOCH_COLUMNS)
    for log in epochs:
        row = asdict(log)
        writer.writerow([_format(c, row[c]) for c in EPOCH_COLUMNS])
    return buf.getvalue()


def read_epochs_csv(path: Union[str, Path]) -> List[EpochLog]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        logger.error(f"Error reading {path}: {str(e)}")
        raise RunStoreError(f"cannot read {path}: {e}") from e

    names = {f.name for f in fields(EpochLog)}
    logs = []
    for row in rows:
        values: Dict[str, Any] = {}
        for column in EPOCH_COLUMNS:
            raw = row.get(column, "")
            if column not in names:
                continue
            if raw in ("", None):
                values[column] = None if column not in _INT_COLUMNS else 0
            elif column in _INT_COLUMNS:
                values[column] = int(raw)
            else:
                values[column] = float(raw)
        logs.append(EpochLog(**values))
    return logs


def summarize(epochs: Sequence[EpochLog]) -> Dict[str, Any]:
    """Final and best metrics of an epoch series"""
    if not epochs:
        return {
            "final": {"test_acc_A": None, "test_acc_B": None, "sel_precision": None, "sel_recall": None},
            "best": {"test_acc_A": None, "test_acc_B": None, "epoch_A": None, "epoch_B": None},
        }
    acc_a = [e.test_acc_A for e in epochs]
    acc_b = [e.test_acc_B for e in epochs]
    best_a = int(np.argmax(acc_a))
    best_b = int(np.argmax(acc_b))
    last = epochs[-1]
    return {
        "final": {
            "test_acc_A": last.test_acc_A,
            "test_acc_B": last.test_acc_B,
            "sel_precision": last.sel_precision,
            "sel_recall": last.sel_recall,
        },
        "best": {
            "test_acc_A": acc_a[best_a],
            "test_acc_B": acc_b[best_b],
            "epoch_A": epochs[best_a].epoch,
            "epoch_B": epochs[best_b].epoch,
        },
    }


def build_summary(report) -> Dict[str, Any]:
    summary = {
        "format_version": SUMMARY_FORMAT_VERSION,
        "config": report.config,
        "dataset_hash": report.dataset_hash,
        "num_epochs": len(report.epochs),
        "warmup_epochs": report.config.get("warmup_epochs"),
        "trajectories": report.trajectories,
        "started_at": report.started_at or datetime.now().isoformat(),
    }
    summary.update(summarize(report.epochs))
    return summary


def render_curves_svg(epochs: Sequence[EpochLog], title: str = "") -> str:
    """Accuracy and selection-precision curves as a self-contained SVG document"""
    x = [e.epoch for e in epochs]
    with plt.rc_context({"svg.hashsalt": "sedlab", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(7, 4))
        try:
            ax.plot(x, [e.test_acc_A for e in epochs], label="test acc (robust)", color="#1f77b4")
            ax.plot(x, [e.test_acc_B for e in epochs], label="test acc (baseline CE)", color="#d62728")
            prec = [e.sel_precision if e.sel_precision is not None else np.nan for e in epochs]
            ax.plot(x, prec, label="selection precision", color="#2ca02c", linestyle="--")
            ax.set_xlabel("epoch")
            ax.set_ylabel("ratio")
            ax.set_ylim(0.0, 1.02)
            if title:
                ax.set_title(title)
            ax.grid(alpha=0.3)
            ax.legend(loc="lower right")
            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return buf.getvalue()


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}")
        raise RunStoreError(f"cannot write {path}: {e}") from e


def write_summary(summary: Dict[str, Any], path: Union[str, Path]) -> None:
    _write_text(Path(path), json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_run(report, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write a run's report files

    Args:
        report: RunReport from the trainer
        out_dir: run directory (created when missing)

    Returns:
        Mapping of file role to written path
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Error creating run directory {out_dir}: {str(e)}")
        raise RunStoreError(f"cannot create {out_dir}: {e}") from e

    paths = {
        "epochs": out_dir / "epochs.csv",
        "summary": out_dir / "summary.json",
        "curves": out_dir / "curves.svg",
    }
    _write_text(paths["epochs"], epochs_to_csv(report.epochs))
    write_summary(build_summary(report), paths["summary"])
    _write_text(paths["curves"], render_curves_svg(report.epochs))
    logger.info(f"Wrote {len(report.epochs)} epoch logs to {out_dir}")
    return paths


def regenerate_report(run_dir: Union[str, Path]) -> Dict[str, Path]:
    """Re-emit summary.json and curves.svg from a run directory's epochs.csv"""
    run_dir = Path(run_dir)
    epochs_path = run_dir / "epochs.csv"
    if not epochs_path.is_file():
        raise RunStoreError(f"no epochs.csv in {run_dir}")
    epochs = read_epochs_csv(epochs_path)

    summary_path = run_dir / "summary.json"
    summary: Dict[str, Any] = {}
    if summary_path.is_file():
        try:
            summary = json.loads(summary_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable {summary_path}: {e}")
            summary = {}
    summary.setdefault("format_version", SUMMARY_FORMAT_VERSION)
    summary.setdefault("started_at", datetime.now().isoformat())
    summary["num_epochs"] = len(epochs)
    summary.update(summarize(epochs))

    write_summary(summary, summary_path)
    curves_path = run_dir / "curves.svg"
    _write_text(curves_path, render_curves_svg(epochs))
    logger.info(f"Regenerated report for {run_dir}")
    return {"summary": summary_path, "curves": curves_path}
