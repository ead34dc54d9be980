#!/usr/bin/env python3
"""
Run Store - Run Directory Persistence
Lays out run directories under an output root, writes report files and
checkpoints into them, and keeps an index of the runs written under the root.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from . import metrics
from .errors import RunStoreError
from .synthdata import Dataset, dataset_hash, save_csv

logger = logging.getLogger(__name__)

INDEX_FILE = "index.json"


class RunStore:
    """Manages run directories below a single output root"""

    def __init__(self, base_dir: Union[str, Path]):
        self.base_dir = Path(base_dir)
        try:
            self.base_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Error creating output directory {self.base_dir}: {str(e)}")
            raise RunStoreError(f"cannot create {self.base_dir}: {e}") from e
        self.run_index = self._load_run_index()

    def get_run_dir(self, name: Optional[str] = None) -> Path:
        """Directory of a named run; the root itself when name is None"""
        run_dir = self.base_dir if name is None else self.base_dir / name
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Error creating run directory {run_dir}: {str(e)}")
            raise RunStoreError(f"cannot create {run_dir}: {e}") from e
        return run_dir

    def checkpoint_dir(self, name: Optional[str] = None) -> Path:
        return self.get_run_dir(name) / "checkpoints"

    def save_run(self, report, name: Optional[str] = None, index: bool = True) -> Path:
        """
        Write a run's report files

        Args:
            report: RunReport from the trainer
            name: run directory relative to the root; the root when None
            index: record the run in the root's index.json

        Returns:
            The run directory
        """
        run_dir = self.get_run_dir(name)
        metrics.write_run(report, run_dir)
        if index and name is not None:
            self.record_run(name, self.describe(report))
        return run_dir

    @staticmethod
    def describe(report) -> Dict[str, Any]:
        summary = metrics.summarize(report.epochs)
        return {
            "dataset_hash": report.dataset_hash,
            "num_epochs": len(report.epochs),
            "final": summary["final"],
            "best": summary["best"],
        }

    def record_run(self, name: str, entry: Dict[str, Any]):
        self.run_index[name] = entry
        self._save_run_index()

    def save_datasets(self, train: Dataset, test: Dataset, name: Optional[str] = None) -> Path:
        """Write train.csv, test.csv and dataset.json for a generated dataset pair"""
        out_dir = self.get_run_dir(name)
        save_csv(train, out_dir / "train.csv")
        save_csv(test, out_dir / "test.csv")
        meta = {
            "num_classes": train.num_classes,
            "dim": train.dim,
            "train_samples": train.num_samples,
            "test_samples": test.num_samples,
            "train_noise_rate": train.noise_rate,
            "train_hash": dataset_hash(train),
            "test_hash": dataset_hash(test),
        }
        self._write_json(out_dir / "dataset.json", meta)
        logger.info(f"Saved datasets to {out_dir}")
        return out_dir

    def load_summary(self, name: Optional[str] = None) -> Optional[Dict[str, Any]]:
        path = (self.base_dir if name is None else self.base_dir / name) / "summary.json"
        if not path.is_file():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error loading summary {path}: {str(e)}")
            return None

    def list_runs(self, sort_by: str = "name") -> List[Dict[str, Any]]:
        runs = [{"name": name, **entry} for name, entry in self.run_index.items()]
        if sort_by == "final_acc_A":
            runs.sort(key=lambda r: r["final"].get("test_acc_A") or 0.0, reverse=True)
        else:
            runs.sort(key=lambda r: r["name"])
        return runs

    def _load_run_index(self) -> Dict[str, Any]:
        index_file = self.base_dir / INDEX_FILE
        if not index_file.exists():
            return {}
        try:
            return json.loads(index_file.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable run index {index_file}: {e}")
            return {}

    def _save_run_index(self):
        self._write_json(self.base_dir / INDEX_FILE, self.run_index)

    @staticmethod
    def _write_json(path: Path, payload: Dict[str, Any]):
        try:
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            raise RunStoreError(f"cannot write {path}: {e}") from e
