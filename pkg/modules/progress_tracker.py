#!/usr/bin/env python3
"""
Run Progress Tracking
Stage-weighted progress for a training run (data, warm-up, SED epochs,
report), running statistics and callbacks for progress listeners.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)

HISTORY_LIMIT = 100


@dataclass
class ProgressStage:
    """Represents a single progress stage"""
    stage_id: str
    name: str
    weight: float  # share of total progress (0-100)
    total_steps: int = 1
    steps_done: int = 0
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def progress(self) -> float:
        if self.end_time is not None:
            return 100.0
        if self.total_steps <= 0:
            return 0.0
        return min(100.0, 100.0 * self.steps_done / self.total_steps)


@dataclass
class RunStatistics:
    """Latest metrics reported by the trainer"""
    epochs_done: int = 0
    total_epochs: int = 0
    last_acc_A: Optional[float] = None
    last_acc_B: Optional[float] = None
    last_precision: Optional[float] = None
    epochs_per_minute: float = 0.0


class ProgressTracker:
    """Tracks a run's progress through its stages"""

    def __init__(self, run_id: str, warmup_epochs: int = 0, sed_epochs: int = 0):
        self.run_id = run_id
        self.start_time = time.time()
        total = max(1, warmup_epochs + sed_epochs)
        # epochs dominate; data and report stages get a fixed small share
        self.stages = [
            ProgressStage("data", "Building datasets", weight=5.0),
            ProgressStage("warmup", "Warm-up epochs", weight=90.0 * warmup_epochs / total,
                          total_steps=warmup_epochs),
            ProgressStage("sed", "SED epochs", weight=90.0 * sed_epochs / total, total_steps=sed_epochs),
            ProgressStage("report", "Writing report", weight=5.0),
        ]
        self.current_stage_index = 0
        self.overall_progress = 0.0
        self.statistics = RunStatistics(total_epochs=warmup_epochs + sed_epochs)
        self.progress_callbacks: List[Callable[[Dict[str, Any]], None]] = []
        self.progress_history: List[Dict[str, Any]] = []

    def _stage(self, stage_id: str) -> Optional[ProgressStage]:
        stage = next((s for s in self.stages if s.stage_id == stage_id), None)
        if stage is None:
            logger.warning(f"Stage {stage_id} not found")
        return stage

    def add_progress_callback(self, callback: Callable[[Dict[str, Any]], None]):
        self.progress_callbacks.append(callback)

    def start_stage(self, stage_id: str, details: Optional[Dict[str, Any]] = None):
        stage = self._stage(stage_id)
        if stage is None:
            return
        self.current_stage_index = self.stages.index(stage)
        stage.start_time = time.time()
        stage.steps_done = 0
        if details:
            stage.details.update(details)
        self._emit_progress_update()

    def advance(self, stage_id: str, steps: int = 1, details: Optional[Dict[str, Any]] = None):
        """Record completed steps (epochs) within a stage"""
        stage = self._stage(stage_id)
        if stage is None:
            return
        stage.steps_done = min(stage.total_steps, stage.steps_done + steps)
        if details:
            stage.details.update(details)
        self._update_overall_progress()
        self._emit_progress_update()

    def complete_stage(self, stage_id: str):
        stage = self._stage(stage_id)
        if stage is None:
            return
        if stage.start_time is None:
            stage.start_time = time.time()
        stage.end_time = time.time()
        stage.steps_done = stage.total_steps
        self._update_overall_progress()
        if self.current_stage_index < len(self.stages) - 1:
            self.current_stage_index += 1
        self._emit_progress_update()

    def update_statistics(self, **kwargs):
        for key, value in kwargs.items():
            if hasattr(self.statistics, key):
                setattr(self.statistics, key, value)
        elapsed_minutes = (time.time() - self.start_time) / 60.0
        if elapsed_minutes > 0:
            self.statistics.epochs_per_minute = self.statistics.epochs_done / elapsed_minutes

    def get_current_status(self) -> Dict[str, Any]:
        stage = self.stages[self.current_stage_index]
        elapsed = time.time() - self.start_time
        return {
            "run_id": self.run_id,
            "overall_progress": round(self.overall_progress, 1),
            "current_stage": {
                "id": stage.stage_id,
                "name": stage.name,
                "progress": round(stage.progress, 1),
                "details": dict(stage.details),
            },
            "statistics": asdict(self.statistics),
            "timing": {
                "elapsed_time_seconds": round(elapsed, 1),
                "elapsed_time_formatted": self._format_duration(elapsed),
                "estimated_remaining": self._estimate_remaining_time(),
            },
            "last_updated": datetime.now().isoformat(),
        }

    def add_log_entry(self, level: str, message: str):
        """Record a message in the bounded history and forward it to the logger"""
        self.progress_history.append({
            "type": "log",
            "level": level,
            "message": message,
            "timestamp": datetime.now().isoformat(),
        })
        if len(self.progress_history) > HISTORY_LIMIT:
            self.progress_history = self.progress_history[-HISTORY_LIMIT:]
        log = getattr(logger, level, logger.info)
        log(f"[{self.run_id}] {message}")

    @staticmethod
    def _format_duration(seconds: float) -> str:
        if seconds < 60:
            return f"{int(seconds)}s"
        if seconds < 3600:
            return f"{int(seconds // 60)}m {int(seconds % 60)}s"
        return f"{int(seconds // 3600)}h {int((seconds % 3600) // 60)}m"

    def _estimate_remaining_time(self) -> str:
        if self.overall_progress > 5:
            elapsed = time.time() - self.start_time
            remaining = max(0.0, elapsed / self.overall_progress * 100 - elapsed)
            return self._format_duration(remaining)
        return "Calculating..."

    def _update_overall_progress(self):
        total = 0.0
        for stage in self.stages:
            total += stage.weight * stage.progress / 100.0
        self.overall_progress = min(100.0, total)

    def _emit_progress_update(self):
        try:
            status = self.get_current_status()
            for callback in self.progress_callbacks:
                callback(status)
        except Exception as e:
            logger.error(f"Error emitting progress update: {str(e)}")
