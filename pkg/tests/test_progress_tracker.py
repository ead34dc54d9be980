import pytest

from modules import trainer
from modules.progress_tracker import HISTORY_LIMIT, ProgressTracker


def test_stage_weights_follow_epoch_split():
    tracker = ProgressTracker("run", warmup_epochs=10, sed_epochs=30)
    weights = {s.stage_id: s.weight for s in tracker.stages}
    assert weights["warmup"] == pytest.approx(22.5)
    assert weights["sed"] == pytest.approx(67.5)
    assert sum(weights.values()) == pytest.approx(100.0)


def test_advancing_epochs_moves_overall_progress():
    tracker = ProgressTracker("run", warmup_epochs=2, sed_epochs=2)
    tracker.complete_stage("data")
    tracker.start_stage("warmup")
    tracker.advance("warmup")
    assert tracker.overall_progress == pytest.approx(5.0 + 22.5)
    tracker.complete_stage("warmup")
    assert tracker.get_current_status()["current_stage"]["id"] == "sed"


def test_unknown_stage_is_ignored(caplog):
    tracker = ProgressTracker("run", 1, 1)
    tracker.advance("nope")
    assert tracker.overall_progress == 0.0
    assert "Stage nope not found" in caplog.text


def test_training_run_reports_to_callbacks(tiny_config):
    tracker = ProgressTracker("run", tiny_config.warmup_epochs, tiny_config.total_epochs - tiny_config.warmup_epochs)
    seen = []
    tracker.add_progress_callback(seen.append)
    trainer.run(tiny_config, progress=tracker)
    assert seen
    assert tracker.statistics.epochs_done == tiny_config.total_epochs
    assert tracker.overall_progress == pytest.approx(95.0)
    assert [s.end_time is not None for s in tracker.stages] == [True, True, True, False]


def test_failing_callback_does_not_stop_tracking(caplog):
    tracker = ProgressTracker("run", 1, 1)

    def broken(status):
        raise RuntimeError("listener down")

    tracker.add_progress_callback(broken)
    tracker.start_stage("data")
    assert "listener down" in caplog.text


def test_history_is_bounded():
    tracker = ProgressTracker("run", 1, 1)
    for i in range(HISTORY_LIMIT + 10):
        tracker.add_log_entry("info", f"message {i}")
    assert len(tracker.progress_history) == HISTORY_LIMIT
    assert tracker.progress_history[-1]["message"] == f"message {HISTORY_LIMIT + 9}"


@pytest.mark.parametrize("seconds, text", [(42, "42s"), (125, "2m 5s"), (7260, "2h 1m")])
def test_duration_formatting(seconds, text):
    assert ProgressTracker._format_duration(seconds) == text
