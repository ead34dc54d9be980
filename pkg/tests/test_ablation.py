import csv
import json

import pytest

from modules import ablation, trainer
from modules.ablation import SWEEP_VALUES, resolve_grid
from modules.config import merge_overrides
from modules.errors import ParameterError
from modules.run_store import RunStore

TABLE_ONE = [
    "Standard",
    "Standard+SCS w/o local threshold",
    "Standard+SCS w/o global threshold",
    "Standard+SCS w/o EMA",
    "Standard+SCS",
    "Standard+SCR",
    "Standard+CR",
    "Standard+SCS+SCR w/o re-weighting",
    "Standard+SCS+SCR w/o EMA",
    "Standard+SCS+SCR",
    "Standard+SCS+CR",
    "Standard+SCR+CR",
    "Standard+SCS+SCR+CR",
]


@pytest.fixture
def quick_config(tiny_config):
    return merge_overrides(tiny_config, {"warmup_epochs": 1, "total_epochs": 2,
                                         "data": {"train_per_class": 20, "test_per_class": 10}})


def _read_table(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def test_components_grid_follows_the_component_table(tiny_config):
    variants = resolve_grid("components", tiny_config)
    assert [v.label for v in variants] == TABLE_ONE
    assert len({v.name for v in variants}) == len(variants)
    standard = variants[0].overrides
    assert not standard["use_scs"] and not standard["use_scr"] and not standard["use_cr"]
    full = variants[-1].overrides
    assert full["use_scs"] and full["use_scr"] and full["use_cr"]


@pytest.mark.parametrize("grid, key, fixed_key", [("m-sweep", "m", "alpha"), ("alpha-sweep", "alpha", "m")])
def test_sweeps_cover_the_sweep_values(tiny_config, grid, key, fixed_key):
    variants = resolve_grid(grid, tiny_config)
    assert [v.overrides[key] for v in variants] == list(SWEEP_VALUES)
    assert {v.overrides[fixed_key] for v in variants} == {0.85}


def test_noise_sweep_variants_validate(tiny_config):
    for variant in resolve_grid("noise-sweep", tiny_config):
        merge_overrides(tiny_config, variant.overrides)


def test_selector_picks_named_variants(tiny_config):
    assert [v.name for v in resolve_grid("components:full,standard", tiny_config)] == ["full", "standard"]
    with pytest.raises(ParameterError) as exc:
        resolve_grid("components:nope", tiny_config)
    assert "nope" in str(exc.value)


def test_unknown_grid_lists_available_grids(tiny_config):
    with pytest.raises(ParameterError) as exc:
        resolve_grid("everything", tiny_config)
    for name in ablation.GRIDS:
        assert name in str(exc.value)


def test_components_ablation_writes_one_row_per_variant(tmp_path, quick_config):
    result = ablation.ablate(quick_config, "components", tmp_path, seeds=1)
    rows = _read_table(result.table_path)
    assert [r["label"] for r in rows] == TABLE_ONE
    assert all(r["n_seeds"] == "1" for r in rows)
    hashes = {json.loads((d / "summary.json").read_text(encoding="utf-8"))["dataset_hash"]
              for dirs in result.run_dirs.values() for d in dirs}
    assert len(hashes) == 1
    assert len(RunStore(tmp_path).list_runs()) == len(TABLE_ONE)


def test_m_sweep_shares_datasets_per_seed(tmp_path, quick_config):
    result = ablation.ablate(quick_config, "m-sweep:m_0.85,m_0.99", tmp_path, seeds=2)
    rows = _read_table(result.table_path)
    assert [r["variant"] for r in rows] == ["m_0.85", "m_0.99"]
    by_seed = {}
    for dirs in result.run_dirs.values():
        for d in dirs:
            summary = json.loads((d / "summary.json").read_text(encoding="utf-8"))
            by_seed.setdefault(summary["config"]["seed"], set()).add(summary["dataset_hash"])
    assert sorted(by_seed) == [quick_config.seed, quick_config.seed + 1]
    assert all(len(h) == 1 for h in by_seed.values())
    assert rows[0]["dataset_hashes"].split()[0] != rows[0]["dataset_hashes"].split()[1]


def test_single_variant_ablation_matches_train(tmp_path, quick_config):
    result = ablation.ablate(quick_config, "components:full", tmp_path / "ablate", seeds=1)
    run_dir = result.run_dirs["full"][0]
    RunStore(tmp_path / "train").save_run(trainer.run(quick_config))
    for name in ("epochs.csv", "curves.svg"):
        assert (run_dir / name).read_bytes() == (tmp_path / "train" / name).read_bytes()
    a = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
    b = json.loads((tmp_path / "train" / "summary.json").read_text(encoding="utf-8"))
    a.pop("started_at"), b.pop("started_at")
    assert a == b


def test_parallel_workers_match_sequential_table(tmp_path, quick_config):
    seq = ablation.ablate(quick_config, "components:standard,scs", tmp_path / "seq", seeds=1, workers=1)
    par = ablation.ablate(quick_config, "components:standard,scs", tmp_path / "par", seeds=1, workers=2)
    assert seq.table_path.read_bytes() == par.table_path.read_bytes()


def test_seed_count_must_be_positive(tmp_path, quick_config):
    with pytest.raises(ParameterError):
        ablation.ablate(quick_config, "components", tmp_path, seeds=0)
