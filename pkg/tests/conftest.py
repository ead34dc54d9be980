"""
Shared fixtures: desk-scale configs small enough for the default test run
"""

import json

import numpy as np
import pytest

from modules.config import config_from_dict
from modules.synthdata import build_datasets


TINY = {
    "seed": 3,
    "warmup_epochs": 2,
    "total_epochs": 5,
    "batch_size": 32,
    "lr": 0.05,
    "hidden": 16,
    "data": {"num_classes": 4, "dim": 6, "train_per_class": 40, "test_per_class": 15},
    "noise": {"kind": "symmetric", "rate": 0.3},
}


@pytest.fixture
def tiny_raw():
    return json.loads(json.dumps(TINY))


@pytest.fixture
def tiny_config(tiny_raw):
    return config_from_dict(tiny_raw)


@pytest.fixture
def tiny_datasets(tiny_config):
    return build_datasets(tiny_config.data, tiny_config.noise, tiny_config.seed)


@pytest.fixture
def config_file(tmp_path, tiny_raw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny_raw), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_probs(rng, n, k):
    logits = rng.normal(scale=2.0, size=(n, k))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)
