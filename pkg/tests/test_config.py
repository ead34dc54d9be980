import json

import pytest
from hypothesis import given, settings, strategies as st

from modules.config import (
    TrainConfig,
    canonicalize,
    config_from_dict,
    config_to_dict,
    load_environment,
    merge_overrides,
    parse_config,
)
from modules.errors import ConfigError


def _write(tmp_path, payload):
    path = tmp_path / "config.json"
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload), encoding="utf-8")
    return path


def test_minimal_config_gets_documented_defaults(tmp_path):
    config = parse_config(_write(tmp_path, {"data": {"num_classes": 5}}))
    assert config.data.num_classes == 5
    assert config.m == 0.99
    assert config.alpha == 0.95
    assert config.warmup_epochs == 5 and config.total_epochs == 60
    assert config.batch_size == 64 and config.lr == 0.1
    assert config.hidden == 256
    assert config.use_scs and config.use_scr and config.use_cr and config.use_mining
    assert config.noise.kind == "symmetric"


def test_m_outside_unit_interval_names_the_constraint(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, {"m": 1.5}))
    assert "m must lie in [0,1]" in str(exc.value)
    assert exc.value.key == "m"


def test_unknown_key_is_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, {"use_scss": False}))
    assert exc.value.key == "use_scss"
    assert "unknown key" in str(exc.value)


def test_unknown_nested_key_is_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, {"noise": {"ratio": 0.2}}))
    assert exc.value.key == "noise.ratio"


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.json")
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, "{not json"))
    assert exc.value.constraint == "malformed JSON"


@pytest.mark.parametrize("raw, fragment", [
    ({"warmup_epochs": 10, "total_epochs": 5}, "warmup_epochs must lie in [0, total_epochs]"),
    ({"batch_size": 0}, "batch_size must be >= 1"),
    ({"lambda_n": -1.0}, "lambda_n must be >= 0"),
    ({"alpha": -0.1}, "alpha must lie in [0,1]"),
    ({"noise": {"rate": 2.0}}, "rate must lie in [0,1]"),
    ({"noise": {"kind": "openset"}}, "open_classes must be non-empty"),
    ({"noise": {"kind": "symmetric", "open_classes": [1]}}, "only valid for openset"),
    ({"data": {"num_classes": 3}, "noise": {"kind": "openset", "open_classes": [0, 1]}}, "two closed classes"),
    ({"data": {"num_classes": 1}}, "num_classes must be >= 2"),
])
def test_invariant_violations(raw, fragment):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(raw)
    assert fragment in str(exc.value)


def test_strict_types_reject_strings_for_numbers():
    with pytest.raises(ConfigError):
        config_from_dict({"lr": "0.1"})


CORPUS = [
    {},
    {"seed": 7, "m": 0.9},
    {"lr": 1, "alpha": 0.5, "use_ema": False},
    {"data": {"num_classes": 6, "hard_classes": [2]}, "noise": {"kind": "openset", "open_classes": [5]}},
    {"data": {"train_csv": "train.csv", "test_csv": "test.csv"}, "noise": {"kind": "none"}},
    {"warmup_epochs": 0, "total_epochs": 0, "use_scs": False, "use_scr": False, "use_cr": False},
]


@pytest.mark.parametrize("raw", CORPUS)
def test_serialize_parse_equals_canonicalize(tmp_path, raw):
    assert config_to_dict(parse_config(_write(tmp_path, raw))) == canonicalize(raw)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31), m=st.floats(0.0, 1.0), alpha=st.floats(0.0, 1.0),
       switches=st.dictionaries(st.sampled_from(["use_scs", "use_scr", "use_cr", "use_ema", "use_mining"]),
                                st.booleans()))
def test_round_trip_on_generated_configs(seed, m, alpha, switches):
    raw = {"seed": seed, "m": m, "alpha": alpha, **switches}
    assert config_to_dict(config_from_dict(raw)) == canonicalize(raw)


def test_merge_overrides_revalidates():
    config = TrainConfig()
    merged = merge_overrides(config, {"seed": 4, "noise": {"rate": 0.2}})
    assert merged.seed == 4 and merged.noise.rate == 0.2 and merged.noise.kind == "symmetric"
    with pytest.raises(ConfigError):
        merge_overrides(config, {"m": 2.0})


def test_environment_settings(monkeypatch, tmp_path):
    monkeypatch.setenv("SEDLAB_THREADS", "3")
    monkeypatch.setenv("SEDLAB_LOG_LEVEL", "debug")
    env = load_environment(str(tmp_path / "no.env"))
    assert env.threads == 3 and env.log_level == "DEBUG"
    monkeypatch.setenv("SEDLAB_THREADS", "zero")
    with pytest.raises(ConfigError):
        load_environment(str(tmp_path / "no.env"))


def test_environment_file_is_loaded(monkeypatch, tmp_path):
    monkeypatch.setenv("SEDLAB_THREADS", "1")
    monkeypatch.delenv("SEDLAB_THREADS")
    env_file = tmp_path / ".env"
    env_file.write_text("SEDLAB_THREADS=2\n", encoding="utf-8")
    assert load_environment(str(env_file)).threads == 2
