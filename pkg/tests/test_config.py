import json

import pytest
from hypothesis import given, settings, strategies as st

from vsrgan.config import RunConfigFile
from vsrgan.errors import ConfigError
from vsrgan.losses import LossWeights


def test_defaults_round_trip():
    cfg = RunConfigFile()
    assert RunConfigFile.loads(cfg.dumps()) == cfg
    assert RunConfigFile.loads(cfg.dumps()).dumps() == cfg.dumps()


def test_desk_config_parses(desk_config_dict):
    cfg = RunConfigFile.from_dict(desk_config_dict)
    assert RunConfigFile.loads(cfg.dumps()) == cfg


@settings(max_examples=30, deadline=None)
@given(
    alpha=st.floats(0, 0.45), beta=st.floats(0, 0.45), blocks=st.integers(0, 20),
    batch=st.integers(1, 128), seed=st.integers(0, 2**31), mode=st.sampled_from(["charbonnier", "l2"]),
)
def test_round_trip_property(alpha, beta, blocks, batch, seed, mode):
    raw = {
        "train": {"batch_size": batch, "charbonnier_mode": mode},
        "generator": {"num_res_blocks": blocks},
        "loss_weights": {"alpha": alpha, "beta": beta},
        "seed": seed,
    }
    cfg = RunConfigFile.from_dict(raw)
    again = RunConfigFile.loads(cfg.dumps())
    assert again == cfg
    assert again.loss_weights == LossWeights(alpha, beta)
    assert again.train.seed == seed


@pytest.mark.parametrize("raw", [
    {"trian": {}},
    {"train": {"learning_rate": 0.1}},
    {"generator": {"blocks": 3}},
    {"loss_weights": {"gamma": 0.1}},
    {"data": {"test": "x.vsrd"}},
    {"seed": -1},
    {"train": {"loss_weights": {}}},
])
def test_unknown_or_bad_keys_rejected(raw):
    with pytest.raises(ConfigError):
        RunConfigFile.from_dict(raw)


@pytest.mark.parametrize("train", [
    {"pretrain_lr": 0},
    {"lr_drop_epochs": [75, 50]},
    {"lr_drop_epochs": [50, 100], "pretrain_epochs": 100},
    {"batch_size": 0},
    {"charbonnier_mode": "l1"},
    {"adam_beta1": 1.0},
])
def test_train_invariants_enforced_at_parse_time(train):
    with pytest.raises(ConfigError):
        RunConfigFile.from_dict({"train": train})


def test_loss_weight_invariant_enforced():
    with pytest.raises(ConfigError):
        RunConfigFile.from_dict({"loss_weights": {"alpha": 0.6, "beta": 0.5}})


def test_invalid_json():
    with pytest.raises(ConfigError):
        RunConfigFile.loads("{not json")
    with pytest.raises(ConfigError):
        RunConfigFile.loads(json.dumps([1, 2]))


def test_save_and_load(tmp_path):
    cfg = RunConfigFile.from_dict({"data": {"train": "fixture.vsrd"}, "seed": 9})
    cfg.save(tmp_path / "run.json")
    assert RunConfigFile.load(tmp_path / "run.json") == cfg
