"""Unit tests for configuration loading and validation."""

import os

import pytest

from structreward.errors import TypeMismatch, UnknownKey
from structreward.utils import config
from structreward.utils.config import (
    RewardConfig,
    TrainerConfig,
    expand_dotted,
    get_reward_config,
    get_section,
    load_config,
    merge_configs,
    resolve_seed,
    with_overrides,
)


@pytest.mark.unit
def test_packaged_defaults(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    loaded = load_config()
    reward = get_reward_config(loaded)
    assert reward.rho == 2.0
    assert reward.kappa == 0.5
    assert (reward.lambda_sg, reward.lambda_temp, reward.lambda_vqa) == (0.15, 0.25, 0.35)
    assert get_section(loaded, "trainer").verifier_mode == "self_live"


@pytest.mark.unit
def test_user_file_overrides_defaults(temp_env):
    path = temp_env.create_config({"reward": {"rho": 3.0}, "trainer.steps": 5, "seed": 9})
    loaded = load_config(path)
    assert get_reward_config(loaded).rho == 3.0
    assert get_reward_config(loaded).seed == 9
    assert get_section(loaded, "trainer").steps == 5
    assert get_section(loaded, "trainer").batch_size == TrainerConfig().batch_size


@pytest.mark.unit
def test_workspace_config_is_picked_up(monkeypatch, tmp_path):
    os.makedirs(tmp_path / "configs")
    (tmp_path / "configs" / "config.yaml").write_text("reward:\n  kappa: 0.25\n")
    monkeypatch.chdir(tmp_path)
    assert get_reward_config(load_config()).kappa == 0.25


@pytest.mark.unit
def test_missing_explicit_config(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "nope.yaml"))


@pytest.mark.unit
def test_unknown_keys(temp_env):
    with pytest.raises(UnknownKey):
        load_config(temp_env.create_config({"rewards": {"rho": 1.0}}))
    with pytest.raises(UnknownKey):
        load_config(temp_env.create_config({"reward": {"rhoo": 1.0}}))


@pytest.mark.unit
def test_type_mismatch_names_the_field(temp_env):
    with pytest.raises(TypeMismatch) as excinfo:
        load_config(temp_env.create_config({"trainer": {"steps": "many"}}))
    assert str(excinfo.value).startswith("trainer.steps:")
    with pytest.raises(TypeMismatch):
        load_config(temp_env.create_config({"trainer": {"steps": -1}}))


@pytest.mark.unit
def test_alpha_weights_must_sum_to_one():
    with pytest.raises(TypeMismatch):
        get_section({"reward": {"alpha_obj": 0.5, "alpha_attr": 0.5, "alpha_rel": 0.5}}, "reward")
    ok = get_section({"reward": {"alpha_obj": 0.5, "alpha_attr": 0.25, "alpha_rel": 0.25}}, "reward")
    assert ok.alpha == {"obj": 0.5, "attr": 0.25, "rel": 0.25}


@pytest.mark.unit
def test_disabled_branches_are_checked():
    assert RewardConfig(disabled_branches=["temp"]).disabled_branches == ["temp"]
    with pytest.raises(TypeMismatch):
        get_section({"reward": {"disabled_branches": ["audio"]}}, "reward")


@pytest.mark.unit
def test_expand_dotted_and_merge():
    assert expand_dotted({"reward.rho": 1.5, "reward": {"kappa": 0.2}}) == {
        "reward": {"rho": 1.5, "kappa": 0.2}
    }
    merged = merge_configs({"reward": {"rho": 2.0, "kappa": 0.5}}, {"reward": {"rho": 1.0}})
    assert merged == {"reward": {"rho": 1.0, "kappa": 0.5}}


@pytest.mark.unit
def test_seed_precedence(monkeypatch):
    assert resolve_seed(None, {"seed": 4}) == 4
    monkeypatch.setenv("STRUCTREWARD_SEED", "17")
    assert resolve_seed(None, {"seed": 4}) == 17
    assert resolve_seed(2, {"seed": 4}) == 2
    monkeypatch.setenv("STRUCTREWARD_SEED", "seventeen")
    with pytest.raises(TypeMismatch):
        resolve_seed(None, {})


@pytest.mark.unit
def test_with_overrides():
    trainer = TrainerConfig()
    changed = with_overrides(trainer, steps=3, seed=None)
    assert changed.steps == 3
    assert trainer.steps == 60
    with pytest.raises(TypeMismatch):
        with_overrides(trainer, baseline="exponential")


@pytest.mark.unit
def test_default_path_points_into_the_package():
    assert config.DEFAULT_CONFIG_PATH.endswith(os.path.join("structreward", "config.yaml"))
    assert os.path.exists(config.DEFAULT_CONFIG_PATH)


@pytest.mark.unit
def test_world_connective_is_checked():
    assert get_section({}, "world").connective == "then"
    assert get_section({"world": {"connective": "before"}}, "world").connective == "before"
    with pytest.raises(TypeMismatch):
        get_section({"world": {"connective": "after"}}, "world")
