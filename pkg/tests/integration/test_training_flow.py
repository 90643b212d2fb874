"""Integration tests for the training loop."""

import numpy as np
import pytest

from structreward.core.trainer import HISTORY_FIELDS, train
from structreward.models.policy import TokenPolicy
from structreward.utils.config import RewardConfig, TrainerConfig, WorldConfig
from structreward.utils.format_converter import read_jsonl


@pytest.mark.integration
def test_history_round_trips_through_jsonl(tiny_lexicon, config_factory, tmp_path):
    history = train(
        config_factory.small_trainer(steps=3, eval_every=2),
        RewardConfig(),
        config_factory.small_world(),
        seed=5,
        lexicon=tiny_lexicon,
    )
    path = history.write(str(tmp_path / "history.jsonl"))
    records = read_jsonl(path)
    assert [r["step"] for r in records] == [0, 1, 2, 3]
    assert all(set(r) == set(HISTORY_FIELDS) for r in records)
    assert records[1]["rra"] is None

    restored = TokenPolicy.from_dict(history.policy.to_dict())
    assert np.allclose(restored.flatten(), history.policy.flatten())


@pytest.mark.integration
def test_training_moves_the_policy(tiny_lexicon, config_factory):
    trainer_config = config_factory.small_trainer(steps=2)
    history = train(trainer_config, RewardConfig(), config_factory.small_world(), seed=1, lexicon=tiny_lexicon)
    start = TokenPolicy.from_lexicon(tiny_lexicon)
    assert not np.allclose(history.policy.flatten(), start.flatten())


@pytest.mark.integration
@pytest.mark.slow
def test_mean_reward_rises(tiny_lexicon):
    trainer_config = TrainerConfig(
        steps=30, batch_size=16, learning_rate=4.0, beta=0.01, eval_every=100, eval_worlds=2
    )
    world_config = WorldConfig(entities=(2, 3), attributes_per_entity=(0, 1), relations=(1, 1), events=(1, 2))
    history = train(trainer_config, RewardConfig(), world_config, seed=0, lexicon=tiny_lexicon)
    first = history.records[0]["mean_R"]
    late = np.mean([r["mean_R"] for r in history.records[-5:]])
    assert late > first
