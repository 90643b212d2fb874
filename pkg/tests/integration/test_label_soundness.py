"""Integration tests: constructed question labels agree with the ground-truth world."""

import pytest

from structreward.core.reward_engine import score_pair
from structreward.generators.world_sim import sample_world, world_units
from structreward.models.policy import TokenPolicy, sample
from structreward.models.verifier import WorldOracle, oracle_answer
from structreward.utils.config import RewardConfig, WorldConfig


@pytest.mark.integration
@pytest.mark.parametrize("block", range(4))
def test_oracle_agrees_with_every_label(lexicon, provider, block):
    """Captions from an untrained policy produce every negative kind; all labels must hold"""
    policy = TokenPolicy.from_lexicon(lexicon)
    config = RewardConfig(balance=False)
    checked = 0
    for seed in range(block * 50, (block + 1) * 50):
        world = sample_world(WorldConfig(), seed, lexicon)
        sampled = sample(policy, world, seed, lexicon)
        breakdown = score_pair(sampled.caption, world_units(world), config, WorldOracle(world), provider, lexicon)
        for answered in breakdown.questions.values():
            for a in answered:
                assert a.correct, (seed, a.question.text, a.question.label)
                checked += 1
        assert breakdown.q_vqa in (1.0, None)
        assert breakdown.q_temp in (1.0, None)
    assert checked > 0


@pytest.mark.integration
def test_oracle_answer_matches_world_oracle(lexicon, sample_world):
    ref = world_units(sample_world)
    breakdown = score_pair(ref, ref, RewardConfig(), WorldOracle(sample_world), lexicon=lexicon)
    for answered in breakdown.questions.values():
        for a in answered:
            assert oracle_answer(sample_world, a.question).value == a.answer
