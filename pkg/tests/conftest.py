"""Common pytest fixtures"""

import tempfile
from pathlib import Path

import pytest
from typer.testing import CliRunner

from structreward.parsers.lexicon import default_lexicon, parse_lexicon
from structreward.utils.config import RewardConfig, TrainerConfig, WorldConfig
from structreward.utils.similarity import SimilarityProvider

# Import our test utilities
from tests.utils import SAMPLE_WORLD, TempDirectoryManager


@pytest.fixture
def sample_data_path():
    """Fixture providing path to the sample data directory."""
    base_dir = Path(__file__).parent
    return str(base_dir / "data")


@pytest.fixture
def lexicon():
    return default_lexicon()


@pytest.fixture
def tiny_lexicon():
    """A lexicon small enough for training tests to converge quickly."""
    return parse_lexicon(
        """
        [nouns]
        cup table man
        [adjectives]
        red blue
        [verbs]
        lift/2 sit/1
        [prepositions]
        on under
        [connectives]
        then=then
        """
    )


@pytest.fixture
def provider():
    return SimilarityProvider()


@pytest.fixture
def reward_config():
    return RewardConfig()


@pytest.fixture
def sample_world():
    return SAMPLE_WORLD


class ConfigFactory:
    """Factory for small, fast configurations."""

    @staticmethod
    def small_world() -> WorldConfig:
        return WorldConfig(entities=(2, 3), attributes_per_entity=(0, 1), relations=(1, 1), events=(1, 2))

    @staticmethod
    def small_trainer(**changes) -> TrainerConfig:
        values = dict(steps=2, batch_size=2, eval_every=10, eval_worlds=3, learning_rate=4.0)
        values.update(changes)
        return TrainerConfig(**values)

    @staticmethod
    def small_config_dict(steps: int = 0) -> dict:
        """Nested YAML form of a fast training configuration"""
        return {
            "trainer": {"steps": steps, "batch_size": 2, "eval_worlds": 2, "eval_every": 5},
            "world": {"entities": [2, 3], "events": [1, 2]},
        }


@pytest.fixture
def config_factory():
    """Factory fixture for creating small configurations."""
    return ConfigFactory


@pytest.fixture
def temp_output_dir():
    """Create a temporary output directory for tests."""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield temp_dir


@pytest.fixture
def temp_env():
    """Fixture providing temporary directory environment with cleanup."""
    with TempDirectoryManager() as temp_mgr:
        yield temp_mgr


@pytest.fixture
def cli_runner():
    return CliRunner()


@pytest.fixture(autouse=True)
def clean_seed_env(monkeypatch):
    """Keep a developer's STRUCTREWARD_SEED out of the tests."""
    monkeypatch.delenv("STRUCTREWARD_SEED", raising=False)
