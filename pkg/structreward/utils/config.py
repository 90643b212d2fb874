# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Config Utilities
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from structreward.errors import TypeMismatch, UnknownKey

logger = logging.getLogger(__name__)

# User-facing example config, relative to the working directory
WORKSPACE_CONFIG_PATH = os.path.join("configs", "config.yaml")

# Packaged defaults
PACKAGE_CONFIG_PATH = os.path.abspath(
    os.path.join(os.path.dirname(os.path.dirname(__file__)), "config.yaml")
)

DEFAULT_CONFIG_PATH = PACKAGE_CONFIG_PATH

BRANCHES = ("sg", "temp", "vqa")
ALPHA_TOLERANCE = 1e-9


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SimilaritySettings(_Section):
    kind: str = "lexical"
    ngram: int = Field(default=2, ge=1)
    table_path: Optional[str] = None

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, v: str) -> str:
        if v not in ("lexical", "embedding_table"):
            raise ValueError("kind must be 'lexical' or 'embedding_table'")
        return v

    @model_validator(mode="after")
    def _table_needed(self) -> "SimilaritySettings":
        if self.kind == "embedding_table" and not self.table_path:
            raise ValueError("embedding_table similarity needs table_path")
        return self


class RewardConfig(_Section):
    alpha_obj: float = Field(default=1.0 / 3.0, ge=0.0)
    alpha_attr: float = Field(default=1.0 / 3.0, ge=0.0)
    alpha_rel: float = Field(default=1.0 / 3.0, ge=0.0)
    lambda_sg: float = Field(default=0.15, ge=0.0)
    lambda_temp: float = Field(default=0.25, ge=0.0)
    lambda_vqa: float = Field(default=0.35, ge=0.0)
    rho: float = Field(default=2.0, gt=0.0)
    kappa: float = Field(default=0.5, ge=0.0, le=1.0)
    min_weight: float = Field(default=0.5, ge=0.0, le=1.0)
    question_budget: Optional[int] = Field(default=None, ge=0)
    balance: bool = True
    disabled_branches: List[str] = Field(default_factory=list)
    seed: int = 0

    @field_validator("disabled_branches")
    @classmethod
    def _known_branches(cls, v: List[str]) -> List[str]:
        unknown = [b for b in v if b not in BRANCHES]
        if unknown:
            raise ValueError(f"unknown reward branches {unknown}; expected {list(BRANCHES)}")
        return v

    @model_validator(mode="after")
    def _alpha_sums_to_one(self) -> "RewardConfig":
        total = self.alpha_obj + self.alpha_attr + self.alpha_rel
        if abs(total - 1.0) > ALPHA_TOLERANCE:
            raise ValueError(f"alpha weights must sum to 1, got {total}")
        return self

    @property
    def alpha(self) -> Dict[str, float]:
        return {"obj": self.alpha_obj, "attr": self.alpha_attr, "rel": self.alpha_rel}

    @property
    def lambdas(self) -> Dict[str, float]:
        return {"sg": self.lambda_sg, "temp": self.lambda_temp, "vqa": self.lambda_vqa}


class VerifierSettings(_Section):
    binding: str = "self"
    timeout: float = Field(default=10.0, gt=0.0)
    max_retries: int = Field(default=3, ge=0)
    retry_delay: float = Field(default=1.0, ge=0.0)


class WorldConfig(_Section):
    entities: Tuple[int, int] = (2, 4)
    attributes_per_entity: Tuple[int, int] = (0, 2)
    relations: Tuple[int, int] = (1, 2)
    events: Tuple[int, int] = (1, 3)
    repeat_prob: float = Field(default=0.3, ge=0.0, le=1.0)
    explicit_order_prob: float = Field(default=0.7, ge=0.0, le=1.0)
    connective: str = "then"

    @field_validator("entities", "attributes_per_entity", "relations", "events")
    @classmethod
    def _non_empty_range(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        low, high = v
        if low < 0 or high < low:
            raise ValueError(f"range [{low}, {high}] is empty or negative")
        return v

    @field_validator("connective")
    @classmethod
    def _known_connective(cls, v: str) -> str:
        if v not in ("then", "before"):
            raise ValueError("connective must be 'then' or 'before'")
        return v


class TrainerConfig(_Section):
    beta: float = Field(default=0.05, ge=0.0)
    steps: int = Field(default=60, ge=0)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=8.0, gt=0.0)
    temperature: float = Field(default=1.0, gt=0.0)
    baseline: str = "none"
    baseline_decay: float = Field(default=0.9, ge=0.0, lt=1.0)
    reward_mode: str = "structured"
    verifier_mode: str = "self_live"
    eval_every: int = Field(default=10, ge=1)
    eval_worlds: int = Field(default=32, ge=1)
    train_worlds: Optional[int] = Field(default=None, ge=1)

    @field_validator("baseline")
    @classmethod
    def _known_baseline(cls, v: str) -> str:
        if v not in ("none", "moving_average"):
            raise ValueError("baseline must be 'none' or 'moving_average'")
        return v

    @field_validator("reward_mode")
    @classmethod
    def _known_reward_mode(cls, v: str) -> str:
        if v not in ("structured", "sentence_baseline"):
            raise ValueError("reward_mode must be 'structured' or 'sentence_baseline'")
        return v

    @field_validator("verifier_mode")
    @classmethod
    def _known_verifier_mode(cls, v: str) -> str:
        if v not in ("world", "self_live", "self_frozen"):
            raise ValueError("verifier_mode must be 'world', 'self_live' or 'self_frozen'")
        return v


SECTIONS = {
    "reward": RewardConfig,
    "verifier": VerifierSettings,
    "world": WorldConfig,
    "trainer": TrainerConfig,
    "similarity": SimilaritySettings,
}
TOP_LEVEL_KEYS = ("seed", "lexicon")


def expand_dotted(config: Dict[str, Any]) -> Dict[str, Any]:
    """Turn `reward.rho: 2.0` style keys into nested sections"""
    result: Dict[str, Any] = {}
    for key, value in (config or {}).items():
        if isinstance(value, dict):
            value = expand_dotted(value)
        parts = str(key).split(".")
        target = result
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise TypeMismatch(f"'{key}' nests under a non-section value")
        leaf = parts[-1]
        if isinstance(value, dict) and isinstance(target.get(leaf), dict):
            target[leaf] = merge_configs(target[leaf], value)
        else:
            target[leaf] = value
    return result


def check_keys(config: Dict[str, Any]) -> None:
    """Reject keys no section knows about"""
    for key, value in config.items():
        if key in TOP_LEVEL_KEYS:
            continue
        if key not in SECTIONS:
            raise UnknownKey(f"unknown config key '{key}'")
        if not isinstance(value, dict):
            raise TypeMismatch(f"'{key}' must be a section, got {type(value).__name__}")
        fields = SECTIONS[key].model_fields
        for sub in value:
            if sub not in fields:
                raise UnknownKey(f"unknown config key '{key}.{sub}'")


def _read_yaml(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise TypeMismatch(f"{path} is not valid YAML: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise TypeMismatch(f"{path} must hold a mapping at the top level")
    return expand_dotted(data)


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """Load the packaged defaults and merge a user YAML file over them

    Args:
        config_path: Explicit config file; falls back to configs/config.yaml in the
            working directory when present

    Returns:
        Nested config dict with every known key validated
    """
    config = _read_yaml(PACKAGE_CONFIG_PATH) if os.path.exists(PACKAGE_CONFIG_PATH) else {}
    if config_path is None and os.path.exists(WORKSPACE_CONFIG_PATH):
        config_path = WORKSPACE_CONFIG_PATH
    if config_path is not None:
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"Configuration file not found at {config_path}")
        logger.info("Loading config", extra={"path": str(config_path)})
        config = merge_configs(config, _read_yaml(str(config_path)))
    check_keys(config)
    # Validate every section now so bad values fail before any work starts
    for name in SECTIONS:
        get_section(config, name)
    return config


def get_section(config: Dict[str, Any], name: str) -> Any:
    model = SECTIONS[name]
    try:
        return model(**config.get(name, {}))
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        where = f"{name}.{where}" if where else name
        raise TypeMismatch(f"{where}: {first['msg']}") from None


def get_reward_config(config: Dict[str, Any]) -> RewardConfig:
    """Reward weights with the top-level seed folded in"""
    section = dict(config.get("reward", {}))
    section.setdefault("seed", config.get("seed", 0))
    return get_section({"reward": section}, "reward")


def get_verifier_config(config: Dict[str, Any]) -> VerifierSettings:
    return get_section(config, "verifier")


def get_world_config(config: Dict[str, Any]) -> WorldConfig:
    return get_section(config, "world")


def get_trainer_config(config: Dict[str, Any]) -> TrainerConfig:
    return get_section(config, "trainer")


def get_similarity_config(config: Dict[str, Any]) -> SimilaritySettings:
    return get_section(config, "similarity")


def get_lexicon_path(config: Dict[str, Any]) -> Optional[str]:
    return config.get("lexicon")


def resolve_seed(flag: Optional[int], config: Dict[str, Any]) -> int:
    """Seed from the flag, then STRUCTREWARD_SEED, then the config"""
    if flag is not None:
        return flag
    env = os.environ.get("STRUCTREWARD_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise TypeMismatch(f"STRUCTREWARD_SEED must be an integer, got {env!r}") from None
    return int(config.get("seed", 0))


def merge_configs(base_config: Dict[str, Any], override_config: Dict[str, Any]) -> Dict[str, Any]:
    """Merge two configuration dictionaries"""
    result = base_config.copy()
    for key, value in override_config.items():
        if isinstance(value, dict) and key in result and isinstance(result[key], dict):
            result[key] = merge_configs(result[key], value)
        else:
            result[key] = value
    return result


def with_overrides(section: Any, **changes: Any) -> Any:
    """Copy of a config section with changed values, validated like a file value"""
    changes = {k: v for k, v in changes.items() if v is not None}
    try:
        return type(section)(**{**section.model_dump(), **changes})
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise TypeMismatch(f"{where}: {first['msg']}") from None
