# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Reward-component, weight and training-pool ablations over the toy trainer
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from structreward.core.trainer import TrainingHistory, train
from structreward.errors import InvalidConfig
from structreward.parsers.lexicon import Lexicon
from structreward.utils.config import RewardConfig, TrainerConfig, WorldConfig, with_overrides
from structreward.utils.format_converter import write_json
from structreward.utils.similarity import SimilarityProvider

logger = logging.getLogger(__name__)

ABLATION_GROUPS = ("components", "weights", "scale")

# Branch weights shifted by +0.05 toward one branch at a time
REBALANCED_WEIGHTS = {
    "rebalance_sg": (0.20, 0.25, 0.35),
    "rebalance_temp": (0.15, 0.30, 0.35),
    "rebalance_vqa": (0.15, 0.25, 0.40),
}

SUMMARY_FIELDS = ("mean_R", "mean_kl", "q_sg", "q_temp", "q_vqa", "rra", "aca", "eca")


@dataclass
class AblationVariant:
    name: str
    reward: RewardConfig
    trainer: TrainerConfig
    changes: Dict[str, Any] = field(default_factory=dict)


def ablation_variants(
    reward: RewardConfig,
    trainer: TrainerConfig,
    groups: Sequence[str] = ("components",),
    pool_sizes: Sequence[int] = (),
) -> List[AblationVariant]:
    """Expand ablation groups into training variants

    Args:
        reward: Base reward config; its disabled branches are cleared for the full variant
        trainer: Base trainer config
        groups: Any of "components", "weights", "scale"
        pool_sizes: Training pool sizes for the "scale" group

    Returns:
        Variants in a fixed order, the full configuration first
    """
    unknown = [g for g in groups if g not in ABLATION_GROUPS]
    if unknown:
        raise InvalidConfig(f"unknown ablation groups {unknown}; expected {list(ABLATION_GROUPS)}")
    full_reward = with_overrides(reward, disabled_branches=[])
    full_trainer = with_overrides(trainer, reward_mode="structured")
    variants = [AblationVariant("full", full_reward, full_trainer)]
    if "components" in groups:
        for branch in ("sg", "temp", "vqa"):
            variants.append(
                AblationVariant(
                    f"no_{branch}",
                    with_overrides(full_reward, disabled_branches=[branch]),
                    full_trainer,
                    {"disabled_branches": [branch]},
                )
            )
        variants.append(
            AblationVariant(
                "sentence_baseline",
                full_reward,
                with_overrides(full_trainer, reward_mode="sentence_baseline"),
                {"reward_mode": "sentence_baseline"},
            )
        )
    if "weights" in groups:
        for name, (sg, temp, vqa) in REBALANCED_WEIGHTS.items():
            changes = {"lambda_sg": sg, "lambda_temp": temp, "lambda_vqa": vqa}
            variants.append(AblationVariant(name, with_overrides(full_reward, **changes), full_trainer, changes))
    if "scale" in groups:
        if not pool_sizes:
            raise InvalidConfig("the scale ablation needs at least one training pool size")
        for size in pool_sizes:
            variants.append(
                AblationVariant(
                    f"pool_{size}",
                    full_reward,
                    with_overrides(full_trainer, train_worlds=size),
                    {"train_worlds": size},
                )
            )
    return variants


def summarize(history: TrainingHistory) -> Dict[str, Optional[float]]:
    """Final-record metrics of one run"""
    final = history.records[-1]
    return {name: final.get(name) for name in SUMMARY_FIELDS}


def run_ablation(
    variants: Sequence[AblationVariant],
    world_config: WorldConfig,
    seed: int,
    output_dir: Optional[str] = None,
    lexicon: Optional[Lexicon] = None,
    provider: Optional[SimilarityProvider] = None,
    verbose: bool = False,
) -> Dict[str, Any]:
    """Train every variant with the same seed and collect final metrics

    Histories go to <output_dir>/<variant>.history.jsonl when output_dir is given.
    """
    report: Dict[str, Any] = {"seed": seed, "variants": []}
    for variant in variants:
        logger.info("Ablation variant", extra={"variant": variant.name, "changes": variant.changes})
        history = train(variant.trainer, variant.reward, world_config, seed, lexicon, provider, verbose)
        if output_dir is not None:
            history.write(os.path.join(output_dir, f"{variant.name}.history.jsonl"))
        report["variants"].append(
            {"name": variant.name, "changes": variant.changes, "final": summarize(history)}
        )
    if output_dir is not None:
        write_json(report, os.path.join(output_dir, "ablation.json"))
    return report
