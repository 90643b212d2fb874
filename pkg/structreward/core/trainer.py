# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# REINFORCE with a KL penalty over the tabular caption policy
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.progress import Progress

from structreward.core.audit import AuditRecord, audit_metrics, derive_record
from structreward.core.matcher import build_object_map, match_events
from structreward.core.reward_engine import score_pair, sentence_overlap_reward
from structreward.errors import HistoryWriteFailed, NoRootRelation, NonFiniteGradient
from structreward.generators.world_sim import WorldState, render_reference, sample_world, world_units
from structreward.models.caption_ir import StructuredCaption
from structreward.models.policy import (
    Decision,
    SampledCaption,
    TokenPolicy,
    closed_form_kl,
    kl_estimate,
    sample,
)
from structreward.models.verifier import CaptionBeliefVerifier, WorldOracle
from structreward.parsers.lexicon import Lexicon, default_lexicon
from structreward.utils.config import RewardConfig, TrainerConfig, WorldConfig
from structreward.utils.format_converter import to_jsonl
from structreward.utils.similarity import SimilarityProvider

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ("step", "mean_R", "mean_kl", "loss", "q_sg", "q_temp", "q_vqa", "rra", "aca", "eca")

# Seed streams kept apart so training and evaluation never share worlds
_TRAIN_STREAM, _EVAL_STREAM, _ROLLOUT_STREAM, _FROZEN_STREAM = 0, 1, 2, 3

Rollout = Tuple[Sequence[Decision], float]


def _seed_ints(seed: int, stream: int, count: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence([seed, stream]).generate_state(count)]


def objective(
    policy: TokenPolicy,
    ref_policy: TokenPolicy,
    batch: Sequence[Rollout],
    beta: float,
    baseline: float = 0.0,
) -> float:
    """J = mean[(R - b) * mean log pi(a)] - beta * mean[per-decision closed-form KL]"""
    if not batch:
        return 0.0
    terms = []
    for decisions, reward in batch:
        if not decisions:
            terms.append(0.0)
            continue
        mean_logprob = np.mean([policy.log_prob(d.context, d.index) for d in decisions])
        kl = closed_form_kl(policy, ref_policy, list(decisions))
        terms.append((reward - baseline) * mean_logprob - beta * kl)
    return float(np.mean(terms))


def gradient(
    policy: TokenPolicy,
    ref_policy: TokenPolicy,
    batch: Sequence[Rollout],
    beta: float,
    baseline: float = 0.0,
) -> Dict[str, np.ndarray]:
    """Exact gradient of objective() with respect to every decision table"""
    grads = {k: np.zeros_like(v) for k, v in policy.logits.items()}
    if not batch:
        return grads
    scale = 1.0 / len(batch)
    for decisions, reward in batch:
        if not decisions:
            continue
        weight = scale / len(decisions)
        for d in decisions:
            g = -policy.probabilities(d.context)
            g[d.index] += 1.0
            grads[d.context] += weight * (reward - baseline) * g / policy.temperature
            if beta:
                grads[d.context] -= weight * beta * policy.kl_gradient(ref_policy, d.context)
    return grads


def flat_gradient(policy: TokenPolicy, grads: Dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[k] for k in policy.contexts])


@dataclass
class StepMetrics:
    mean_R: float
    mean_kl: float
    kl_closed: float
    loss: float
    grad_norm: float


def step(
    policy: TokenPolicy,
    ref_policy: TokenPolicy,
    batch: Sequence[Tuple[SampledCaption, float]],
    config: TrainerConfig,
    baseline: float = 0.0,
) -> Tuple[TokenPolicy, StepMetrics]:
    """One gradient ascent step on J

    Returns:
        The updated policy (the input is left untouched) and the step metrics
    """
    rollouts = [(s.decisions, r) for s, r in batch]
    grads = gradient(policy, ref_policy, rollouts, config.beta, baseline)
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient for context {key} is not finite")
    updated = policy.copy()
    for key, g in grads.items():
        updated.logits[key] = updated.logits[key] + config.learning_rate * g
    metrics = replace(
        _metrics_only(policy, ref_policy, batch, config, baseline),
        grad_norm=float(np.linalg.norm(flat_gradient(policy, grads))),
    )
    return updated, metrics


@dataclass
class TrainingHistory:
    records: List[Dict[str, Any]] = field(default_factory=list)
    policy: Optional[TokenPolicy] = None

    def write(self, path: str) -> str:
        try:
            return to_jsonl(self.records, path)
        except OSError as e:
            raise HistoryWriteFailed(f"cannot write history to {path}: {e}") from None


def _mean_present(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


class Trainer:
    """Sample, score, update; audit a held-out world set every eval_every steps"""

    def __init__(
        self,
        trainer_config: TrainerConfig,
        reward_config: RewardConfig,
        world_config: WorldConfig,
        seed: int = 0,
        lexicon: Optional[Lexicon] = None,
        provider: Optional[SimilarityProvider] = None,
        verbose: bool = False,
    ):
        self.config = trainer_config
        self.reward_config = reward_config
        self.world_config = world_config
        self.seed = seed
        self.lexicon = lexicon or default_lexicon()
        self.provider = provider or SimilarityProvider()
        self.verbose = verbose
        self.policy = TokenPolicy.from_lexicon(self.lexicon, trainer_config.temperature)
        # Frozen reference snapshot taken at step 0
        self.ref_policy = self.policy.copy()
        self.eval_worlds = [
            sample_world(world_config, s, self.lexicon)
            for s in _seed_ints(seed, _EVAL_STREAM, trainer_config.eval_worlds)
        ]
        self.train_pool: Optional[List[WorldState]] = None
        if trainer_config.train_worlds is not None:
            self.train_pool = [
                sample_world(world_config, s, self.lexicon)
                for s in _seed_ints(seed, _TRAIN_STREAM, trainer_config.train_worlds)
            ]

    def _world(self, step_index: int, j: int) -> WorldState:
        if self.train_pool is not None:
            return self.train_pool[(step_index * self.config.batch_size + j) % len(self.train_pool)]
        world_seed = int(np.random.SeedSequence([self.seed, _TRAIN_STREAM, step_index, j]).generate_state(1)[0])
        return sample_world(self.world_config, world_seed, self.lexicon)

    def _verifier(self, gen: StructuredCaption, ref: StructuredCaption, world: WorldState, rollout_seed):
        mode = self.config.verifier_mode
        if mode == "world":
            return WorldOracle(world)
        if mode == "self_live":
            return None
        connective = self.world_config.connective
        frozen = sample(
            self.ref_policy, world, [self.seed, _FROZEN_STREAM] + list(rollout_seed), self.lexicon, connective
        )
        object_map = build_object_map(frozen.caption, ref, self.provider, self.reward_config.min_weight, self.lexicon)
        matching = match_events(
            list(frozen.caption.events), list(ref.events), object_map, self.provider,
            self.reward_config.min_weight, self.lexicon,
        )
        return CaptionBeliefVerifier(frozen.caption, object_map, matching, self.lexicon)

    def rollout(self, step_index: int, j: int) -> Tuple[SampledCaption, float, Dict[str, Optional[float]]]:
        world = self._world(step_index, j)
        rollout_seed = [step_index, j]
        connective = self.world_config.connective
        sampled = sample(self.policy, world, [self.seed, _ROLLOUT_STREAM] + rollout_seed, self.lexicon, connective)
        ref = world_units(world, connective)
        breakdown = score_pair(
            sampled.caption,
            ref,
            self.reward_config,
            self._verifier(sampled.caption, ref, world, rollout_seed),
            self.provider,
            self.lexicon,
        )
        if self.config.reward_mode == "sentence_baseline":
            reward = sentence_overlap_reward(sampled.text, render_reference(world, connective), self.reward_config)
        else:
            reward = breakdown.R
        return sampled, reward, {"q_sg": breakdown.q_sg, "q_temp": breakdown.q_temp, "q_vqa": breakdown.q_vqa}

    def evaluate(self, policy: TokenPolicy) -> Dict[str, Optional[float]]:
        """Audit metrics of captions sampled on the held-out worlds"""
        records: List[AuditRecord] = []
        for i, world in enumerate(self.eval_worlds):
            sampled = sample(policy, world, [self.seed, _EVAL_STREAM, i], self.lexicon, self.world_config.connective)
            try:
                records.append(
                    derive_record(
                        f"eval-{i}", sampled.caption, world, None, self.provider,
                        self.reward_config.min_weight, self.lexicon,
                    )
                )
            except NoRootRelation:
                continue
        if not records:
            return {"rra": None, "aca": None, "eca": None}
        summary = audit_metrics(records)
        return {"rra": summary.rra, "aca": summary.aca, "eca": summary.eca}

    def train(self) -> TrainingHistory:
        """Run config.steps updates; one history record per step plus the final state"""
        history = TrainingHistory()
        baseline = 0.0
        steps = self.config.steps
        progress = Progress(console=Console(stderr=True), disable=not self.verbose)
        with progress:
            task = progress.add_task("Training", total=steps + 1)
            for step_index in range(steps + 1):
                batch, scores = [], []
                for j in range(self.config.batch_size):
                    sampled, reward, q = self.rollout(step_index, j)
                    batch.append((sampled, reward))
                    scores.append(q)

                use_baseline = baseline if self.config.baseline == "moving_average" else 0.0
                if step_index < steps:
                    updated, metrics = step(self.policy, self.ref_policy, batch, self.config, use_baseline)
                else:
                    # Final record: metrics of the trained policy without another update
                    updated, metrics = self.policy, _metrics_only(self.policy, self.ref_policy, batch, self.config, use_baseline)

                record: Dict[str, Any] = {
                    "step": step_index,
                    "mean_R": metrics.mean_R,
                    "mean_kl": metrics.mean_kl,
                    "loss": metrics.loss,
                    "q_sg": _mean_present([q["q_sg"] for q in scores]),
                    "q_temp": _mean_present([q["q_temp"] for q in scores]),
                    "q_vqa": _mean_present([q["q_vqa"] for q in scores]),
                    "rra": None,
                    "aca": None,
                    "eca": None,
                }
                if step_index % self.config.eval_every == 0 or step_index == steps:
                    record.update(self.evaluate(self.policy))
                history.records.append(record)
                logger.info("Training step", extra={k: record[k] for k in ("step", "mean_R", "mean_kl", "q_sg")})

                if self.config.baseline == "moving_average":
                    decay = self.config.baseline_decay
                    baseline = metrics.mean_R if step_index == 0 else decay * baseline + (1 - decay) * metrics.mean_R
                self.policy = updated
                progress.update(task, advance=1)
        history.policy = self.policy
        return history


def _metrics_only(
    policy: TokenPolicy,
    ref_policy: TokenPolicy,
    batch: Sequence[Tuple[SampledCaption, float]],
    config: TrainerConfig,
    baseline: float,
) -> StepMetrics:
    rollouts = [(s.decisions, r) for s, r in batch]
    return StepMetrics(
        mean_R=float(np.mean([r for _, r in batch])),
        mean_kl=float(np.mean([kl_estimate(policy, ref_policy, s) for s, _ in batch])),
        kl_closed=float(np.mean([closed_form_kl(policy, ref_policy, s.decisions) for s, _ in batch])),
        loss=-objective(policy, ref_policy, rollouts, config.beta, baseline),
        grad_norm=0.0,
    )


def train(
    trainer_config: TrainerConfig,
    reward_config: RewardConfig,
    world_config: WorldConfig,
    seed: int = 0,
    lexicon: Optional[Lexicon] = None,
    provider: Optional[SimilarityProvider] = None,
    verbose: bool = False,
) -> TrainingHistory:
    return Trainer(trainer_config, reward_config, world_config, seed, lexicon, provider, verbose).train()
