# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Scene-graph, temporal and factual branch scores combined into one reward
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

from structreward.core.matcher import (
    EventMatching,
    ObjectMap,
    TypedMatchResult,
    build_object_map,
    match_events,
    match_typed_units,
)
from structreward.generators.question_gen import (
    FACTUAL,
    TEMPORAL,
    QuestionGenerator,
    QuestionSet,
    VerificationQuestion,
    balance_and_cap,
)
from structreward.models.caption_ir import StructuredCaption
from structreward.models.verifier import CaptionBeliefVerifier, VerifierBinding
from structreward.parsers.grammar_parser import parse_caption
from structreward.parsers.lexicon import Lexicon, default_lexicon
from structreward.utils.config import RewardConfig
from structreward.utils.similarity import SimilarityProvider

logger = logging.getLogger(__name__)

# Marks a score with nothing to score
ABSENT = None

_WORD = re.compile(r"[a-z]+")


def dice_score(result: TypedMatchResult) -> float:
    """q = 2m / (|gen| + |ref|); 1 when the type is absent on both sides"""
    total = result.gen_count + result.ref_count
    if total == 0:
        return 1.0
    return 2.0 * result.matched_mass / total


def scene_graph_score(
    gen: StructuredCaption,
    ref: StructuredCaption,
    config: RewardConfig,
    provider: SimilarityProvider,
    lexicon: Optional[Lexicon] = None,
) -> Tuple[float, float, float, float, Dict[str, Any]]:
    """Typed Dice scores over objects, attributes and relations

    Returns:
        (q_obj, q_attr, q_rel, q_sg, details) where details holds the object map and the
        per-type match results
    """
    lexicon = lexicon or default_lexicon()
    object_map = build_object_map(gen, ref, provider, config.min_weight, lexicon)
    results = {
        "obj": match_typed_units("obj", list(gen.objects), list(ref.objects), object_map, provider, config.min_weight, lexicon),
        "attr": match_typed_units("attr", list(gen.attributes), list(ref.attributes), object_map, provider, config.min_weight, lexicon),
        "rel": match_typed_units("rel", list(gen.relations), list(ref.relations), object_map, provider, config.min_weight, lexicon),
    }
    q = {t: dice_score(r) for t, r in results.items()}
    alpha = config.alpha
    q_sg = sum(alpha[t] * q[t] for t in q)
    return q["obj"], q["attr"], q["rel"], q_sg, {"object_map": object_map, "matches": results}


@dataclass
class AnsweredQuestion:
    question: VerificationQuestion
    answer: str

    @property
    def correct(self) -> bool:
        return self.answer == self.question.label

    def to_dict(self) -> Dict[str, Any]:
        record = self.question.to_dict()
        record["answer"] = self.answer
        record["correct"] = self.correct
        return record


def verify_questions(qs: QuestionSet, binding: VerifierBinding) -> List[AnsweredQuestion]:
    return [AnsweredQuestion(q, binding.answer(q).value) for q in qs]


def branch_accuracy(qs: QuestionSet, binding: VerifierBinding) -> Optional[float]:
    """Fraction of questions the verifier answers with the constructed label; ABSENT when empty"""
    return accuracy(verify_questions(qs, binding))


def accuracy(answered: List[AnsweredQuestion]) -> Optional[float]:
    if not answered:
        return ABSENT
    return sum(1 for a in answered if a.correct) / len(answered)


def combine(
    q_sg: Optional[float],
    q_temp: Optional[float],
    q_vqa: Optional[float],
    config: RewardConfig,
) -> Tuple[float, float, float, float]:
    """Centered branch rewards r_b = rho (q_b - kappa) and their weighted sum

    ABSENT and disabled branches contribute 0.
    """
    scores = {"sg": q_sg, "temp": q_temp, "vqa": q_vqa}
    r = {}
    for branch, q in scores.items():
        if q is ABSENT or branch in config.disabled_branches:
            r[branch] = 0.0
        else:
            r[branch] = config.rho * (q - config.kappa)
    lambdas = config.lambdas
    total = sum(lambdas[b] * r[b] for b in r)
    return r["sg"], r["temp"], r["vqa"], total


@dataclass
class RewardBreakdown:
    q_obj: float
    q_attr: float
    q_rel: float
    q_sg: float
    q_temp: Optional[float]
    q_vqa: Optional[float]
    r_sg: float
    r_temp: float
    r_vqa: float
    R: float
    object_map: ObjectMap
    event_matching: EventMatching
    matches: Dict[str, TypedMatchResult]
    questions: Dict[str, List[AnsweredQuestion]] = field(default_factory=dict)
    disabled_branches: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": {
                "obj": self.q_obj,
                "attr": self.q_attr,
                "rel": self.q_rel,
                "sg": self.q_sg,
                "temp": self.q_temp,
                "vqa": self.q_vqa,
            },
            "r": {"sg": self.r_sg, "temp": self.r_temp, "vqa": self.r_vqa},
            "R": self.R,
            "object_map": self.object_map.to_dict(),
            "event_matching": self.event_matching.to_dict(),
            "matches": {t: m.to_dict() for t, m in self.matches.items()},
            "questions": {b: [a.to_dict() for a in qs] for b, qs in self.questions.items()},
            "disabled_branches": list(self.disabled_branches),
        }


def _as_caption(value: Union[str, StructuredCaption], lexicon: Lexicon) -> StructuredCaption:
    if isinstance(value, StructuredCaption):
        return value
    return parse_caption(value, lexicon)


def build_question_sets(
    gen: StructuredCaption,
    ref: StructuredCaption,
    object_map: ObjectMap,
    event_matching: EventMatching,
    config: RewardConfig,
    lexicon: Optional[Lexicon] = None,
) -> Dict[str, QuestionSet]:
    """Factual and temporal question sets, balanced and capped per config"""
    generator = QuestionGenerator(ref, lexicon)
    factual = QuestionSet.deduplicated(
        list(generator.factual_positive_questions())
        + list(generator.factual_negative_questions(gen, object_map, event_matching))
    )
    temporal = QuestionSet.deduplicated(
        list(generator.temporal_positive_questions())
        + list(generator.temporal_negative_questions(gen, event_matching, object_map))
    )
    sets = {FACTUAL: factual, TEMPORAL: temporal}
    if config.balance or config.question_budget is not None:
        for branch, qs in sets.items():
            if config.balance:
                sets[branch] = balance_and_cap(qs, config.question_budget, config.seed)
            elif len(qs) > config.question_budget:
                # Cap only: keep the first questions in construction order
                sets[branch] = QuestionSet(qs.questions[: config.question_budget])
    return sets


def score_pair(
    gen: Union[str, StructuredCaption],
    ref: Union[str, StructuredCaption],
    config: Optional[RewardConfig] = None,
    binding: Optional[VerifierBinding] = None,
    provider: Optional[SimilarityProvider] = None,
    lexicon: Optional[Lexicon] = None,
) -> RewardBreakdown:
    """Score a generated caption against a reference

    Args:
        gen: Generated caption text or IR
        ref: Reference caption text or IR
        config: Reward weights and thresholds (defaults if None)
        binding: Verifier answering the questions; None verifies against the generated
            caption's own beliefs
        provider: Phrase similarity (lexical Dice if None)
        lexicon: Closed vocabulary (default lexicon if None)

    Returns:
        RewardBreakdown embedding every intermediate artifact
    """
    config = config or RewardConfig()
    provider = provider or SimilarityProvider()
    lexicon = lexicon or default_lexicon()
    gen_caption = _as_caption(gen, lexicon)
    ref_caption = _as_caption(ref, lexicon)

    q_obj, q_attr, q_rel, q_sg, details = scene_graph_score(
        gen_caption, ref_caption, config, provider, lexicon
    )
    object_map = details["object_map"]
    event_matching = match_events(
        list(gen_caption.events), list(ref_caption.events), object_map, provider, config.min_weight, lexicon
    )

    sets = build_question_sets(gen_caption, ref_caption, object_map, event_matching, config, lexicon)
    verifier = binding or CaptionBeliefVerifier(gen_caption, object_map, event_matching, lexicon)
    branches = {FACTUAL: "vqa", TEMPORAL: "temp"}
    answered: Dict[str, List[AnsweredQuestion]] = {}
    for name, qs in sets.items():
        if branches[name] in config.disabled_branches:
            continue
        answered[name] = verify_questions(qs, verifier)
    q_temp = accuracy(answered[TEMPORAL]) if TEMPORAL in answered else ABSENT
    q_vqa = accuracy(answered[FACTUAL]) if FACTUAL in answered else ABSENT

    r_sg, r_temp, r_vqa, total = combine(q_sg, q_temp, q_vqa, config)
    logger.debug(
        "Scored caption pair",
        extra={"q_sg": q_sg, "q_temp": q_temp, "q_vqa": q_vqa, "R": total},
    )
    return RewardBreakdown(
        q_obj=q_obj,
        q_attr=q_attr,
        q_rel=q_rel,
        q_sg=q_sg,
        q_temp=q_temp,
        q_vqa=q_vqa,
        r_sg=r_sg,
        r_temp=r_temp,
        r_vqa=r_vqa,
        R=total,
        object_map=object_map,
        event_matching=event_matching,
        matches=details["matches"],
        questions=answered,
        disabled_branches=list(config.disabled_branches),
    )


def sentence_overlap_reward(gen_text: str, ref_text: str, config: Optional[RewardConfig] = None) -> float:
    """Sentence-level baseline: rho (F1 - kappa) over unigram multisets"""
    config = config or RewardConfig()
    gen_words = Counter(_WORD.findall(gen_text.lower()))
    ref_words = Counter(_WORD.findall(ref_text.lower()))
    overlap = sum((gen_words & ref_words).values())
    if overlap == 0:
        f1 = 1.0 if not gen_words and not ref_words else 0.0
    else:
        precision = overlap / sum(gen_words.values())
        recall = overlap / sum(ref_words.values())
        f1 = 2 * precision * recall / (precision + recall)
    return config.rho * (f1 - config.kappa)
