# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Tabular caption policy over grammar decisions
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import log_softmax

from structreward.errors import EmptyWorld, TrainerError
from structreward.generators.world_sim import (
    Entity,
    Event,
    Relation,
    WorldState,
    render_reference,
    world_units,
)
from structreward.models.caption_ir import OrderAssertion, StructuredCaption, make_anchor, make_event_id
from structreward.parsers.lexicon import Lexicon, default_lexicon

logger = logging.getLogger(__name__)

OMIT = "<omit>"
NONE = "<none>"
KEEP = "keep"
DROP = "drop"
INVERT = "invert"
SEPARATE = "separate"
MERGE = "merge"
ORDER_CONTEXT = "order"


def context_key(kind: str, value: Optional[str] = None) -> str:
    return kind if value is None else f"{kind}:{value}"


@dataclass(frozen=True)
class Decision:
    context: str
    index: int
    label: str
    log_prob: float


@dataclass
class SampledCaption:
    caption: StructuredCaption
    text: str
    belief: WorldState
    decisions: List[Decision] = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.decisions)

    @property
    def mean_logprob(self) -> float:
        return float(np.mean([d.log_prob for d in self.decisions])) if self.decisions else 0.0


class TokenPolicy:
    """Softmax decision tables, one per grammar decision context"""

    def __init__(
        self,
        choices: Dict[str, List[str]],
        logits: Optional[Dict[str, np.ndarray]] = None,
        temperature: float = 1.0,
    ):
        if temperature <= 0:
            raise TrainerError(f"temperature must be > 0, got {temperature}")
        for key, options in choices.items():
            if not options:
                raise TrainerError(f"decision context {key} has no choices")
        self.choices = {k: list(v) for k, v in choices.items()}
        self.temperature = temperature
        self.logits = {
            k: np.array(logits[k], dtype=np.float64) if logits and k in logits else np.zeros(len(v))
            for k, v in self.choices.items()
        }

    @classmethod
    def from_lexicon(cls, lexicon: Optional[Lexicon] = None, temperature: float = 1.0) -> "TokenPolicy":
        """Uniform tables over every decision a world drawn from the lexicon can need"""
        lexicon = lexicon or default_lexicon()
        nouns = sorted(lexicon.nouns)
        adjectives = sorted(lexicon.adjectives)
        choices: Dict[str, List[str]] = {}
        for noun in nouns:
            choices[context_key("object", noun)] = nouns
            choices[context_key("extra_attribute", noun)] = [NONE] + adjectives
        for adjective in adjectives:
            choices[context_key("attribute", adjective)] = [OMIT] + adjectives
        prepositions = sorted(lexicon.prepositions)
        for preposition in prepositions:
            choices[context_key("relation", preposition)] = prepositions
        for verb, arity in sorted(lexicon.verbs.items()):
            choices[context_key("event", verb)] = lexicon.verbs_of_arity(arity)
            choices[context_key("merge", verb)] = [SEPARATE, MERGE]
        choices[ORDER_CONTEXT] = [KEEP, DROP, INVERT]
        return cls(choices, temperature=temperature)

    @property
    def contexts(self) -> List[str]:
        return sorted(self.choices)

    def _table(self, key: str) -> np.ndarray:
        if key not in self.logits:
            raise TrainerError(f"policy has no decision table for context '{key}'")
        return self.logits[key]

    def log_probabilities(self, key: str) -> np.ndarray:
        return log_softmax(self._table(key) / self.temperature)

    def probabilities(self, key: str) -> np.ndarray:
        return np.exp(self.log_probabilities(key))

    def log_prob(self, key: str, index: int) -> float:
        return float(self.log_probabilities(key)[index])

    def choose(self, key: str, rng: np.random.Generator) -> Decision:
        log_p = self.log_probabilities(key)
        p = np.exp(log_p)
        index = int(rng.choice(len(p), p=p / p.sum()))
        return Decision(key, index, self.choices[key][index], float(log_p[index]))

    def kl(self, other: "TokenPolicy", key: str) -> float:
        """Closed-form KL(self || other) for one context"""
        log_p = self.log_probabilities(key)
        log_q = other.log_probabilities(key)
        return float(np.sum(np.exp(log_p) * (log_p - log_q)))

    def kl_gradient(self, other: "TokenPolicy", key: str) -> np.ndarray:
        """d KL(self || other) / d logits for one context"""
        log_p = self.log_probabilities(key)
        log_q = other.log_probabilities(key)
        p = np.exp(log_p)
        kl = float(np.sum(p * (log_p - log_q)))
        return p * (log_p - log_q - kl) / self.temperature

    def copy(self) -> "TokenPolicy":
        return TokenPolicy(self.choices, {k: v.copy() for k, v in self.logits.items()}, self.temperature)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.logits[k] for k in self.contexts])

    def with_flat(self, vector: np.ndarray) -> "TokenPolicy":
        logits, offset = {}, 0
        for key in self.contexts:
            size = len(self.choices[key])
            logits[key] = np.array(vector[offset : offset + size], dtype=np.float64)
            offset += size
        return TokenPolicy(self.choices, logits, self.temperature)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "temperature": self.temperature,
            "contexts": {
                k: {"choices": self.choices[k], "logits": self.logits[k].tolist()} for k in self.contexts
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TokenPolicy":
        contexts = data["contexts"]
        return cls(
            {k: v["choices"] for k, v in contexts.items()},
            {k: np.array(v["logits"], dtype=np.float64) for k, v in contexts.items()},
            data.get("temperature", 1.0),
        )


def sample(
    policy: TokenPolicy,
    world: WorldState,
    seed: Any,
    lexicon: Optional[Lexicon] = None,
    connective: str = "then",
) -> SampledCaption:
    """Walk the world's decisions in caption order and build the believed world

    Args:
        policy: Decision tables
        world: Ground-truth world being described
        seed: RNG seed (int or int sequence)
        connective: How explicit orders are narrated in the rendered text

    Returns:
        SampledCaption with the believed caption, its rendered text and every decision
    """
    if not world.entities:
        raise EmptyWorld("cannot caption a world with no entities")
    rng = np.random.default_rng(seed)
    decisions: List[Decision] = []

    def pick(key: str) -> str:
        decision = policy.choose(key, rng)
        decisions.append(decision)
        return decision.label

    ids: Dict[str, str] = {}
    counts: Dict[str, int] = defaultdict(int)
    entities = []
    for entity in world.entities:
        head = pick(context_key("object", entity.head))
        attributes = set()
        for value in entity.attributes:
            chosen = pick(context_key("attribute", value))
            if chosen != OMIT:
                attributes.add(chosen)
        extra = pick(context_key("extra_attribute", entity.head))
        if extra != NONE:
            attributes.add(extra)
        counts[head] += 1
        ids[entity.id] = make_anchor(head, counts[head])
        entities.append(Entity(ids[entity.id], head, tuple(sorted(attributes))))

    relations = [
        Relation(ids[r.subject], pick(context_key("relation", r.predicate)), ids[r.object])
        for r in world.relations
    ]

    event_ids: Dict[str, str] = {}
    event_counts: Dict[str, int] = defaultdict(int)
    first_binding: Dict[str, Tuple[str, ...]] = {}
    events = []
    for event in world.events:
        predicate = pick(context_key("event", event.predicate))
        participants = tuple(ids[p] for p in event.participants)
        earlier = first_binding.get(predicate)
        if earlier is not None and earlier != participants:
            if pick(context_key("merge", event.predicate)) == MERGE:
                participants = earlier
        first_binding.setdefault(predicate, participants)
        event_counts[predicate] += 1
        event_ids[event.id] = make_event_id(predicate, event_counts[predicate])
        events.append(Event(event_ids[event.id], predicate, participants, event.time_index))

    kept, inverted = [], []
    for before, after in world.explicit_orders:
        choice = pick(ORDER_CONTEXT)
        pair = (event_ids[before], event_ids[after])
        if choice == KEEP:
            kept.append(pair)
        elif choice == INVERT:
            inverted.append(pair)

    belief = WorldState(tuple(entities), tuple(relations), tuple(events), tuple(kept), world.rng_seed)
    caption = world_units(belief, connective)
    if inverted:
        # An inverted order has no surface form, so the text leaves that pair unordered
        caption = caption.with_units(
            orders=caption.orders | {OrderAssertion(after, before, True) for before, after in inverted}
        )
    return SampledCaption(caption, render_reference(belief, connective), belief, decisions)


def kl_estimate(policy: TokenPolicy, ref_policy: TokenPolicy, sampled: SampledCaption) -> float:
    """Per-decision mean of the sampled log-ratio log pi(a) - log pi_ref(a)"""
    if not sampled.decisions:
        return 0.0
    ratios = [
        policy.log_prob(d.context, d.index) - ref_policy.log_prob(d.context, d.index)
        for d in sampled.decisions
    ]
    return float(np.mean(ratios))


def closed_form_kl(policy: TokenPolicy, ref_policy: TokenPolicy, decisions: List[Decision]) -> float:
    """Per-decision mean of the exact context KL over the contexts a sample visited"""
    if not decisions:
        return 0.0
    return float(np.mean([policy.kl(ref_policy, d.context) for d in decisions]))
