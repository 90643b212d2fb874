# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Create verification questions with labels known by construction
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from structreward.core.matcher import EventMatching, ObjectMap
from structreward.errors import MissingSlot, QuestionError
from structreward.models.caption_ir import (
    EventMention,
    StructuredCaption,
    split_anchor,
    EVENT_ID_PATTERN,
)
from structreward.parsers.grammar_parser import ordinal_word
from structreward.parsers.lexicon import Lexicon, default_lexicon, indefinite_article
from structreward.utils.format_converter import canonical_dumps
from structreward.utils.similarity import canonicalize

logger = logging.getLogger(__name__)

TEMPORAL = "temporal"
FACTUAL = "factual"
YES = "yes"
NO = "no"

TEMPLATES = {
    "existence": "Is there {article}{object}?",
    "attribute": "Is the {object} {attribute}?",
    "relation": "Does the {subject} {relation} the {object}?",
    "event_occurrence": "Does {participants} {event}?",
    "temporal_order": "Did {event_1} happen before {event_2}?",
}
TEMPLATE_SLOTS = {
    "existence": ("object",),
    "attribute": ("object", "attribute"),
    "relation": ("subject", "relation", "object"),
    "event_occurrence": ("participants", "event"),
    "temporal_order": ("event_1", "event_2"),
}


def render(kind: str, slots: Dict[str, str], article_rule: bool = True) -> str:
    """Fill one question template

    Args:
        kind: Template name
        slots: Text for every placeholder of the template
        article_rule: Prefix existence objects with "a"/"an"

    Returns:
        Rendered question text
    """
    if kind not in TEMPLATES:
        raise QuestionError(f"Unknown question kind: {kind}")
    missing = [s for s in TEMPLATE_SLOTS[kind] if not slots.get(s)]
    if missing:
        raise MissingSlot(f"{kind} question is missing {', '.join(missing)}")
    values = {s: slots[s] for s in TEMPLATE_SLOTS[kind]}
    if kind == "existence":
        values["article"] = indefinite_article(slots["object"]) + " " if article_rule else ""
    return TEMPLATES[kind].format(**values)


@dataclass(frozen=True)
class VerificationQuestion:
    """A templated yes/no question; provenance holds the structured slots"""

    branch: str
    kind: str
    text: str
    label: str
    provenance: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def slots(self) -> Dict[str, Any]:
        return self.provenance.get("slots", {})

    @property
    def dedup_key(self) -> Tuple[str, str]:
        return self.kind, canonical_dumps(self.slots)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "branch": self.branch,
            "kind": self.kind,
            "text": self.text,
            "label": self.label,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VerificationQuestion":
        return cls(data["branch"], data["kind"], data["text"], data["label"], data.get("provenance", {}))


@dataclass
class QuestionSet:
    questions: List[VerificationQuestion] = field(default_factory=list)

    @property
    def positives_count(self) -> int:
        return sum(1 for q in self.questions if q.label == YES)

    @property
    def negatives_count(self) -> int:
        return sum(1 for q in self.questions if q.label == NO)

    def __len__(self) -> int:
        return len(self.questions)

    def __iter__(self):
        return iter(self.questions)

    def to_list(self) -> List[Dict[str, Any]]:
        return [q.to_dict() for q in self.questions]

    @classmethod
    def deduplicated(cls, questions: Iterable[VerificationQuestion]) -> "QuestionSet":
        seen: Set[Tuple[str, str, str]] = set()
        kept = []
        for q in questions:
            key = (q.label,) + q.dedup_key
            if key not in seen:
                seen.add(key)
                kept.append(q)
        return cls(kept)


def event_slot(
    event_id: Optional[str], predicate: str, participants: Sequence[str]
) -> Dict[str, Any]:
    """Structured event slot; event_id pins the question to one occurrence"""
    return {"id": event_id, "predicate": predicate, "participants": list(participants)}


class QuestionGenerator:
    def __init__(self, ref: StructuredCaption, lexicon: Optional[Lexicon] = None):
        """Initialize the generator with the reference caption whose phrases fill the slots"""
        self.ref = ref
        self.lexicon = lexicon or default_lexicon()
        self.objects = ref.object_by_id()
        self.events = ref.event_by_id()

        heads: Dict[str, List[str]] = defaultdict(list)
        for obj in ref.objects:
            heads[obj.head].append(obj.id)
        self.repeated_heads = {h for h, ids in heads.items() if len(ids) > 1}
        phrase_counts: Dict[str, int] = defaultdict(int)
        for obj in ref.objects:
            phrase_counts[obj.phrase] += 1
        self.ambiguous_phrases = {p for p, n in phrase_counts.items() if n > 1}

    # Slot descriptors
    def _ordinal(self, anchor: str) -> str:
        parts = split_anchor(anchor)
        k = parts[1] if parts else 0
        return ordinal_word(k)

    def _head(self, anchor: str) -> str:
        if anchor in self.objects:
            return self.objects[anchor].head
        parts = split_anchor(anchor)
        return parts[0] if parts else anchor

    def object_noun(self, anchor: str) -> str:
        """Head noun, with an ordinal when the reference repeats the head"""
        head = self._head(anchor)
        if head in self.repeated_heads:
            return f"{self._ordinal(anchor)} {head}"
        return head

    def object_phrase(self, anchor: str) -> str:
        """Full reference phrase, with an ordinal when needed to tell instances apart"""
        obj = self.objects.get(anchor)
        if obj is None:
            return self.object_noun(anchor)
        if obj.phrase in self.ambiguous_phrases:
            return f"{self._ordinal(anchor)} {obj.phrase}"
        return obj.phrase

    def phrase_attributes(self, anchor: str) -> List[str]:
        obj = self.objects.get(anchor)
        if obj is None:
            return []
        words = canonicalize(obj.phrase, self.lexicon).split()
        return sorted({w for w in words if w in self.lexicon.adjectives})

    def describe_event(self, slot: Dict[str, Any]) -> Tuple[str, str]:
        """(participants, event) text in base form"""
        participants = slot["participants"]
        agent = f"the {self.object_noun(participants[0])}"
        event = slot["predicate"]
        if len(participants) > 1:
            event += " " + " ".join(f"the {self.object_noun(p)}" for p in participants[1:])
        event_id = slot.get("id")
        match = EVENT_ID_PATTERN.match(event_id) if event_id else None
        if match and int(match.group("j")) > 1:
            event += " again"
        return agent, event

    # Single questions
    def existence(self, anchor: str, label: str, branch: str, source: str) -> VerificationQuestion:
        slots = {
            "object": anchor,
            "head": self._head(anchor),
            "attributes": self.phrase_attributes(anchor),
        }
        text = render("existence", {"object": self.object_phrase(anchor)})
        return VerificationQuestion(branch, "existence", text, label, {"source": source, "slots": slots})

    def attribute(
        self, anchor: str, value: str, label: str, source: str, generated: Sequence[str] = ()
    ) -> VerificationQuestion:
        slots = {"object": anchor, "head": self._head(anchor), "value": value}
        text = render("attribute", {"object": self.object_noun(anchor), "attribute": value})
        return VerificationQuestion(
            FACTUAL, "attribute", text, label,
            {"source": source, "slots": slots, "generated": list(generated)},
        )

    def relation(
        self, subject: str, predicate: str, obj: str, label: str, source: str,
        generated: Sequence[str] = (),
    ) -> VerificationQuestion:
        slots = {"subject": subject, "predicate": predicate, "object": obj}
        text = render(
            "relation",
            {"subject": self.object_noun(subject), "relation": predicate, "object": self.object_noun(obj)},
        )
        return VerificationQuestion(
            FACTUAL, "relation", text, label,
            {"source": source, "slots": slots, "generated": list(generated)},
        )

    def occurrence(
        self, slot: Dict[str, Any], label: str, branch: str, source: str,
        generated: Sequence[str] = (),
    ) -> VerificationQuestion:
        participants, event = self.describe_event(slot)
        text = render("event_occurrence", {"participants": participants, "event": event})
        return VerificationQuestion(
            branch, "event_occurrence", text, label,
            {"source": source, "slots": {"event": slot}, "generated": list(generated)},
        )

    def order(
        self, first: Dict[str, Any], second: Dict[str, Any], label: str, source: str,
        generated: Sequence[str] = (),
    ) -> VerificationQuestion:
        event_1 = " ".join(self.describe_event(first))
        event_2 = " ".join(self.describe_event(second))
        text = render("temporal_order", {"event_1": event_1, "event_2": event_2})
        return VerificationQuestion(
            TEMPORAL, "temporal_order", text, label,
            {"source": source, "slots": {"first": first, "second": second}, "generated": list(generated)},
        )

    def ref_event_slot(self, event: EventMention) -> Dict[str, Any]:
        return event_slot(event.id, event.predicate, event.participants)

    # Question sets
    def factual_positive_questions(self) -> QuestionSet:
        """Support chains for every reference relation"""
        questions: List[VerificationQuestion] = []
        attributes_of: Dict[str, Set[str]] = defaultdict(set)
        for attr in self.ref.attributes:
            attributes_of[attr.object].add(attr.value)
        for rel in self.ref.sorted_relations():
            endpoints = (rel.subject, rel.object)
            for anchor in endpoints:
                questions.append(self.existence(anchor, YES, FACTUAL, "reference"))
            for anchor in endpoints:
                for value in sorted(attributes_of.get(anchor, ())):
                    questions.append(self.attribute(anchor, value, YES, "reference"))
            questions.append(self.relation(rel.subject, rel.predicate, rel.object, YES, "reference"))
            for event in self.ref.sorted_events():
                if set(event.participants) & set(endpoints):
                    questions.append(
                        self.occurrence(self.ref_event_slot(event), YES, FACTUAL, "reference")
                    )
        return QuestionSet.deduplicated(questions)

    def factual_negative_questions(
        self, gen: StructuredCaption, object_map: ObjectMap, event_matching: EventMatching
    ) -> QuestionSet:
        """Negatives only from conflicts at aligned slots"""
        questions: List[VerificationQuestion] = []
        ref_values: Dict[str, Set[str]] = defaultdict(set)
        for attr in self.ref.attributes:
            ref_values[attr.object].add(canonicalize(attr.value, self.lexicon))
        for attr in gen.sorted_attributes():
            target = object_map.get(attr.object)
            value = canonicalize(attr.value, self.lexicon)
            if target is None or not ref_values.get(target) or value in ref_values[target]:
                continue
            questions.append(
                self.attribute(target, value, NO, "attribute_conflict", [f"{attr.object}:{attr.value}"])
            )

        ref_predicates: Dict[Tuple[str, str], Set[str]] = defaultdict(set)
        for rel in self.ref.relations:
            ref_predicates[(rel.subject, rel.object)].add(canonicalize(rel.predicate, self.lexicon))
        for rel in gen.sorted_relations():
            pair = (object_map.get(rel.subject), object_map.get(rel.object))
            predicate = canonicalize(rel.predicate, self.lexicon)
            if None in pair or not ref_predicates.get(pair) or predicate in ref_predicates[pair]:
                continue
            questions.append(
                self.relation(
                    pair[0], predicate, pair[1], NO, "relation_conflict",
                    [f"{rel.subject} {rel.predicate} {rel.object}"],
                )
            )

        gen_events = gen.event_by_id()
        for gen_id, ref_id in sorted(event_matching.conflicts.items()):
            slot = self._conflict_slot(gen_events[gen_id], ref_id, object_map)
            questions.append(self.occurrence(slot, NO, FACTUAL, "participant_conflict", [gen_id]))
        return QuestionSet.deduplicated(questions)

    def _conflict_slot(self, gen_event: EventMention, ref_id: str, object_map: ObjectMap) -> Dict[str, Any]:
        participants = [object_map.get(p) for p in gen_event.participants]
        return event_slot(ref_id, canonicalize(gen_event.predicate, self.lexicon), participants)

    def explicit_orders(self):
        return [o for o in self.ref.sorted_orders() if o.explicit]

    def temporal_positive_questions(self) -> QuestionSet:
        """Occurrence and order positives, only when the reference states an explicit order"""
        orders = self.explicit_orders()
        if not orders:
            return QuestionSet()
        questions = [
            self.occurrence(self.ref_event_slot(e), YES, TEMPORAL, "reference")
            for e in self.ref.sorted_events()
        ]
        for order in orders:
            first = self.ref_event_slot(self.events[order.before])
            second = self.ref_event_slot(self.events[order.after])
            questions.append(self.order(first, second, YES, "reference"))
        return QuestionSet.deduplicated(questions)

    def temporal_negative_questions(
        self,
        gen: StructuredCaption,
        event_matching: EventMatching,
        object_map: Optional[ObjectMap] = None,
    ) -> QuestionSet:
        """Order inversions over matched events and binding conflicts on matched slots"""
        orders = self.explicit_orders()
        if not orders:
            return QuestionSet()
        matched = event_matching.inverse
        conflicted = event_matching.conflict_inverse
        gen_events = gen.event_by_id()
        questions: List[VerificationQuestion] = []
        for order in orders:
            before, after = self.events[order.before], self.events[order.after]
            if before.id in matched and after.id in matched:
                questions.append(
                    self.order(
                        self.ref_event_slot(after), self.ref_event_slot(before), NO, "order_inversion",
                        [matched[after.id], matched[before.id]],
                    )
                )
            if object_map is None or not (before.id in conflicted or after.id in conflicted):
                continue
            sides = []
            generated = []
            for event in (before, after):
                if event.id in conflicted:
                    gen_event = gen_events[conflicted[event.id]]
                    sides.append(self._conflict_slot(gen_event, event.id, object_map))
                    generated.append(gen_event.id)
                else:
                    sides.append(self.ref_event_slot(event))
            questions.append(self.order(sides[0], sides[1], NO, "binding_conflict", generated))
        return QuestionSet.deduplicated(questions)


def balance_and_cap(qs: QuestionSet, budget: Optional[int] = None, rng_seed: int = 0) -> QuestionSet:
    """Downsample the larger label class to within one of the smaller, then cap

    Args:
        qs: Question set
        budget: Optional maximum number of questions
        rng_seed: Seed for the subsampling

    Returns:
        A new QuestionSet preserving the original question order
    """
    if budget is not None and budget < 0:
        raise QuestionError(f"question budget must be >= 0, got {budget}")
    rng = np.random.default_rng(rng_seed)
    positives = [i for i, q in enumerate(qs.questions) if q.label == YES]
    negatives = [i for i, q in enumerate(qs.questions) if q.label == NO]
    keep = positives + negatives
    if positives and negatives:
        small, large = sorted((positives, negatives), key=len)
        target = len(small) + 1
        if len(large) > target:
            large = sorted(rng.choice(large, size=target, replace=False).tolist())
        keep = small + large
    keep = sorted(keep)
    if budget is not None and len(keep) > budget:
        keep = sorted(rng.choice(keep, size=budget, replace=False).tolist()) if budget else []
    return QuestionSet([qs.questions[i] for i in keep])


# Module-level entry points
def factual_positive_questions(ref: StructuredCaption, lexicon: Optional[Lexicon] = None) -> QuestionSet:
    return QuestionGenerator(ref, lexicon).factual_positive_questions()


def factual_negative_questions(
    gen: StructuredCaption,
    ref: StructuredCaption,
    object_map: ObjectMap,
    event_matching: EventMatching,
    lexicon: Optional[Lexicon] = None,
) -> QuestionSet:
    return QuestionGenerator(ref, lexicon).factual_negative_questions(gen, object_map, event_matching)


def temporal_positive_questions(ref: StructuredCaption, lexicon: Optional[Lexicon] = None) -> QuestionSet:
    return QuestionGenerator(ref, lexicon).temporal_positive_questions()


def temporal_negative_questions(
    gen: StructuredCaption,
    ref: StructuredCaption,
    event_matching: EventMatching,
    object_map: Optional[ObjectMap] = None,
    lexicon: Optional[Lexicon] = None,
) -> QuestionSet:
    return QuestionGenerator(ref, lexicon).temporal_negative_questions(gen, event_matching, object_map)
