# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Synthetic worlds, reference rendering and caption corruption
import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from structreward.errors import EmptyWorld, InvalidWorld, LexiconTooSmall, NothingToCorrupt
from structreward.models.caption_ir import (
    AttributeUnit,
    EventMention,
    ObjectUnit,
    OrderAssertion,
    RelationUnit,
    StructuredCaption,
    make_anchor,
    make_event_id,
    raise_for_violations,
    validate,
)
from structreward.parsers.grammar_parser import ordinal_word
from structreward.parsers.lexicon import (
    Lexicon,
    default_lexicon,
    indefinite_article,
    inflect_third_person,
)
from structreward.utils.config import WorldConfig
from structreward.utils.format_converter import canonical_dumps

logger = logging.getLogger(__name__)

CORRUPTION_KINDS = (
    "attribute_swap",
    "relation_swap",
    "participant_swap",
    "order_invert",
    "instance_collapse",
)


@dataclass(frozen=True)
class Entity:
    id: str
    head: str
    attributes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Relation:
    subject: str
    predicate: str
    object: str


@dataclass(frozen=True)
class Event:
    id: str
    predicate: str
    participants: Tuple[str, ...]
    time_index: int


@dataclass(frozen=True)
class WorldState:
    """Closed-world scene: anything not listed does not hold"""

    entities: Tuple[Entity, ...] = ()
    relations: Tuple[Relation, ...] = ()
    events: Tuple[Event, ...] = ()
    explicit_orders: Tuple[Tuple[str, str], ...] = ()
    rng_seed: Optional[int] = None

    def entity_by_id(self) -> Dict[str, Entity]:
        return {e.id: e for e in self.entities}

    def event_by_id(self) -> Dict[str, Event]:
        return {e.id: e for e in self.events}

    def all_relations(self) -> Set[Tuple[str, str, str]]:
        """Prepositional relations plus the agent-verb-object relation of every transitive event"""
        triples = {(r.subject, r.predicate, r.object) for r in self.relations}
        for event in self.events:
            if len(event.participants) == 2:
                triples.add((event.participants[0], event.predicate, event.participants[1]))
        return triples

    def precedes(self, first: str, second: str) -> bool:
        events = self.event_by_id()
        return first != second and events[first].time_index < events[second].time_index


# World file schema
class _WorldModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class _EntityModel(_WorldModel):
    id: str
    head: str
    attributes: List[str] = Field(default_factory=list)


class _RelationModel(_WorldModel):
    subject: str
    predicate: str
    object: str


class _EventModel(_WorldModel):
    id: str
    predicate: str
    participants: List[str]
    time_index: int


class _WorldDocument(_WorldModel):
    entities: List[_EntityModel] = Field(default_factory=list)
    relations: List[_RelationModel] = Field(default_factory=list)
    events: List[_EventModel] = Field(default_factory=list)
    explicit_orders: List[Tuple[str, str]] = Field(default_factory=list)
    rng_seed: Optional[int] = None


def validate_world(world: WorldState) -> None:
    """Check ids follow introduction order and every anchor resolves"""
    counts: Dict[str, int] = defaultdict(int)
    for entity in world.entities:
        counts[entity.head] += 1
        if entity.id != make_anchor(entity.head, counts[entity.head]):
            raise InvalidWorld(
                f"entity {entity.id} should be {make_anchor(entity.head, counts[entity.head])}"
            )
    known = {e.id for e in world.entities}
    for rel in world.relations:
        for anchor in (rel.subject, rel.object):
            if anchor not in known:
                raise InvalidWorld(f"relation {rel.predicate} references missing entity {anchor}")
    event_counts: Dict[str, int] = defaultdict(int)
    previous_time = None
    for event in world.events:
        event_counts[event.predicate] += 1
        expected = make_event_id(event.predicate, event_counts[event.predicate])
        if event.id != expected:
            raise InvalidWorld(f"event {event.id} should be {expected}")
        if not event.participants:
            raise InvalidWorld(f"event {event.id} has no participants")
        for anchor in event.participants:
            if anchor not in known:
                raise InvalidWorld(f"event {event.id} binds missing entity {anchor}")
        if previous_time is not None and event.time_index <= previous_time:
            raise InvalidWorld(f"event {event.id} breaks the strictly increasing time index")
        previous_time = event.time_index
    events = world.event_by_id()
    for first, second in world.explicit_orders:
        if first not in events or second not in events:
            raise InvalidWorld(f"explicit order {first}<{second} references a missing event")
        if not world.precedes(first, second):
            raise InvalidWorld(f"explicit order {first}<{second} contradicts the time index")


def world_to_dict(world: WorldState) -> Dict[str, Any]:
    return {
        "entities": [
            {"id": e.id, "head": e.head, "attributes": list(e.attributes)} for e in world.entities
        ],
        "relations": [
            {"subject": r.subject, "predicate": r.predicate, "object": r.object}
            for r in world.relations
        ],
        "events": [
            {
                "id": e.id,
                "predicate": e.predicate,
                "participants": list(e.participants),
                "time_index": e.time_index,
            }
            for e in world.events
        ],
        "explicit_orders": [list(pair) for pair in world.explicit_orders],
        "rng_seed": world.rng_seed,
    }


def world_from_dict(doc: Any) -> WorldState:
    try:
        parsed = _WorldDocument.model_validate(doc)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(p) for p in first["loc"])
        raise InvalidWorld(f"{location}: {first['msg']}") from None
    world = WorldState(
        entities=tuple(Entity(e.id, e.head, tuple(sorted(e.attributes))) for e in parsed.entities),
        relations=tuple(Relation(r.subject, r.predicate, r.object) for r in parsed.relations),
        events=tuple(
            Event(e.id, e.predicate, tuple(e.participants), e.time_index) for e in parsed.events
        ),
        explicit_orders=tuple((a, b) for a, b in parsed.explicit_orders),
        rng_seed=parsed.rng_seed,
    )
    validate_world(world)
    return world


def load_world(path: str) -> WorldState:
    if not os.path.exists(path):
        raise FileNotFoundError(f"World file not found at {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidWorld(f"{path} is not JSON: {e}") from None
    return world_from_dict(doc)


def dump_world(world: WorldState) -> str:
    return canonical_dumps(world_to_dict(world))


def _pick_range(rng: np.random.Generator, bounds: Tuple[int, int], cap: Optional[int] = None) -> int:
    low, high = bounds
    if cap is not None:
        high = min(high, cap)
        low = min(low, high)
    return int(rng.integers(low, high + 1))


def sample_world(config: WorldConfig, seed: int, lexicon: Optional[Lexicon] = None) -> WorldState:
    """Sample a random world deterministically from the seed

    Args:
        config: Count ranges and probabilities
        seed: RNG seed
        lexicon: Vocabulary to draw heads, attributes and predicates from

    Returns:
        WorldState with canonical ids
    """
    lexicon = lexicon or default_lexicon()
    rng = np.random.default_rng(seed)
    nouns = sorted(lexicon.nouns)
    adjectives = sorted(lexicon.adjectives)
    prepositions = sorted(lexicon.prepositions)

    if config.entities[1] > 0 and not nouns:
        raise LexiconTooSmall("lexicon has no nouns")
    if config.attributes_per_entity[0] > len(adjectives):
        raise LexiconTooSmall(
            f"need {config.attributes_per_entity[0]} adjectives per entity, lexicon has {len(adjectives)}"
        )
    if config.relations[0] > 0 and not prepositions:
        raise LexiconTooSmall("lexicon has no prepositions")
    if config.events[0] > 0 and not lexicon.verbs:
        raise LexiconTooSmall("lexicon has no verbs")

    entities: List[Entity] = []
    counts: Dict[str, int] = defaultdict(int)
    for _ in range(_pick_range(rng, config.entities)):
        head = nouns[int(rng.integers(len(nouns)))]
        counts[head] += 1
        n_attrs = _pick_range(rng, config.attributes_per_entity, cap=len(adjectives))
        chosen = rng.choice(len(adjectives), size=n_attrs, replace=False) if n_attrs else []
        attrs = tuple(sorted(adjectives[int(i)] for i in chosen))
        entities.append(Entity(make_anchor(head, counts[head]), head, attrs))

    ids = [e.id for e in entities]
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]
    relations: List[Relation] = []
    n_relations = _pick_range(rng, config.relations, cap=len(pairs) if prepositions else 0)
    if n_relations:
        for index in sorted(rng.choice(len(pairs), size=n_relations, replace=False).tolist()):
            a, b = pairs[index]
            if rng.random() < 0.5:
                a, b = b, a
            predicate = prepositions[int(rng.integers(len(prepositions)))]
            relations.append(Relation(a, predicate, b))

    transitive = lexicon.verbs_of_arity(2) if len(ids) >= 2 else []
    intransitive = lexicon.verbs_of_arity(1)
    verbs = sorted(transitive + intransitive)
    events: List[Event] = []
    event_counts: Dict[str, int] = defaultdict(int)
    n_events = _pick_range(rng, config.events, cap=None if ids and verbs else 0)
    for i in range(n_events):
        if events and rng.random() < config.repeat_prob:
            source = events[int(rng.integers(len(events)))]
            predicate = source.predicate
            if rng.random() < 0.5:
                participants = source.participants
            else:
                participants = _bind(rng, ids, len(source.participants))
        else:
            predicate = verbs[int(rng.integers(len(verbs)))]
            participants = _bind(rng, ids, lexicon.verbs[predicate])
        event_counts[predicate] += 1
        events.append(
            Event(make_event_id(predicate, event_counts[predicate]), predicate, participants, i + 1)
        )

    explicit = tuple(
        (events[i].id, events[i + 1].id)
        for i in range(len(events) - 1)
        if rng.random() < config.explicit_order_prob
    )
    world = WorldState(tuple(entities), tuple(relations), tuple(events), explicit, seed)
    logger.debug(
        "Sampled world",
        extra={"seed": seed, "entities": len(entities), "relations": len(relations), "events": len(events)},
    )
    return world


def _bind(rng: np.random.Generator, ids: Sequence[str], arity: int) -> Tuple[str, ...]:
    chosen = rng.choice(len(ids), size=arity, replace=False)
    return tuple(ids[int(i)] for i in chosen)


# Rendering
class _Describer:
    """Definite descriptions that resolve to the intended instance when parsed"""

    def __init__(self, world: WorldState):
        self.rank: Dict[str, int] = {}
        totals: Dict[str, int] = defaultdict(int)
        for entity in world.entities:
            totals[entity.head] += 1
            self.rank[entity.id] = totals[entity.head]
        self.heads = {e.id: e.head for e in world.entities}
        self.repeated = {h for h, n in totals.items() if n > 1}

    def definite(self, anchor: str) -> str:
        head = self.heads[anchor]
        if head in self.repeated:
            return f"the {ordinal_word(self.rank[anchor])} {head}"
        return f"the {head}"


def _sentence(text: str) -> str:
    return text[0].upper() + text[1:] + "."


@dataclass(frozen=True)
class _Narrated:
    """One event sentence: `event` is the main clause, `before` a leading 'Before ...' clause"""

    event: Event
    before: Optional[Event] = None
    then: bool = False


def _narration(world: WorldState, connective: str) -> List[_Narrated]:
    """Group events into sentences in text order

    With connective "before" an explicit pair A<B becomes "Before B, A." when B starts no
    further explicit pair, A closes none, and the predicates differ so ids keep text order.
    Every other explicit pair is narrated with "Then".
    """
    explicit = set(world.explicit_orders)
    events = world.events
    plan: List[_Narrated] = []
    i = 0
    while i < len(events):
        event = events[i]
        linked_in = i > 0 and (events[i - 1].id, event.id) in explicit
        if connective == "before" and not linked_in and i + 1 < len(events):
            later = events[i + 1]
            linked_on = i + 2 < len(events) and (later.id, events[i + 2].id) in explicit
            if (event.id, later.id) in explicit and event.predicate != later.predicate and not linked_on:
                plan.append(_Narrated(event, before=later))
                i += 2
                continue
        plan.append(_Narrated(event, then=linked_in))
        i += 1
    return plan


def render_reference(world: WorldState, connective: str = "then") -> str:
    """Render the world as a caption the grammar parser reads back exactly

    Entities are introduced first, then relations, then events in time order. With
    connective "before" some explicit pairs read "Before B, A." instead of "A. Then B."
    """
    if not world.entities:
        raise EmptyWorld("cannot render a world with no entities")
    describe = _Describer(world)
    sentences: List[str] = []

    seen_heads: Set[str] = set()
    for entity in world.entities:
        phrase = " ".join(entity.attributes + (entity.head,))
        determiner = "another" if entity.head in seen_heads else indefinite_article(phrase)
        seen_heads.add(entity.head)
        sentences.append(_sentence(f"{determiner} {phrase} is present"))

    for rel in world.relations:
        sentences.append(
            _sentence(f"{describe.definite(rel.subject)} is {rel.predicate} {describe.definite(rel.object)}")
        )

    repeats: Set[str] = set()
    seen_events: Set[Tuple[str, Tuple[str, ...]]] = set()
    for event in world.events:
        key = (event.predicate, event.participants)
        if key in seen_events:
            repeats.add(event.id)
        seen_events.add(key)

    def clause(event: Event) -> str:
        words = [describe.definite(event.participants[0]), inflect_third_person(event.predicate)]
        words.extend(describe.definite(p) for p in event.participants[1:])
        if event.id in repeats:
            words.append("again")
        return " ".join(words)

    for item in _narration(world, connective):
        if item.before is not None:
            sentences.append(_sentence(f"before {clause(item.before)}, {clause(item.event)}"))
        elif item.then:
            sentences.append(_sentence(f"then {clause(item.event)}"))
        else:
            sentences.append(_sentence(clause(item.event)))
    return " ".join(sentences)


def world_units(world: WorldState, connective: str = "then") -> StructuredCaption:
    """The anchored caption that render_reference(world, connective) parses to"""
    objects, attributes, relations, events, orders = [], [], [], [], []
    clause = 0
    for entity in world.entities:
        phrase = " ".join(entity.attributes + (entity.head,))
        objects.append(ObjectUnit(entity.id, entity.head, phrase, clause))
        attributes.extend(AttributeUnit(entity.id, value, clause) for value in entity.attributes)
        clause += 1
    for rel in world.relations:
        relations.append(RelationUnit(rel.subject, rel.predicate, rel.object, clause))
        clause += 1

    def mention(event: Event) -> None:
        nonlocal clause
        events.append(EventMention(event.id, event.predicate, event.participants, clause, len(events)))
        if len(event.participants) == 2:
            relations.append(
                RelationUnit(event.participants[0], event.predicate, event.participants[1], clause)
            )
        clause += 1

    previous: Optional[Event] = None
    for item in _narration(world, connective):
        if item.before is not None:
            mention(item.before)
            orders.append(OrderAssertion(item.event.id, item.before.id, True))
        elif item.then and previous is not None:
            orders.append(OrderAssertion(previous.id, item.event.id, True))
        mention(item.event)
        previous = item.event
    return StructuredCaption.build(objects, attributes, relations, events, orders)


# Corruption operators
def _derived_relation(caption: StructuredCaption, event: EventMention) -> Optional[RelationUnit]:
    if len(event.participants) != 2:
        return None
    unit = RelationUnit(event.participants[0], event.predicate, event.participants[1], event.clause)
    return unit if unit in caption.relations else None


def _rebind(
    caption: StructuredCaption, event: EventMention, participants: Tuple[str, ...]
) -> StructuredCaption:
    """Replace an event's binding and keep its agent-verb-object relation in step"""
    new_event = replace(event, participants=participants)
    events = (caption.events - {event}) | {new_event}
    relations = caption.relations
    derived = _derived_relation(caption, event)
    if derived is not None:
        relations = (relations - {derived}) | {
            RelationUnit(participants[0], event.predicate, participants[1], event.clause)
        }
    return caption.with_units(events=events, relations=relations, source_text=None)


def _attribute_swap(caption: StructuredCaption, rng: np.random.Generator, lexicon: Lexicon):
    adjectives = sorted(lexicon.adjectives)
    held: Dict[str, Set[str]] = defaultdict(set)
    for attr in caption.attributes:
        held[attr.object].add(attr.value)
    targets = sorted({(a.object, a.value) for a in caption.attributes})
    options = [(t, [v for v in adjectives if v not in held[t[0]]]) for t in targets]
    options = [(t, vs) for t, vs in options if vs]
    if not options:
        raise NothingToCorrupt("no attribute has an alternative value")
    (anchor, old), values = options[int(rng.integers(len(options)))]
    new = values[int(rng.integers(len(values)))]
    attributes = {replace(a, value=new) if (a.object, a.value) == (anchor, old) else a for a in caption.attributes}
    objects = set()
    for obj in caption.objects:
        if obj.id == anchor:
            words = [new if w == old else w for w in obj.phrase.split()]
            obj = replace(obj, phrase=" ".join(words))
        objects.add(obj)
    return caption.with_units(attributes=attributes, objects=objects, source_text=None)


def _relation_swap(caption: StructuredCaption, rng: np.random.Generator, lexicon: Lexicon):
    derived = {_derived_relation(caption, e) for e in caption.events} - {None}
    prepositions = sorted(lexicon.prepositions)
    holding: Dict[Tuple[str, str], Set[str]] = defaultdict(set)
    for rel in caption.relations:
        holding[(rel.subject, rel.object)].add(rel.predicate)
    options = []
    for rel in caption.sorted_relations():
        if rel in derived:
            continue
        values = [p for p in prepositions if p not in holding[(rel.subject, rel.object)]]
        if values:
            options.append((rel, values))
    if not options:
        raise NothingToCorrupt("no spatial relation to swap")
    rel, values = options[int(rng.integers(len(options)))]
    new = replace(rel, predicate=values[int(rng.integers(len(values)))])
    return caption.with_units(relations=(caption.relations - {rel}) | {new}, source_text=None)


def _participant_swap(caption: StructuredCaption, rng: np.random.Generator, lexicon: Lexicon):
    anchors = sorted(o.id for o in caption.objects)
    options: List[Tuple[EventMention, List[Tuple[str, ...]]]] = []
    for event in caption.sorted_events():
        if len(event.participants) == 2:
            swapped = (event.participants[1], event.participants[0])
            if swapped != event.participants:
                options.append((event, [swapped]))
        elif len(event.participants) == 1:
            others = [(a,) for a in anchors if a != event.agent]
            if others:
                options.append((event, others))
    if not options:
        raise NothingToCorrupt("no event can be rebound")
    event, bindings = options[int(rng.integers(len(options)))]
    return _rebind(caption, event, bindings[int(rng.integers(len(bindings)))])


def _order_invert(caption: StructuredCaption, rng: np.random.Generator, lexicon: Lexicon):
    explicit = [o for o in caption.sorted_orders() if o.explicit]
    if not explicit:
        raise NothingToCorrupt("no explicit order to invert")
    order = explicit[int(rng.integers(len(explicit)))]
    inverted = OrderAssertion(order.after, order.before, order.explicit)
    return caption.with_units(orders=(caption.orders - {order}) | {inverted}, source_text=None)


def _instance_collapse(caption: StructuredCaption, rng: np.random.Generator, lexicon: Lexicon):
    by_predicate: Dict[str, List[EventMention]] = defaultdict(list)
    for event in sorted(caption.events, key=lambda e: (e.order_index, e.id)):
        by_predicate[event.predicate].append(event)
    options: List[Tuple[EventMention, Tuple[str, ...]]] = []
    for predicate in sorted(by_predicate):
        events = by_predicate[predicate]
        for i, earlier in enumerate(events):
            for later in events[i + 1 :]:
                if len(later.participants) != len(earlier.participants):
                    continue
                for p, (a, b) in enumerate(zip(earlier.participants, later.participants)):
                    if a == b:
                        continue
                    collapsed = later.participants[:p] + (a,) + later.participants[p + 1 :]
                    if len(set(collapsed)) == len(collapsed):
                        options.append((later, collapsed))
                    break
    if not options:
        raise NothingToCorrupt("no repeated event with distinct participants")
    later, collapsed = options[int(rng.integers(len(options)))]
    return _rebind(caption, later, collapsed)


_OPERATORS = {
    "attribute_swap": _attribute_swap,
    "relation_swap": _relation_swap,
    "participant_swap": _participant_swap,
    "order_invert": _order_invert,
    "instance_collapse": _instance_collapse,
}


def corrupt(
    caption: StructuredCaption, kind: str, seed: int, lexicon: Optional[Lexicon] = None
) -> StructuredCaption:
    """Apply exactly one corruption of the given kind

    Args:
        caption: Caption to corrupt
        kind: One of CORRUPTION_KINDS
        seed: Chooses the target and replacement
        lexicon: Source of replacement values (default lexicon if None)

    Returns:
        A valid StructuredCaption differing from the input in one unit
    """
    if kind not in _OPERATORS:
        raise ValueError(f"Unknown corruption kind: {kind}. Expected one of {list(CORRUPTION_KINDS)}")
    lexicon = lexicon or default_lexicon()
    rng = np.random.default_rng(seed)
    result = _OPERATORS[kind](caption, rng, lexicon)
    raise_for_violations(validate(result))
    logger.debug("Corrupted caption", extra={"kind": kind, "seed": seed})
    return result
