# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Anchored caption units and their canonical serialization
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, StrictBool, StrictInt, StrictStr, ValidationError

from structreward.errors import DanglingAnchor, DuplicateId, DuplicateUnit, InvalidOrder, SchemaError
from structreward.utils.format_converter import canonical_dumps

ANCHOR_PATTERN = re.compile(r"^(?P<head>.+)_(?P<k>[1-9][0-9]*)$")
EVENT_ID_PATTERN = re.compile(r"^(?P<predicate>.+)#(?P<j>[1-9][0-9]*)$")


def split_anchor(anchor: str) -> Optional[Tuple[str, int]]:
    """Split "cup_2" into ("cup", 2); None when the anchor is malformed"""
    match = ANCHOR_PATTERN.match(anchor)
    if match is None:
        return None
    return match.group("head"), int(match.group("k"))


def make_anchor(head: str, k: int) -> str:
    return f"{head}_{k}"


def make_event_id(predicate: str, j: int) -> str:
    return f"{predicate}#{j}"


@dataclass(frozen=True, order=True)
class ObjectUnit:
    id: str
    head: str
    phrase: str
    clause: int


@dataclass(frozen=True, order=True)
class AttributeUnit:
    object: str
    value: str
    clause: int


@dataclass(frozen=True, order=True)
class RelationUnit:
    subject: str
    predicate: str
    object: str
    clause: int


@dataclass(frozen=True, order=True)
class EventMention:
    id: str
    predicate: str
    participants: Tuple[str, ...]
    clause: int
    order_index: int

    @property
    def agent(self) -> str:
        return self.participants[0]


@dataclass(frozen=True, order=True)
class OrderAssertion:
    before: str
    after: str
    explicit: bool = True


@dataclass(frozen=True)
class StructuredCaption:
    """Anchored unit sets extracted from one caption"""

    objects: FrozenSet[ObjectUnit] = frozenset()
    attributes: FrozenSet[AttributeUnit] = frozenset()
    relations: FrozenSet[RelationUnit] = frozenset()
    events: FrozenSet[EventMention] = frozenset()
    orders: FrozenSet[OrderAssertion] = frozenset()
    source_text: Optional[str] = field(default=None, compare=False)

    @classmethod
    def build(
        cls,
        objects: Iterable[ObjectUnit] = (),
        attributes: Iterable[AttributeUnit] = (),
        relations: Iterable[RelationUnit] = (),
        events: Iterable[EventMention] = (),
        orders: Iterable[OrderAssertion] = (),
        source_text: Optional[str] = None,
    ) -> "StructuredCaption":
        """Build a caption, deduplicating units on exact field equality"""
        return cls(
            objects=frozenset(objects),
            attributes=frozenset(attributes),
            relations=frozenset(relations),
            events=frozenset(events),
            orders=frozenset(orders),
            source_text=source_text,
        )

    def object_by_id(self) -> Dict[str, ObjectUnit]:
        return {o.id: o for o in self.objects}

    def event_by_id(self) -> Dict[str, EventMention]:
        return {e.id: e for e in self.events}

    def sorted_objects(self) -> List[ObjectUnit]:
        return sorted(self.objects, key=lambda o: (o.clause, o.id))

    def sorted_attributes(self) -> List[AttributeUnit]:
        return sorted(self.attributes, key=lambda a: (a.clause, a.object, a.value))

    def sorted_relations(self) -> List[RelationUnit]:
        return sorted(self.relations, key=lambda r: (r.clause, r.subject, r.predicate, r.object))

    def sorted_events(self) -> List[EventMention]:
        return sorted(self.events, key=lambda e: (e.clause, e.order_index, e.id))

    def sorted_orders(self) -> List[OrderAssertion]:
        return sorted(self.orders, key=lambda o: (o.before, o.after, o.explicit))

    def with_units(self, **changes: Any) -> "StructuredCaption":
        """Return a copy with some unit sets replaced"""
        frozen = {k: frozenset(v) if k != "source_text" else v for k, v in changes.items()}
        return replace(self, **frozen)


@dataclass(frozen=True)
class Violation:
    """One broken invariant, naming the unit and the rule"""

    rule: str
    unit: str
    message: str

    def to_dict(self) -> Dict[str, str]:
        return {"rule": self.rule, "unit": self.unit, "message": self.message}


# Ingest schema
class _Unit(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ObjectModel(_Unit):
    id: StrictStr
    head: StrictStr
    phrase: StrictStr
    clause: StrictInt = Field(ge=0)


class AttributeModel(_Unit):
    object: StrictStr
    value: StrictStr
    clause: StrictInt = Field(ge=0)


class RelationModel(_Unit):
    subject: StrictStr
    predicate: StrictStr
    object: StrictStr
    clause: StrictInt = Field(ge=0)


class EventModel(_Unit):
    id: StrictStr
    predicate: StrictStr
    participants: List[StrictStr] = Field(min_length=1)
    clause: StrictInt = Field(ge=0)
    order_index: StrictInt = Field(ge=0)


class OrderModel(_Unit):
    before: StrictStr
    after: StrictStr
    explicit: StrictBool = True


class CaptionDocument(_Unit):
    source_text: Optional[StrictStr] = None
    objects: List[ObjectModel] = Field(default_factory=list)
    attributes: List[AttributeModel] = Field(default_factory=list)
    relations: List[RelationModel] = Field(default_factory=list)
    events: List[EventModel] = Field(default_factory=list)
    orders: List[OrderModel] = Field(default_factory=list)


def from_dict(doc: Any) -> StructuredCaption:
    """Validate a decoded document and build the caption, raising one typed error"""
    try:
        parsed = CaptionDocument.model_validate(doc)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(p) for p in first["loc"])
        raise SchemaError(f"{location}: {first['msg']}") from None

    # Unit sets collapse repeats, so they are caught on the document lists
    for name in ("attributes", "relations", "orders"):
        seen = set()
        for i, unit in enumerate(getattr(parsed, name)):
            key = tuple(unit.model_dump().values())
            if key in seen:
                raise DuplicateUnit(f"{name}.{i}: repeats an earlier unit")
            seen.add(key)

    caption = StructuredCaption.build(
        objects=(ObjectUnit(o.id, o.head, o.phrase, o.clause) for o in parsed.objects),
        attributes=(AttributeUnit(a.object, a.value, a.clause) for a in parsed.attributes),
        relations=(
            RelationUnit(r.subject, r.predicate, r.object, r.clause) for r in parsed.relations
        ),
        events=(
            EventMention(e.id, e.predicate, tuple(e.participants), e.clause, e.order_index)
            for e in parsed.events
        ),
        orders=(OrderAssertion(o.before, o.after, o.explicit) for o in parsed.orders),
        source_text=parsed.source_text,
    )
    raise_for_violations(validate(caption))
    return caption


def ingest_json(data: bytes) -> StructuredCaption:
    """Ingest a pre-parsed structured caption document"""
    try:
        doc = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"not a JSON document: {e}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    return from_dict(doc)


def to_dict(caption: StructuredCaption) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "objects": [
            {"id": o.id, "head": o.head, "phrase": o.phrase, "clause": o.clause}
            for o in caption.sorted_objects()
        ],
        "attributes": [
            {"object": a.object, "value": a.value, "clause": a.clause}
            for a in caption.sorted_attributes()
        ],
        "relations": [
            {"subject": r.subject, "predicate": r.predicate, "object": r.object, "clause": r.clause}
            for r in caption.sorted_relations()
        ],
        "events": [
            {
                "id": e.id,
                "predicate": e.predicate,
                "participants": list(e.participants),
                "clause": e.clause,
                "order_index": e.order_index,
            }
            for e in caption.sorted_events()
        ],
        "orders": [
            {"before": o.before, "after": o.after, "explicit": o.explicit}
            for o in caption.sorted_orders()
        ],
    }
    if caption.source_text is not None:
        doc["source_text"] = caption.source_text
    return doc


def serialize(caption: StructuredCaption) -> bytes:
    """Canonical bytes: keys sorted, units sorted by (clause, id)"""
    return canonical_dumps(to_dict(caption)).encode("utf-8")


def validate(caption: StructuredCaption) -> List[Violation]:
    """Check every caption invariant; an empty list means the caption is valid"""
    violations: List[Violation] = []

    object_ids: Dict[str, List[ObjectUnit]] = defaultdict(list)
    for obj in caption.sorted_objects():
        object_ids[obj.id].append(obj)
    for anchor, units in object_ids.items():
        if len(units) > 1:
            violations.append(Violation("DuplicateId", anchor, f"object id {anchor} declared twice"))

    instances: Dict[str, List[int]] = defaultdict(list)
    for obj in caption.sorted_objects():
        parts = split_anchor(obj.id)
        if parts is None or parts[0] != obj.head:
            violations.append(
                Violation("AnchorFormat", obj.id, f"object id must be {obj.head}_k with k >= 1")
            )
            continue
        instances[obj.head].append(parts[1])
    for head, ks in sorted(instances.items()):
        expected = list(range(1, len(set(ks)) + 1))
        if sorted(set(ks)) != expected:
            violations.append(
                Violation(
                    "NonConsecutiveInstanceId",
                    head,
                    f"instance ids for {head} are {sorted(set(ks))}, expected {expected}",
                )
            )

    known = set(object_ids)
    for attr in caption.sorted_attributes():
        if attr.object not in known:
            violations.append(
                Violation("DanglingAnchor", attr.object, f"attribute {attr.value} on missing object")
            )
    for rel in caption.sorted_relations():
        for anchor in (rel.subject, rel.object):
            if anchor not in known:
                violations.append(
                    Violation("DanglingAnchor", anchor, f"relation {rel.predicate} on missing object")
                )

    event_ids: Dict[str, int] = defaultdict(int)
    for event in caption.events:
        event_ids[event.id] += 1
    for event_id, count in sorted(event_ids.items()):
        if count > 1:
            violations.append(Violation("DuplicateId", event_id, f"event id {event_id} declared twice"))

    previous: Optional[EventMention] = None
    for event in caption.sorted_events():
        if not event.participants:
            violations.append(Violation("EmptyParticipants", event.id, "event has no participants"))
        for anchor in event.participants:
            if anchor not in known:
                violations.append(
                    Violation("DanglingAnchor", anchor, f"event {event.id} binds missing object")
                )
        if previous is not None and event.order_index <= previous.order_index:
            violations.append(
                Violation(
                    "OrderIndexViolation",
                    event.id,
                    f"order_index {event.order_index} does not follow {previous.order_index}",
                )
            )
        previous = event

    for order in caption.sorted_orders():
        label = f"{order.before}<{order.after}"
        if order.before == order.after:
            violations.append(Violation("SelfOrder", label, "an event cannot precede itself"))
        for event_id in (order.before, order.after):
            if event_id not in event_ids:
                violations.append(
                    Violation("DanglingAnchor", event_id, f"order references missing event {event_id}")
                )
    return violations


def raise_for_violations(violations: List[Violation]) -> None:
    """Raise exactly one typed error for the most fundamental violation"""
    if not violations:
        return
    for rule, error in (
        ("DuplicateId", DuplicateId),
        ("DanglingAnchor", DanglingAnchor),
        ("SelfOrder", InvalidOrder),
        ("OrderIndexViolation", InvalidOrder),
    ):
        for v in violations:
            if v.rule == rule:
                raise error(f"{v.unit}: {v.message}")
    v = violations[0]
    raise SchemaError(f"{v.rule} at {v.unit}: {v.message}")


def _relabel(caption: StructuredCaption) -> StructuredCaption:
    object_names: Dict[str, str] = {}
    by_head: Dict[str, List[ObjectUnit]] = defaultdict(list)
    for obj in caption.objects:
        by_head[obj.head].append(obj)
    for head, units in by_head.items():
        units.sort(key=lambda o: (o.clause, split_anchor(o.id) or (head, 0), o.id))
        for k, obj in enumerate(units, start=1):
            object_names[obj.id] = make_anchor(head, k)

    event_names: Dict[str, str] = {}
    by_predicate: Dict[str, List[EventMention]] = defaultdict(list)
    for event in caption.events:
        by_predicate[event.predicate].append(event)
    for predicate, events in by_predicate.items():
        events.sort(key=lambda e: (e.order_index, e.clause, e.id))
        for j, event in enumerate(events, start=1):
            event_names[event.id] = make_event_id(predicate, j)

    rename = lambda anchor: object_names.get(anchor, anchor)  # noqa: E731
    return StructuredCaption.build(
        objects=(replace(o, id=rename(o.id)) for o in caption.objects),
        attributes=(replace(a, object=rename(a.object)) for a in caption.attributes),
        relations=(
            replace(r, subject=rename(r.subject), object=rename(r.object)) for r in caption.relations
        ),
        events=(
            replace(
                e,
                id=event_names[e.id],
                participants=tuple(rename(p) for p in e.participants),
            )
            for e in caption.events
        ),
        orders=(
            replace(o, before=event_names.get(o.before, o.before), after=event_names.get(o.after, o.after))
            for o in caption.orders
        ),
    )


def isomorphic(a: StructuredCaption, b: StructuredCaption) -> bool:
    """True when the captions agree up to anchor renaming"""
    return _relabel(a) == _relabel(b)
