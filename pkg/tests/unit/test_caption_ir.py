"""Unit tests for the structured caption IR."""

import json

import pytest

from structreward.errors import DanglingAnchor, DuplicateId, DuplicateUnit, InvalidOrder, SchemaError
from structreward.models.caption_ir import (
    AttributeUnit,
    EventMention,
    ObjectUnit,
    OrderAssertion,
    RelationUnit,
    StructuredCaption,
    from_dict,
    ingest_json,
    isomorphic,
    serialize,
    split_anchor,
    to_dict,
    validate,
)
from tests.utils import DANGLING_IR


def _cup_on_table():
    return StructuredCaption.build(
        objects=[
            ObjectUnit("cup_1", "cup", "red cup", 0),
            ObjectUnit("table_1", "table", "table", 0),
        ],
        attributes=[AttributeUnit("cup_1", "red", 0)],
        relations=[RelationUnit("cup_1", "on", "table_1", 0)],
    )


def _rules(caption):
    return [v.rule for v in validate(caption)]


@pytest.mark.unit
def test_split_anchor():
    """Anchors are head_k with k >= 1; heads may contain underscores."""
    assert split_anchor("cup_1") == ("cup", 1)
    assert split_anchor("tea_cup_12") == ("tea_cup", 12)
    assert split_anchor("cup_0") is None
    assert split_anchor("cup") is None


@pytest.mark.unit
def test_build_deduplicates_exact_units():
    """Units equal on every field collapse to one."""
    caption = StructuredCaption.build(
        objects=[ObjectUnit("cup_1", "cup", "cup", 0)],
        attributes=[AttributeUnit("cup_1", "red", 0), AttributeUnit("cup_1", "red", 0)],
    )
    assert len(caption.attributes) == 1


@pytest.mark.unit
def test_valid_caption_has_no_violations():
    assert validate(_cup_on_table()) == []
    assert validate(StructuredCaption()) == []


@pytest.mark.unit
def test_dangling_attribute_anchor():
    caption = _cup_on_table().with_units(
        attributes=[AttributeUnit("cup_2", "red", 0)]
    )
    violations = validate(caption)
    assert [v.rule for v in violations] == ["DanglingAnchor"]
    assert violations[0].unit == "cup_2"


@pytest.mark.unit
def test_non_consecutive_instance_ids():
    caption = StructuredCaption.build(
        objects=[ObjectUnit("cup_1", "cup", "cup", 0), ObjectUnit("cup_3", "cup", "cup", 1)]
    )
    assert _rules(caption) == ["NonConsecutiveInstanceId"]


@pytest.mark.unit
def test_anchor_must_match_head():
    caption = StructuredCaption.build(objects=[ObjectUnit("mug_1", "cup", "cup", 0)])
    assert "AnchorFormat" in _rules(caption)


@pytest.mark.unit
def test_duplicate_object_id():
    caption = StructuredCaption.build(
        objects=[ObjectUnit("cup_1", "cup", "cup", 0), ObjectUnit("cup_1", "cup", "red cup", 1)]
    )
    assert "DuplicateId" in _rules(caption)


@pytest.mark.unit
def test_event_and_order_rules():
    man = ObjectUnit("man_1", "man", "man", 0)
    caption = StructuredCaption.build(
        objects=[man],
        events=[
            EventMention("sit#1", "sit", ("man_1",), 0, 1),
            EventMention("stand#1", "stand", ("man_1",), 1, 0),
        ],
        orders=[OrderAssertion("sit#1", "sit#1"), OrderAssertion("sit#1", "run#1")],
    )
    rules = _rules(caption)
    assert "OrderIndexViolation" in rules
    assert "SelfOrder" in rules
    assert "DanglingAnchor" in rules


@pytest.mark.unit
def test_event_binding_missing_object():
    caption = StructuredCaption.build(
        events=[EventMention("sit#1", "sit", ("man_1",), 0, 0)]
    )
    assert _rules(caption) == ["DanglingAnchor"]


@pytest.mark.unit
def test_from_dict_raises_dangling_anchor():
    with pytest.raises(DanglingAnchor) as excinfo:
        from_dict(DANGLING_IR)
    assert "cup_2" in str(excinfo.value)


@pytest.mark.unit
def test_duplicate_id_wins_over_dangling_anchor():
    doc = dict(DANGLING_IR)
    doc["objects"] = DANGLING_IR["objects"] + [{"id": "cup_1", "head": "cup", "phrase": "red cup", "clause": 1}]
    with pytest.raises(DuplicateId):
        from_dict(doc)


@pytest.mark.unit
def test_ingest_rejects_malformed_documents():
    with pytest.raises(SchemaError):
        ingest_json(b"not json")
    with pytest.raises(SchemaError):
        ingest_json(b"[]")
    with pytest.raises(SchemaError):
        ingest_json(json.dumps({"objects": [], "extra": 1}).encode())
    with pytest.raises(SchemaError):
        ingest_json(json.dumps({"objects": [{"id": "cup_1", "head": "cup", "phrase": "cup", "clause": "0"}]}).encode())


@pytest.mark.unit
def test_ingest_reads_a_serialized_caption():
    caption = _cup_on_table()
    assert ingest_json(serialize(caption)) == caption


@pytest.mark.unit
def test_serialize_is_canonical():
    """Key order and unit order do not depend on construction order."""
    a = _cup_on_table()
    b = StructuredCaption.build(
        objects=list(reversed(sorted(a.objects))),
        attributes=a.attributes,
        relations=a.relations,
    )
    assert serialize(a) == serialize(b)
    doc = to_dict(a)
    assert [o["id"] for o in doc["objects"]] == ["cup_1", "table_1"]
    assert "source_text" not in doc


@pytest.mark.unit
def test_isomorphic_under_anchor_renaming():
    a = StructuredCaption.build(
        objects=[ObjectUnit("cup_1", "cup", "cup", 0), ObjectUnit("cup_2", "cup", "red cup", 1)],
        attributes=[AttributeUnit("cup_2", "red", 1)],
    )
    b = StructuredCaption.build(
        objects=[ObjectUnit("cup_2", "cup", "cup", 0), ObjectUnit("cup_1", "cup", "red cup", 1)],
        attributes=[AttributeUnit("cup_1", "red", 1)],
    )
    assert a != b
    assert isomorphic(a, b)
    assert not isomorphic(a, b.with_units(attributes=[AttributeUnit("cup_1", "blue", 1)]))


@pytest.mark.unit
def test_repeated_unit_in_document():
    doc = {
        "objects": [{"id": "cup_1", "head": "cup", "phrase": "red cup", "clause": 0}],
        "attributes": [
            {"object": "cup_1", "value": "red", "clause": 0},
            {"object": "cup_1", "value": "red", "clause": 0},
        ],
    }
    with pytest.raises(DuplicateUnit):
        from_dict(doc)


@pytest.mark.unit
def test_self_order_in_document():
    doc = {
        "objects": [{"id": "man_1", "head": "man", "phrase": "man", "clause": 0}],
        "events": [{"id": "sit#1", "predicate": "sit", "participants": ["man_1"], "clause": 0, "order_index": 0}],
        "orders": [{"before": "sit#1", "after": "sit#1"}],
    }
    with pytest.raises(InvalidOrder):
        from_dict(doc)
