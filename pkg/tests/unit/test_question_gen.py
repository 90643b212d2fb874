"""Unit tests for templated verification questions."""

import pytest

from structreward.core.matcher import EventMatching, ObjectMap, build_object_map, match_events
from structreward.errors import MissingSlot, QuestionError
from structreward.generators.question_gen import (
    FACTUAL,
    NO,
    TEMPORAL,
    YES,
    QuestionGenerator,
    QuestionSet,
    VerificationQuestion,
    balance_and_cap,
    factual_negative_questions,
    factual_positive_questions,
    render,
    temporal_negative_questions,
    temporal_positive_questions,
)
from structreward.parsers.grammar_parser import parse_caption
from tests.utils import REPEATED_EVENT_CAPTION

TWO_MEN = "A man is present. Another man is present. A cup is present. "


def _align(gen, ref, provider):
    object_map = build_object_map(gen, ref, provider)
    return object_map, match_events(gen.events, ref.events, object_map, provider)


@pytest.mark.unit
def test_render_templates():
    assert render("existence", {"object": "old cup"}) == "Is there an old cup?"
    assert render("attribute", {"object": "cup", "attribute": "red"}) == "Is the cup red?"
    assert render("temporal_order", {"event_1": "x", "event_2": "y"}) == "Did x happen before y?"


@pytest.mark.unit
def test_render_errors():
    with pytest.raises(QuestionError):
        render("colour", {"object": "cup"})
    with pytest.raises(MissingSlot):
        render("attribute", {"object": "cup"})


@pytest.mark.unit
def test_factual_positive_support_chain():
    ref = parse_caption("A red cup is on a table.")
    qs = factual_positive_questions(ref)
    assert [q.text for q in qs] == [
        "Is there a red cup?",
        "Is there a table?",
        "Is the cup red?",
        "Does the cup on the table?",
    ]
    assert all(q.label == YES and q.branch == FACTUAL for q in qs)
    assert qs.positives_count == 4
    assert qs.negatives_count == 0


@pytest.mark.unit
def test_no_relations_means_no_factual_positives():
    assert len(factual_positive_questions(parse_caption("A red cup is present."))) == 0


@pytest.mark.unit
def test_attribute_conflict_negative():
    ref = parse_caption("A red cup is on a table.")
    gen = parse_caption("A blue cup is on a table.")
    qs = factual_negative_questions(gen, ref, ObjectMap.identity(gen), EventMatching())
    assert [(q.text, q.label) for q in qs] == [("Is the cup blue?", NO)]
    assert qs.questions[0].provenance["source"] == "attribute_conflict"


@pytest.mark.unit
def test_relation_conflict_negative(provider):
    ref = parse_caption("A man pulls a cart.")
    gen = parse_caption("A man pushes a cart.")
    object_map, events = _align(gen, ref, provider)
    qs = factual_negative_questions(gen, ref, object_map, events)
    assert [(q.text, q.label) for q in qs] == [("Does the man push the cart?", NO)]


@pytest.mark.unit
def test_unmapped_units_yield_no_negatives():
    ref = parse_caption("A red cup is on a table.")
    gen = parse_caption("A blue cup is on a table.")
    assert len(factual_negative_questions(gen, ref, ObjectMap(), EventMatching())) == 0


@pytest.mark.unit
def test_temporal_positives_need_an_explicit_order():
    qs = temporal_positive_questions(parse_caption(REPEATED_EVENT_CAPTION))
    assert len(qs) == 3
    assert [q.kind for q in qs] == ["event_occurrence", "event_occurrence", "temporal_order"]
    assert qs.questions[0].text == "Does the man lift the first cup?"
    assert qs.questions[1].text == "Does the man lift the second cup again?"
    assert all(q.branch == TEMPORAL and q.label == YES for q in qs)

    unordered = parse_caption("A man lifts a cup. A woman sits.")
    assert len(temporal_positive_questions(unordered)) == 0


@pytest.mark.unit
def test_order_inversion_negative(provider):
    ref = parse_caption(REPEATED_EVENT_CAPTION)
    object_map, events = _align(ref, ref, provider)
    qs = temporal_negative_questions(ref, ref, events, object_map)
    assert len(qs) == 1
    question = qs.questions[0]
    assert question.label == NO
    assert question.provenance["source"] == "order_inversion"
    assert question.slots["first"]["id"] == "lift#2"
    assert question.slots["second"]["id"] == "lift#1"


@pytest.mark.unit
def test_binding_conflict_negative(provider):
    ref = parse_caption(TWO_MEN + "The first man lifts the cup. Then the second man lifts the cup.")
    gen = parse_caption(TWO_MEN + "The first man lifts the cup. Then the first man lifts the cup.")
    object_map, events = _align(gen, ref, provider)
    assert events.pairs == {"lift#1": "lift#1"}
    assert events.conflicts == {"lift#2": "lift#2"}

    qs = temporal_negative_questions(gen, ref, events, object_map)
    assert [q.provenance["source"] for q in qs] == ["binding_conflict"]
    second = qs.questions[0].slots["second"]
    assert second["participants"] == ["man_1", "cup_1"]

    factual = factual_negative_questions(gen, ref, object_map, events)
    assert [q.provenance["source"] for q in factual] == ["participant_conflict"]


@pytest.mark.unit
def test_object_phrase_disambiguates_repeated_heads():
    generator = QuestionGenerator(parse_caption("A cup is present. Another cup is present."))
    assert generator.object_noun("cup_2") == "second cup"
    assert generator.existence("cup_1", YES, FACTUAL, "reference").text == "Is there a first cup?"


@pytest.mark.unit
def test_deduplication_keeps_first_occurrence():
    q = VerificationQuestion(FACTUAL, "existence", "Is there a cup?", YES, {"slots": {"object": "cup_1"}})
    again = VerificationQuestion(FACTUAL, "existence", "Is there a cup?", YES, {"slots": {"object": "cup_1"}})
    assert len(QuestionSet.deduplicated([q, again])) == 1
    assert VerificationQuestion.from_dict(q.to_dict()) == q


def _labelled(labels):
    return QuestionSet(
        [
            VerificationQuestion(FACTUAL, "existence", f"q{i}", label, {"slots": {"object": f"cup_{i + 1}"}})
            for i, label in enumerate(labels)
        ]
    )


@pytest.mark.unit
def test_balance_downsamples_the_larger_class():
    balanced = balance_and_cap(_labelled([YES] * 5 + [NO]), rng_seed=3)
    assert balanced.positives_count == 2
    assert balanced.negatives_count == 1
    texts = [q.text for q in balanced]
    assert texts == sorted(texts, key=lambda t: int(t[1:]))


@pytest.mark.unit
def test_balance_is_deterministic_and_caps():
    qs = _labelled([YES] * 4 + [NO] * 3)
    assert balance_and_cap(qs, rng_seed=7).to_list() == balance_and_cap(qs, rng_seed=7).to_list()
    assert len(balance_and_cap(qs, budget=2)) == 2
    assert len(balance_and_cap(qs, budget=0)) == 0
    # A single label class is left alone
    assert len(balance_and_cap(_labelled([YES] * 4))) == 4
    with pytest.raises(QuestionError):
        balance_and_cap(qs, budget=-1)
