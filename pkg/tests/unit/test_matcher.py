"""Unit tests for maximum-weight matching and typed unit matching."""

import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structreward.core.matcher import (
    ObjectMap,
    build_object_map,
    match_events,
    match_typed_units,
    max_weight_matching,
)
from structreward.errors import WeightOutOfRange
from structreward.models.caption_ir import AttributeUnit, EventMention, ObjectUnit, RelationUnit
from structreward.parsers.grammar_parser import parse_caption


def _brute_force(weights: np.ndarray) -> float:
    """Best total over every partial injection of rows into columns"""
    n_rows, n_cols = weights.shape

    @functools.lru_cache(maxsize=None)
    def best(row: int, used: int) -> float:
        if row == n_rows:
            return 0.0
        total = best(row + 1, used)
        for c in range(n_cols):
            if not used & (1 << c):
                total = max(total, float(weights[row, c]) + best(row + 1, used | (1 << c)))
        return total

    return best(0, 0)


matrices = st.integers(min_value=0, max_value=7).flatmap(
    lambda rows: st.integers(min_value=0, max_value=7).flatmap(
        lambda cols: st.lists(
            st.lists(st.integers(0, 10).map(lambda x: x / 10), min_size=cols, max_size=cols),
            min_size=rows,
            max_size=rows,
        ).map(lambda data: np.array(data, dtype=np.float64).reshape(rows, cols))
    )
)


@pytest.mark.unit
def test_simple_matching():
    matching = max_weight_matching([[0.9, 0.1], [0.2, 0.8]])
    assert matching.pairs == {(0, 0), (1, 1)}
    assert matching.total_weight == pytest.approx(1.7)


@pytest.mark.unit
def test_empty_and_thresholded_matrices():
    assert max_weight_matching(np.zeros((0, 0))).pairs == frozenset()
    assert max_weight_matching(np.zeros((0, 3))).total_weight == 0.0
    below = max_weight_matching([[0.4]], min_weight=0.5)
    assert below.pairs == frozenset()
    assert below.total_weight == 0.0


@pytest.mark.unit
def test_ties_take_the_lowest_column():
    assert max_weight_matching([[1.0, 1.0]]).pairs == {(0, 0)}
    assert max_weight_matching([[0.5, 0.5], [0.5, 0.5]]).pairs == {(0, 0), (1, 1)}


@pytest.mark.unit
def test_weights_outside_unit_interval():
    with pytest.raises(WeightOutOfRange):
        max_weight_matching([[1.5]])
    with pytest.raises(WeightOutOfRange):
        max_weight_matching([[-0.1]])


@pytest.mark.unit
@settings(max_examples=200, deadline=None)
@given(matrices, st.sampled_from([0.0, 0.3, 0.5]))
def test_matching_is_optimal(weights, min_weight):
    matching = max_weight_matching(weights, min_weight)
    thresholded = np.where(weights >= min_weight, weights, 0.0) if weights.size else weights
    expected = _brute_force(thresholded) if weights.size else 0.0
    assert matching.total_weight == pytest.approx(expected, abs=1e-9)
    rows = [r for r, _ in matching.pairs]
    cols = [c for _, c in matching.pairs]
    assert len(rows) == len(set(rows))
    assert len(cols) == len(set(cols))
    assert all(thresholded[r, c] > 0 for r, c in matching.pairs)


@pytest.mark.unit
def test_object_map_identity_for_identical_captions(provider):
    caption = parse_caption("A red cup is on a wooden table.")
    object_map = build_object_map(caption, caption, provider)
    assert object_map.pairs == {"cup_1": "cup_1", "table_1": "table_1"}


@pytest.mark.unit
def test_object_map_prefers_lowest_instance_on_ties(provider):
    gen = parse_caption("A cup is present.")
    ref = parse_caption("A cup is present. Another cup is present.")
    assert build_object_map(gen, ref, provider).pairs == {"cup_1": "cup_1"}


@pytest.mark.unit
def test_object_map_leaves_dissimilar_objects_unmapped(provider):
    gen = parse_caption("A mug is present.")
    ref = parse_caption("A cup is present.")
    assert build_object_map(gen, ref, provider).pairs == {}


@pytest.mark.unit
def test_unmatched_attribute_contributes_nothing(provider):
    object_map = ObjectMap({"cup_1": "cup_1"}, {"cup_1": 1.0})
    result = match_typed_units(
        "attr",
        [AttributeUnit("cup_1", "crimson", 0)],
        [AttributeUnit("cup_1", "red", 0)],
        object_map,
        provider,
    )
    assert result.matched_mass == 0.0
    assert result.residual_pairs == []
    assert (result.gen_count, result.ref_count) == (1, 1)


@pytest.mark.unit
def test_relation_needs_both_endpoints_mapped(provider):
    gen = [RelationUnit("cup_1", "on", "table_1", 0)]
    ref = [RelationUnit("cup_1", "on", "table_1", 0)]
    partial = ObjectMap({"table_1": "table_1"}, {"table_1": 1.0})
    assert match_typed_units("rel", gen, ref, partial, provider).matched_mass == 0.0
    full = ObjectMap({"cup_1": "cup_1", "table_1": "table_1"}, {"cup_1": 1.0, "table_1": 1.0})
    assert match_typed_units("rel", gen, ref, full, provider).matched_mass == 1.0


@pytest.mark.unit
def test_repeated_generated_unit_is_consumed_once(provider):
    object_map = ObjectMap({"cup_1": "cup_1"}, {"cup_1": 1.0})
    result = match_typed_units(
        "attr",
        [AttributeUnit("cup_1", "red", 0), AttributeUnit("cup_1", "red", 1)],
        [AttributeUnit("cup_1", "red", 0)],
        object_map,
        provider,
    )
    assert len(result.exact_pairs) == 1
    assert result.matched_mass == 1.0
    assert result.gen_count == 2
    assert len(result.unmatched_generated) == 1


@pytest.mark.unit
def test_residual_substitution_earns_partial_credit(provider):
    object_map = ObjectMap({"cup_1": "cup_1"}, {"cup_1": 1.0})
    result = match_typed_units(
        "obj",
        [ObjectUnit("cup_1", "cup", "small cup", 0)],
        [ObjectUnit("cup_1", "cup", "tall cup", 0)],
        object_map,
        provider,
    )
    assert result.exact_pairs == []
    assert result.matched_mass == pytest.approx(0.8)


@pytest.mark.unit
def test_match_events_pairs_and_conflicts(provider):
    man1, man2, cup = "man_1", "man_2", "cup_1"
    ref = [
        EventMention("lift#1", "lift", (man1, cup), 0, 0),
        EventMention("lift#2", "lift", (man2, cup), 1, 1),
    ]
    gen = [
        EventMention("lift#1", "lift", (man1, cup), 0, 0),
        EventMention("lift#2", "lift", (man1, cup), 1, 1),
    ]
    identity = ObjectMap({a: a for a in (man1, man2, cup)}, {a: 1.0 for a in (man1, man2, cup)})
    matching = match_events(gen, ref, identity, provider)
    assert matching.pairs == {"lift#1": "lift#1"}
    assert matching.conflicts == {"lift#2": "lift#2"}
    assert matching.inverse == {"lift#1": "lift#1"}


@pytest.mark.unit
def test_match_events_needs_similar_predicates(provider):
    identity = ObjectMap({"man_1": "man_1", "cart_1": "cart_1"}, {"man_1": 1.0, "cart_1": 1.0})
    gen = [EventMention("push#1", "push", ("man_1", "cart_1"), 0, 0)]
    ref = [EventMention("pull#1", "pull", ("man_1", "cart_1"), 0, 0)]
    matching = match_events(gen, ref, identity, provider)
    assert matching.pairs == {}
    assert matching.conflicts == {}
