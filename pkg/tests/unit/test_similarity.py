"""Unit tests for phrase canonicalization and similarity."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structreward.errors import EmbeddingTableError, TableDimensionMismatch
from structreward.parsers.lexicon import default_lexicon
from structreward.utils.similarity import (
    SimilarityProvider,
    canonicalize,
    dice,
    load_embedding_table,
)

phrases = st.text(alphabet="abcdefg ", min_size=0, max_size=12)


@pytest.mark.unit
def test_canonicalize(lexicon):
    assert canonicalize("The  Red Cups", lexicon) == "red cup"
    assert canonicalize("another man", lexicon) == "man"


@pytest.mark.unit
@pytest.mark.parametrize(
    "a,b,expected",
    [
        ("red cup", "cup", 0.5),
        ("cup", "mug", 0.0),
        ("crimson", "red", 0.0),
        ("small cup", "tall cup", 0.8),
        ("cup", "cup", 1.0),
        ("", "", 1.0),
    ],
)
def test_dice_values(a, b, expected):
    assert dice(a, b) == pytest.approx(expected)


@pytest.mark.unit
def test_attribute_change_can_break_object_alignment():
    """'red cup' and 'blue cup' fall below the default 0.5 matching floor."""
    assert dice("red cup", "blue cup") < 0.5


@pytest.mark.unit
@settings(max_examples=200, deadline=None)
@given(phrases, phrases)
def test_dice_is_symmetric_and_bounded(a, b):
    provider = SimilarityProvider()
    score = provider.score(a, b)
    assert score == provider.score(b, a)
    assert 0.0 <= score <= 1.0


@pytest.mark.unit
@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["the", "a", "red", "cups", "man", "Sat", "table"]), max_size=5))
def test_canonicalize_is_idempotent(words):
    lexicon = default_lexicon()
    once = canonicalize(" ".join(words), lexicon)
    assert canonicalize(once, lexicon) == once


@pytest.mark.unit
def test_embedding_table_provider(tmp_path):
    path = tmp_path / "table.txt"
    path.write_text("dim=2\ncup\t1.0 0.0\nmug\t1.0 0.0\nplate\t0.0 1.0\n")
    provider = SimilarityProvider.from_settings("embedding_table", table_path=str(path))
    assert provider.score("cup", "mug") == pytest.approx(1.0)
    assert provider.score("cup", "plate") == pytest.approx(0.5)
    # Phrases outside the table fall back to lexical Dice
    assert provider.score("red cup", "cup") == pytest.approx(0.5)


@pytest.mark.unit
def test_embedding_table_errors(tmp_path):
    bad_dim = tmp_path / "dim.txt"
    bad_dim.write_text("dim=3\ncup\t1.0 0.0\n")
    with pytest.raises(TableDimensionMismatch):
        load_embedding_table(str(bad_dim))

    bad_norm = tmp_path / "norm.txt"
    bad_norm.write_text("dim=2\ncup\t1.0 1.0\n")
    with pytest.raises(EmbeddingTableError):
        load_embedding_table(str(bad_norm))

    no_header = tmp_path / "header.txt"
    no_header.write_text("cup\t1.0 0.0\n")
    with pytest.raises(EmbeddingTableError):
        load_embedding_table(str(no_header))

    with pytest.raises(EmbeddingTableError):
        load_embedding_table(str(tmp_path / "missing.txt"))
