"""Unit tests for lexicon loading and morphology."""

import pytest

from structreward.errors import LexiconError
from structreward.parsers.lexicon import (
    indefinite_article,
    inflect_third_person,
    lemmatize,
    load_lexicon,
    parse_lexicon,
)


@pytest.mark.unit
def test_default_lexicon_sections(lexicon):
    assert "cup" in lexicon.nouns
    assert "red" in lexicon.adjectives
    assert lexicon.verbs["lift"] == 2
    assert lexicon.verbs["sit"] == 1
    assert "next to" in lexicon.prepositions
    assert "in front of" in lexicon.prepositions
    assert lexicon.connectives["afterwards"] == "then"
    assert lexicon.category("table") == "noun"
    assert lexicon.category("wooden") == "adjective"
    assert lexicon.category("zebra") is None


@pytest.mark.unit
@pytest.mark.parametrize(
    "surface,lemma",
    [
        ("cups", "cup"),
        ("boxes", "box"),
        ("sat", "sit"),
        ("lifted", "lift"),
        ("pushes", "push"),
        ("running", "run"),
        ("carries", "carry"),
        ("waves", "wave"),
        ("men", "man"),
        ("zebras", "zebras"),
    ],
)
def test_lemmatize(lexicon, surface, lemma):
    assert lemmatize(surface, lexicon) == lemma


@pytest.mark.unit
@pytest.mark.parametrize(
    "lemma,form",
    [("lift", "lifts"), ("push", "pushes"), ("carry", "carries"), ("sit", "sits"), ("wave", "waves")],
)
def test_inflect_third_person(lemma, form):
    assert inflect_third_person(lemma) == form


@pytest.mark.unit
def test_indefinite_article():
    assert indefinite_article("old cup") == "an"
    assert indefinite_article("red cup") == "a"


@pytest.mark.unit
def test_parse_lexicon_rejects_shared_words():
    with pytest.raises(LexiconError):
        parse_lexicon("[nouns]\ncup\n[adjectives]\ncup\n")


@pytest.mark.unit
def test_parse_lexicon_rejects_bad_entries():
    with pytest.raises(LexiconError):
        parse_lexicon("[verbs]\nlift\n")
    with pytest.raises(LexiconError):
        parse_lexicon("[colours]\nred\n")
    with pytest.raises(LexiconError):
        parse_lexicon("cup\n")
    with pytest.raises(LexiconError):
        parse_lexicon("[nouns]\ncup\n[irregular]\nmice=mouse\n")


@pytest.mark.unit
def test_load_lexicon_missing_file(tmp_path):
    with pytest.raises(LexiconError):
        load_lexicon(str(tmp_path / "missing.txt"))


@pytest.mark.unit
def test_load_custom_lexicon(tmp_path):
    path = tmp_path / "lexicon.txt"
    path.write_text("[nouns]\nmug # a comment\n[prepositions]\nnext_to\n")
    lexicon = load_lexicon(str(path))
    assert lexicon.nouns == frozenset({"mug"})
    assert lexicon.prepositions == frozenset({"next to"})
