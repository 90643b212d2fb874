# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Lexicon loading, lemmatization and verb inflection
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional

from structreward.errors import LexiconError

DEFAULT_LEXICON_PATH = os.path.abspath(
    os.path.join(os.path.dirname(os.path.dirname(__file__)), "lexicon.txt")
)

CONNECTIVE_ROLES = ("then", "before", "after", "first", "again")
SECTIONS = ("nouns", "adjectives", "verbs", "prepositions", "connectives", "irregular")
VOWELS = set("aeiou")


@dataclass(frozen=True)
class Lexicon:
    """Closed vocabulary of the caption grammar"""

    nouns: FrozenSet[str] = frozenset()
    adjectives: FrozenSet[str] = frozenset()
    verbs: Dict[str, int] = field(default_factory=dict)
    prepositions: FrozenSet[str] = frozenset()
    connectives: Dict[str, str] = field(default_factory=dict)
    irregular_lemmas: Dict[str, str] = field(default_factory=dict)

    @property
    def vocabulary(self) -> FrozenSet[str]:
        """Lemmas that inflect: nouns, adjectives and verbs"""
        return self.nouns | self.adjectives | frozenset(self.verbs)

    @property
    def preposition_words(self) -> FrozenSet[str]:
        return frozenset(w for p in self.prepositions for w in p.split())

    def verbs_of_arity(self, arity: int) -> List[str]:
        return sorted(v for v, a in self.verbs.items() if a == arity)

    def category(self, lemma: str) -> Optional[str]:
        if lemma in self.nouns:
            return "noun"
        if lemma in self.adjectives:
            return "adjective"
        if lemma in self.verbs:
            return "verb"
        if lemma in self.prepositions:
            return "preposition"
        return None


def _validate(lexicon: Lexicon) -> None:
    vocabularies = {
        "nouns": set(lexicon.nouns),
        "adjectives": set(lexicon.adjectives),
        "verbs": set(lexicon.verbs),
        "prepositions": set(lexicon.prepositions),
        "connectives": set(lexicon.connectives),
    }
    names = list(vocabularies)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            shared = vocabularies[a] & vocabularies[b]
            if shared:
                raise LexiconError(f"{a} and {b} share {sorted(shared)}")

    for verb, arity in lexicon.verbs.items():
        if arity not in (1, 2):
            raise LexiconError(f"verb {verb} has arity {arity}, expected 1 or 2")
    for surface, role in lexicon.connectives.items():
        if role not in CONNECTIVE_ROLES:
            raise LexiconError(f"connective {surface} has unknown role {role}")
    inflecting = lexicon.vocabulary
    for surface, lemma in lexicon.irregular_lemmas.items():
        if lemma not in inflecting:
            raise LexiconError(f"irregular form {surface} maps to unknown lemma {lemma}")


def parse_lexicon(text: str) -> Lexicon:
    """Parse the sectioned lexicon format"""
    entries: Dict[str, List[str]] = {name: [] for name in SECTIONS}
    section: Optional[str] = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in entries:
                raise LexiconError(f"line {line_no}: unknown section [{section}]")
            continue
        if section is None:
            raise LexiconError(f"line {line_no}: entry outside a section")
        entries[section].extend(line.lower().split())

    verbs: Dict[str, int] = {}
    for token in entries["verbs"]:
        lemma, _, arity = token.partition("/")
        if not arity.isdigit():
            raise LexiconError(f"verb entry {token} needs an arity, e.g. lift/2")
        verbs[lemma] = int(arity)

    def pairs(section: str) -> Dict[str, str]:
        mapping = {}
        for token in entries[section]:
            surface, sep, target = token.partition("=")
            if not sep or not surface or not target:
                raise LexiconError(f"{section} entry {token} must look like surface=target")
            mapping[surface] = target
        return mapping

    lexicon = Lexicon(
        nouns=frozenset(entries["nouns"]),
        adjectives=frozenset(entries["adjectives"]),
        verbs=verbs,
        prepositions=frozenset(p.replace("_", " ") for p in entries["prepositions"]),
        connectives=pairs("connectives"),
        irregular_lemmas=pairs("irregular"),
    )
    _validate(lexicon)
    return lexicon


def load_lexicon(path: Optional[str] = None) -> Lexicon:
    """Load a lexicon file, defaulting to the packaged lexicon"""
    path = path or DEFAULT_LEXICON_PATH
    if not os.path.exists(path):
        raise LexiconError(f"Lexicon file not found at {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_lexicon(f.read())


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    return load_lexicon(DEFAULT_LEXICON_PATH)


def _undouble(stem: str) -> str:
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in VOWELS:
        return stem[:-1]
    return stem


def _suffix_candidates(word: str) -> List[str]:
    candidates = []
    if word.endswith("ies") and len(word) > 4:
        candidates.append(word[:-3] + "y")
    if word.endswith("es") and len(word) > 3:
        candidates.append(word[:-2])
    if word.endswith("s") and not word.endswith("ss") and len(word) > 2:
        candidates.append(word[:-1])
    if word.endswith("ing") and len(word) > 5:
        stem = word[:-3]
        candidates.extend([_undouble(stem), stem, stem + "e"])
    if word.endswith("ed") and len(word) > 4:
        stem = word[:-2]
        candidates.extend([_undouble(stem), stem, word[:-1]])
    return candidates


def lemmatize(surface: str, lexicon: Lexicon) -> str:
    """Irregular table first, then suffix rules confirmed by the lexicon, else identity"""
    word = surface.lower()
    if word in lexicon.irregular_lemmas:
        return lexicon.irregular_lemmas[word]
    vocabulary = lexicon.vocabulary
    if word in vocabulary:
        return word
    for candidate in _suffix_candidates(word):
        if candidate in vocabulary:
            return candidate
    return word


def inflect_third_person(lemma: str) -> str:
    """Present-tense third-person singular form of a verb lemma"""
    if lemma.endswith(("s", "sh", "ch", "x", "z", "o")):
        return lemma + "es"
    if len(lemma) > 1 and lemma.endswith("y") and lemma[-2] not in VOWELS:
        return lemma[:-1] + "ies"
    return lemma + "s"


def indefinite_article(phrase: str) -> str:
    """Article for a phrase: "an" before a vowel, else "a"."""
    return "an" if phrase[:1].lower() in VOWELS else "a"
