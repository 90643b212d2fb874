# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Controlled-grammar caption parser with instance anchoring
import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from structreward.errors import EmptyInput, MalformedClause, UnknownToken, UnresolvedDefinite
from structreward.models.caption_ir import (
    AttributeUnit,
    EventMention,
    ObjectUnit,
    OrderAssertion,
    RelationUnit,
    StructuredCaption,
    make_anchor,
    make_event_id,
)
from structreward.parsers.lexicon import Lexicon, default_lexicon, lemmatize

logger = logging.getLogger(__name__)

INDEFINITE = ("a", "an", "another")
DEFINITE = ("the",)
COPULAS = ("is", "are", "was", "were")
PRESENCE = "present"
CONJUNCTION = "and"
ORDINALS = {
    "first": 1,
    "second": 2,
    "third": 3,
    "fourth": 4,
    "fifth": 5,
    "sixth": 6,
    "seventh": 7,
    "eighth": 8,
    "ninth": 9,
    "tenth": 10,
}
_NUMERIC_ORDINAL = re.compile(r"(\d+)(st|nd|rd|th)")
FUNCTION_WORDS = frozenset(INDEFINITE + DEFINITE + COPULAS + (PRESENCE, CONJUNCTION, ","))


def _ordinal_suffix(k: int) -> str:
    if 11 <= k % 100 <= 13:
        return "th"
    return {1: "st", 2: "nd", 3: "rd"}.get(k % 10, "th")


def ordinal_word(k: int) -> str:
    """Spelled ordinal up to tenth, numeric form ('11th', '21st') beyond"""
    for word, value in ORDINALS.items():
        if value == k:
            return word
    return f"{k}{_ordinal_suffix(k)}"


def ordinal_value(token: str) -> Optional[int]:
    if token in ORDINALS:
        return ORDINALS[token]
    match = _NUMERIC_ORDINAL.fullmatch(token)
    if match is None:
        return None
    k = int(match.group(1))
    if k < 1 or match.group(1) != str(k) or match.group(2) != _ordinal_suffix(k):
        return None
    return k


_SENTENCE_END = re.compile(r"[.!?]+")
_THEN_SPLIT = re.compile(r"\s*,\s*then\s+|\s+and\s+then\s+", re.IGNORECASE)
_TOKEN = re.compile(r",|[^\s,]+")


@dataclass(frozen=True)
class Clause:
    """One clause of a caption; `main` points from a subordinate clause to its main clause"""

    index: int
    tokens: Tuple[str, ...]
    connective: Optional[str] = None
    repeat: bool = False
    main: Optional[int] = None


def _tokenize(text: str) -> List[str]:
    return _TOKEN.findall(text.lower())


def _split_sentences(text: str) -> List[str]:
    return [s.strip() for s in _SENTENCE_END.split(text) if s.strip()]


def _segment_sentence(sentence: str, lexicon: Lexicon, start: int) -> List[Clause]:
    clauses: List[Clause] = []
    for piece_index, piece in enumerate(_THEN_SPLIT.split(sentence)):
        tokens = _tokenize(piece)
        connective = "then" if piece_index > 0 else None
        repeat = False

        if tokens and tokens[0] in lexicon.connectives:
            connective = lexicon.connectives[tokens[0]]
            tokens = tokens[1:]
            if tokens and tokens[0] == ",":
                tokens = tokens[1:]
        if tokens and lexicon.connectives.get(tokens[-1]) == "again":
            repeat = True
            tokens = tokens[:-1]
        if connective == "again":
            repeat = True

        index = start + len(clauses)
        if not tokens:
            raise MalformedClause("clause has no words", index)

        if connective in ("before", "after"):
            if "," not in tokens:
                raise MalformedClause(f"'{connective}' clause needs a main clause after a comma", index)
            comma = tokens.index(",")
            subordinate, main = tokens[:comma], tokens[comma + 1 :]
            if not subordinate or not main:
                raise MalformedClause(f"'{connective}' clause is incomplete", index)
            sub_repeat = lexicon.connectives.get(subordinate[-1]) == "again"
            if sub_repeat:
                subordinate = subordinate[:-1]
                if not subordinate:
                    raise MalformedClause(f"'{connective}' clause is incomplete", index)
            clauses.append(Clause(index, tuple(subordinate), connective, sub_repeat, index + 1))
            clauses.append(Clause(index + 1, tuple(main), None, repeat))
        else:
            clauses.append(Clause(index, tuple(tokens), connective, repeat))
    return clauses


def segment(text: str, lexicon: Optional[Lexicon] = None) -> List[Clause]:
    """Split a caption into clauses, recording and stripping leading connectives

    Args:
        text: Caption text
        lexicon: Lexicon supplying connective surface forms (default lexicon if None)

    Returns:
        Clauses with indices consecutive from 0
    """
    if text is None or not text.strip():
        raise EmptyInput("caption text is empty")
    lexicon = lexicon or default_lexicon()
    clauses: List[Clause] = []
    for sentence in _split_sentences(text):
        clauses.extend(_segment_sentence(sentence, lexicon, len(clauses)))
    if not clauses:
        raise EmptyInput("caption has no clauses")
    return clauses


class _CaptionBuilder:
    """Accumulates anchored units while clauses are parsed in order"""

    def __init__(self, lexicon: Lexicon):
        self.lexicon = lexicon
        self.objects: List[ObjectUnit] = []
        self.attributes: List[AttributeUnit] = []
        self.relations: List[RelationUnit] = []
        self.events: List[EventMention] = []
        self.orders: List[OrderAssertion] = []
        self.instance_counts: Dict[str, int] = {}
        self.event_counts: Dict[str, int] = {}
        self.last_mention: Dict[str, int] = {}
        self.attributes_of: Dict[str, set] = {}
        self.clause_events: Dict[int, str] = {}
        self.mention_clock = 0
        self.word_set = (
            FUNCTION_WORDS
            | frozenset(ORDINALS)
            | frozenset(lexicon.connectives)
            | lexicon.preposition_words
        )

    # Token checks
    def _lemma(self, token: str) -> str:
        return lemmatize(token, self.lexicon)

    def _check_known(self, clause: Clause) -> None:
        for token in clause.tokens:
            if token in self.word_set or ordinal_value(token) is not None:
                continue
            if self._lemma(token) in self.lexicon.vocabulary:
                continue
            raise UnknownToken(token, clause.index)

    def _match_preposition(self, tokens: Sequence[str], i: int) -> Optional[Tuple[str, int]]:
        best = None
        for prep in self.lexicon.prepositions:
            words = prep.split()
            if tuple(tokens[i : i + len(words)]) == tuple(words):
                if best is None or len(words) > len(best.split()):
                    best = prep
        if best is None:
            return None
        return best, i + len(best.split())

    # Noun phrases
    def _touch(self, anchor: str) -> None:
        self.mention_clock += 1
        self.last_mention[anchor] = self.mention_clock

    def _resolve_definite(
        self, head: str, ordinal: Optional[int], adjectives: List[str], clause: int
    ) -> str:
        count = self.instance_counts.get(head, 0)
        if count == 0:
            raise UnresolvedDefinite(f"'the {head}' has no antecedent", clause)
        if ordinal is not None:
            if ordinal > count:
                raise UnresolvedDefinite(f"there is no instance {ordinal} of {head}", clause)
            return make_anchor(head, ordinal)
        candidates = [make_anchor(head, k) for k in range(1, count + 1)]
        if adjectives:
            carrying = [
                c for c in candidates if set(adjectives) <= self.attributes_of.get(c, set())
            ]
            candidates = carrying or candidates
        return max(candidates, key=lambda c: self.last_mention.get(c, 0))

    def _noun_phrase(self, tokens: Sequence[str], i: int, clause: int) -> Tuple[str, int]:
        if i >= len(tokens) or tokens[i] not in INDEFINITE + DEFINITE:
            raise MalformedClause("expected a noun phrase starting with a determiner", clause)
        determiner = tokens[i]
        i += 1
        ordinal = None
        if determiner == "the" and i < len(tokens):
            ordinal = ordinal_value(tokens[i])
            if ordinal is not None:
                i += 1
        start = i
        adjectives: List[str] = []
        while i < len(tokens) and self._lemma(tokens[i]) in self.lexicon.adjectives:
            adjectives.append(self._lemma(tokens[i]))
            i += 1
        if i >= len(tokens) or self._lemma(tokens[i]) not in self.lexicon.nouns:
            raise MalformedClause("noun phrase has no noun", clause)
        head = self._lemma(tokens[i])
        phrase = " ".join(tokens[start : i + 1])
        i += 1

        if determiner in INDEFINITE:
            k = self.instance_counts.get(head, 0) + 1
            self.instance_counts[head] = k
            anchor = make_anchor(head, k)
            self.objects.append(ObjectUnit(anchor, head, phrase, clause))
        else:
            anchor = self._resolve_definite(head, ordinal, adjectives, clause)
        self._touch(anchor)
        for value in adjectives:
            self._add_attribute(anchor, value, clause)
        return anchor, i

    def _add_attribute(self, anchor: str, value: str, clause: int) -> None:
        self.attributes.append(AttributeUnit(anchor, value, clause))
        self.attributes_of.setdefault(anchor, set()).add(value)

    # Clauses
    def _emit_event(self, predicate: str, participants: Tuple[str, ...], clause: Clause) -> None:
        j = self.event_counts.get(predicate, 0) + 1
        self.event_counts[predicate] = j
        event = EventMention(
            make_event_id(predicate, j), predicate, participants, clause.index, len(self.events)
        )
        if clause.repeat and not any(
            e.predicate == predicate and e.participants[0] == participants[0] for e in self.events
        ):
            raise MalformedClause(f"'again' repeats no earlier '{predicate}' by the same agent", clause.index)
        if clause.connective == "then":
            previous = self.clause_events.get(clause.index - 1)
            if previous is not None:
                self.orders.append(OrderAssertion(previous, event.id, True))
        self.events.append(event)
        self.clause_events[clause.index] = event.id

    def add_clause(self, clause: Clause) -> None:
        self._check_known(clause)
        tokens = clause.tokens
        subject, i = self._noun_phrase(tokens, 0, clause.index)
        if i >= len(tokens):
            raise MalformedClause("clause has no verb phrase", clause.index)

        token = tokens[i]
        if token in COPULAS:
            if clause.repeat:
                raise MalformedClause("'again' needs an event clause", clause.index)
            i += 1
            if i < len(tokens) and tokens[i] == PRESENCE:
                i += 1
            elif i < len(tokens) and self._lemma(tokens[i]) in self.lexicon.adjectives:
                while i < len(tokens):
                    if tokens[i] == CONJUNCTION:
                        i += 1
                        continue
                    value = self._lemma(tokens[i])
                    if value not in self.lexicon.adjectives:
                        break
                    self._add_attribute(subject, value, clause.index)
                    i += 1
            else:
                matched = self._match_preposition(tokens, i)
                if matched is None:
                    raise MalformedClause("copula must be followed by an adjective, preposition or 'present'", clause.index)
                predicate, i = matched
                obj, i = self._noun_phrase(tokens, i, clause.index)
                self.relations.append(RelationUnit(subject, predicate, obj, clause.index))
        else:
            predicate = self._lemma(token)
            arity = self.lexicon.verbs.get(predicate)
            if arity is None:
                raise MalformedClause(f"expected a verb, found '{token}'", clause.index)
            i += 1
            if arity == 2:
                obj, i = self._noun_phrase(tokens, i, clause.index)
                self.relations.append(RelationUnit(subject, predicate, obj, clause.index))
                participants: Tuple[str, ...] = (subject, obj)
            else:
                participants = (subject,)
            self._emit_event(predicate, participants, clause)

        if i != len(tokens):
            raise MalformedClause(f"unexpected words after clause: {' '.join(tokens[i:])}", clause.index)

    def link_subordinates(self, clauses: Sequence[Clause]) -> None:
        """Order each before/after subordinate clause against its main clause"""
        for clause in clauses:
            if clause.main is None:
                continue
            sub_event = self.clause_events.get(clause.index)
            main_event = self.clause_events.get(clause.main)
            if sub_event is None or main_event is None:
                continue
            if clause.connective == "before":
                self.orders.append(OrderAssertion(main_event, sub_event, True))
            else:
                self.orders.append(OrderAssertion(sub_event, main_event, True))

    def build(self, source_text: Optional[str]) -> StructuredCaption:
        return StructuredCaption.build(
            objects=self.objects,
            attributes=self.attributes,
            relations=self.relations,
            events=self.events,
            orders=self.orders,
            source_text=source_text,
        )


def parse_caption(text: str, lexicon: Optional[Lexicon] = None) -> StructuredCaption:
    """Parse a controlled-grammar caption into an anchored StructuredCaption

    Args:
        text: Caption text
        lexicon: Closed vocabulary (default lexicon if None)

    Returns:
        Anchored caption; raises a ParseError subclass carrying the clause index
    """
    lexicon = lexicon or default_lexicon()
    clauses = segment(text, lexicon)
    builder = _CaptionBuilder(lexicon)
    for clause in clauses:
        builder.add_clause(clause)
    builder.link_subordinates(clauses)
    caption = builder.build(text)
    logger.debug(
        "Parsed caption",
        extra={"clauses": len(clauses), "objects": len(caption.objects), "events": len(caption.events)},
    )
    return caption


def parse_sentences(sentences: Sequence[str], lexicon: Optional[Lexicon] = None) -> StructuredCaption:
    """Parse sentences one at a time and merge them into one anchored caption

    Definite mentions resolve against instances introduced by earlier sentences.
    """
    lexicon = lexicon or default_lexicon()
    builder = _CaptionBuilder(lexicon)
    all_clauses: List[Clause] = []
    for sentence in sentences:
        clauses = segment(sentence, lexicon)
        offset = len(all_clauses)
        shifted = [
            Clause(
                c.index + offset,
                c.tokens,
                c.connective,
                c.repeat,
                None if c.main is None else c.main + offset,
            )
            for c in clauses
        ]
        for clause in shifted:
            builder.add_clause(clause)
        all_clauses.extend(shifted)
    if not all_clauses:
        raise EmptyInput("no sentences to parse")
    builder.link_subordinates(all_clauses)
    return builder.build(" ".join(s.strip() for s in sentences))
