# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Phrase canonicalization and similarity providers
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from structreward.errors import EmbeddingTableError, TableDimensionMismatch
from structreward.parsers.lexicon import Lexicon, lemmatize

logger = logging.getLogger(__name__)

DETERMINERS = frozenset({"a", "an", "the", "another"})
NORM_TOLERANCE = 1e-6


def canonicalize(phrase: str, lexicon: Lexicon) -> str:
    """Lowercase, strip determiners, lemmatize every word and collapse whitespace"""
    words = [w for w in phrase.lower().split() if w not in DETERMINERS]
    return " ".join(lemmatize(w, lexicon) for w in words)


def _bigrams(text: str) -> Counter:
    return Counter(text[i : i + 2] for i in range(len(text) - 1))


def dice(a: str, b: str, n: int = 2) -> float:
    """Dice coefficient over character n-gram multisets, spaces included"""
    if a == b:
        return 1.0
    if n == 2:
        grams_a, grams_b = _bigrams(a), _bigrams(b)
    else:
        grams_a = Counter(a[i : i + n] for i in range(len(a) - n + 1))
        grams_b = Counter(b[i : i + n] for i in range(len(b) - n + 1))
    total = sum(grams_a.values()) + sum(grams_b.values())
    if total == 0:
        return 0.0
    overlap = sum((grams_a & grams_b).values())
    return 2.0 * overlap / total


@dataclass(frozen=True)
class EmbeddingTable:
    """Canonical phrase to unit-norm vector, all of one dimension"""

    dim: int
    vectors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __contains__(self, phrase: str) -> bool:
        return phrase in self.vectors


def load_embedding_table(path: str) -> EmbeddingTable:
    """Load `dim=<d>` followed by `phrase<TAB>v1 ... vd` records"""
    if not os.path.exists(path):
        raise EmbeddingTableError(f"Embedding table not found at {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f if line.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise EmbeddingTableError("embedding table must start with a 'dim=<d>' header")
    try:
        dim = int(lines[0][4:])
    except ValueError:
        raise EmbeddingTableError(f"bad header {lines[0]!r}") from None

    vectors: Dict[str, np.ndarray] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        phrase, sep, values = line.partition("\t")
        if not sep:
            raise EmbeddingTableError(f"line {line_no}: expected phrase<TAB>vector")
        try:
            vector = np.array([float(v) for v in values.split()], dtype=np.float64)
        except ValueError:
            raise EmbeddingTableError(f"line {line_no}: non-numeric vector component") from None
        if vector.shape[0] != dim:
            raise TableDimensionMismatch(
                f"line {line_no}: '{phrase}' has {vector.shape[0]} components, header says {dim}"
            )
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise EmbeddingTableError(f"line {line_no}: '{phrase}' has norm {norm:.8f}, expected 1")
        vectors[phrase] = vector
    logger.info("Loaded embedding table", extra={"path": path, "dim": dim, "phrases": len(vectors)})
    return EmbeddingTable(dim=dim, vectors=vectors)


class SimilarityProvider:
    """Symmetric phrase similarity in [0, 1] used as matching edge weight"""

    def __init__(self, kind: str = "lexical", ngram: int = 2, table: Optional[EmbeddingTable] = None):
        if kind not in ("lexical", "embedding_table"):
            raise ValueError(f"Unknown similarity kind: {kind}")
        if kind == "embedding_table" and table is None:
            raise ValueError("embedding_table provider needs a table")
        self.kind = kind
        self.ngram = ngram
        self.table = table

    @classmethod
    def from_settings(cls, kind: str, ngram: int = 2, table_path: Optional[str] = None) -> "SimilarityProvider":
        table = load_embedding_table(table_path) if kind == "embedding_table" and table_path else None
        return cls(kind=kind, ngram=ngram, table=table)

    def score(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        if self.kind == "embedding_table" and self.table is not None:
            if a in self.table and b in self.table:
                cosine = float(np.dot(self.table.vectors[a], self.table.vectors[b]))
                return min(1.0, max(0.0, (1.0 + cosine) / 2.0))
        return dice(a, b, self.ngram)


def score(provider: SimilarityProvider, a: str, b: str) -> float:
    return provider.score(a, b)
