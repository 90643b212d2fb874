# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Bipartite matching, object maps and typed unit matching
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from structreward.errors import WeightOutOfRange
from structreward.models.caption_ir import (
    AttributeUnit,
    EventMention,
    ObjectUnit,
    RelationUnit,
    StructuredCaption,
    split_anchor,
)
from structreward.parsers.lexicon import Lexicon, default_lexicon
from structreward.utils.similarity import SimilarityProvider, canonicalize

logger = logging.getLogger(__name__)

# Optimum comparisons; weights are similarities in [0, 1]
TOLERANCE = 1e-9
UNIT_TYPES = ("obj", "attr", "rel")


@dataclass(frozen=True)
class Matching:
    pairs: FrozenSet[Tuple[int, int]] = frozenset()
    total_weight: float = 0.0

    def sorted_pairs(self) -> List[Tuple[int, int]]:
        return sorted(self.pairs)


def _optimum(w: np.ndarray) -> float:
    if w.size == 0:
        return 0.0
    n = max(w.shape)
    square = np.zeros((n, n), dtype=np.float64)
    square[: w.shape[0], : w.shape[1]] = w
    rows, cols = linear_sum_assignment(square, maximize=True)
    return float(square[rows, cols].sum())


def max_weight_matching(weights: Any, min_weight: float = 0.0) -> Matching:
    """Exact maximum-weight partial one-to-one matching

    Edges below min_weight are zeroed and zero-weight pairs never appear in the result.
    Among optimal matchings the lexicographically smallest sorted pair list is returned.

    Args:
        weights: rows x cols matrix of similarities in [0, 1]
        min_weight: validity cutoff for an edge

    Returns:
        Matching with pairs and total weight
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.size == 0:
        return Matching()
    if np.any(w < 0.0) or np.any(w > 1.0) or not np.all(np.isfinite(w)):
        raise WeightOutOfRange("matching weights must lie in [0, 1]")
    w = np.where(w >= min_weight, w, 0.0)
    n_rows, n_cols = w.shape

    best = _optimum(w)
    if best <= 0.0:
        return Matching()

    pairs: List[Tuple[int, int]] = []
    used_cols: List[int] = []
    gained = 0.0
    for i in range(n_rows):
        rest_rows = list(range(i + 1, n_rows))
        for j in range(n_cols):
            if w[i, j] <= 0.0 or j in used_cols:
                continue
            free_cols = [c for c in range(n_cols) if c not in used_cols and c != j]
            rest = _optimum(w[np.ix_(rest_rows, free_cols)]) if rest_rows and free_cols else 0.0
            if gained + w[i, j] + rest >= best - TOLERANCE:
                pairs.append((i, j))
                used_cols.append(j)
                gained += w[i, j]
                break
    total = float(sum(w[i, j] for i, j in pairs))
    return Matching(pairs=frozenset(pairs), total_weight=total)


def _anchor_key(anchor: str) -> Tuple[str, int, str]:
    parts = split_anchor(anchor)
    if parts is None:
        return anchor, 0, anchor
    return parts[0], parts[1], anchor


@dataclass(frozen=True)
class ObjectMap:
    """Injective alignment of generated object ids to reference object ids"""

    pairs: Dict[str, str] = field(default_factory=dict)
    weights: Dict[str, float] = field(default_factory=dict)

    def get(self, gen_id: str) -> Optional[str]:
        return self.pairs.get(gen_id)

    @property
    def inverse(self) -> Dict[str, str]:
        return {r: g for g, r in self.pairs.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pairs": [
                {"generated": g, "reference": r, "weight": self.weights[g]}
                for g, r in sorted(self.pairs.items(), key=lambda kv: _anchor_key(kv[0]))
            ]
        }

    @classmethod
    def identity(cls, caption: StructuredCaption) -> "ObjectMap":
        return cls({o.id: o.id for o in caption.objects}, {o.id: 1.0 for o in caption.objects})


def build_object_map(
    gen: StructuredCaption,
    ref: StructuredCaption,
    provider: SimilarityProvider,
    min_weight: float = 0.5,
    lexicon: Optional[Lexicon] = None,
) -> ObjectMap:
    """Align generated and reference object instances by canonical phrase similarity"""
    lexicon = lexicon or default_lexicon()
    gen_objects = sorted(gen.objects, key=lambda o: _anchor_key(o.id))
    ref_objects = sorted(ref.objects, key=lambda o: _anchor_key(o.id))
    gen_phrases = [canonicalize(o.phrase, lexicon) for o in gen_objects]
    ref_phrases = [canonicalize(o.phrase, lexicon) for o in ref_objects]
    weights = np.array(
        [[provider.score(g, r) for r in ref_phrases] for g in gen_phrases], dtype=np.float64
    ).reshape(len(gen_phrases), len(ref_phrases))
    matching = max_weight_matching(weights, min_weight)
    pairs = {gen_objects[i].id: ref_objects[j].id for i, j in matching.sorted_pairs()}
    scores = {gen_objects[i].id: float(weights[i, j]) for i, j in matching.sorted_pairs()}
    logger.debug("Built object map", extra={"pairs": len(pairs)})
    return ObjectMap(pairs, scores)


@dataclass
class TypedMatchResult:
    unit_type: str
    exact_pairs: List[Tuple[Any, Any]]
    residual_pairs: List[Tuple[Any, Any, float]]
    matched_mass: float
    gen_count: int
    ref_count: int
    unmatched_generated: List[Any] = field(default_factory=list)
    unmatched_reference: List[Any] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "unit_type": self.unit_type,
            "exact_pairs": [[_describe(g), _describe(r)] for g, r in self.exact_pairs],
            "residual_pairs": [
                [_describe(g), _describe(r), s] for g, r, s in self.residual_pairs
            ],
            "matched_mass": self.matched_mass,
            "gen_count": self.gen_count,
            "ref_count": self.ref_count,
            "unmatched_generated": [_describe(u) for u in self.unmatched_generated],
            "unmatched_reference": [_describe(u) for u in self.unmatched_reference],
        }


def _describe(unit: Any) -> str:
    if isinstance(unit, ObjectUnit):
        return f"{unit.id}({unit.phrase})"
    if isinstance(unit, AttributeUnit):
        return f"{unit.object}:{unit.value}"
    if isinstance(unit, RelationUnit):
        return f"{unit.subject} {unit.predicate} {unit.object}"
    if isinstance(unit, EventMention):
        return f"{unit.id}({','.join(unit.participants)})"
    return str(unit)


def _unit_accessors(
    unit_type: str, object_map: ObjectMap, lexicon: Lexicon
) -> Tuple[Callable[[Any, Any], bool], Callable[[Any], str], Callable[[Any], Tuple]]:
    if unit_type == "obj":
        return (
            lambda g, r: object_map.get(g.id) == r.id,
            lambda u: canonicalize(u.phrase, lexicon),
            lambda u: (u.clause, _anchor_key(u.id)),
        )
    if unit_type == "attr":
        return (
            lambda g, r: object_map.get(g.object) == r.object,
            lambda u: canonicalize(u.value, lexicon),
            lambda u: (u.clause, _anchor_key(u.object), u.value),
        )
    if unit_type == "rel":
        return (
            lambda g, r: object_map.get(g.subject) == r.subject
            and object_map.get(g.object) == r.object,
            lambda u: canonicalize(u.predicate, lexicon),
            lambda u: (u.clause, _anchor_key(u.subject), u.predicate, _anchor_key(u.object)),
        )
    raise ValueError(f"Unknown unit type: {unit_type}")


def match_typed_units(
    unit_type: str,
    gen_units: Sequence[Any],
    ref_units: Sequence[Any],
    object_map: ObjectMap,
    provider: SimilarityProvider,
    min_weight: float = 0.5,
    lexicon: Optional[Lexicon] = None,
) -> TypedMatchResult:
    """Remove exact overlaps, then match the residual units one-to-one

    Args:
        unit_type: "obj", "attr" or "rel"
        gen_units: Generated-side units of that type
        ref_units: Reference-side units of that type
        object_map: Alignment gating which units may match
        provider: Similarity used for residual substitutions
        min_weight: Validity cutoff for residual substitutions

    Returns:
        TypedMatchResult with matched mass = exact count + residual similarity
    """
    lexicon = lexicon or default_lexicon()
    compatible, value_of, order_key = _unit_accessors(unit_type, object_map, lexicon)
    gen_sorted = sorted(gen_units, key=order_key)
    ref_sorted = sorted(ref_units, key=order_key)
    gen_values = [value_of(u) for u in gen_sorted]
    ref_values = [value_of(u) for u in ref_sorted]

    # Phase 1: exact overlaps, each unit consumed once
    exact_pairs = []
    claimed_ref = set()
    residual_gen = []
    for gi, g in enumerate(gen_sorted):
        for ri, r in enumerate(ref_sorted):
            if ri in claimed_ref:
                continue
            if gen_values[gi] == ref_values[ri] and compatible(g, r):
                exact_pairs.append((g, r))
                claimed_ref.add(ri)
                break
        else:
            residual_gen.append(gi)
    residual_ref = [ri for ri in range(len(ref_sorted)) if ri not in claimed_ref]

    # Phase 2: residual substitutions among unclaimed units only
    weights = np.zeros((len(residual_gen), len(residual_ref)), dtype=np.float64)
    for a, gi in enumerate(residual_gen):
        for b, ri in enumerate(residual_ref):
            if compatible(gen_sorted[gi], ref_sorted[ri]):
                weights[a, b] = provider.score(gen_values[gi], ref_values[ri])
        # A unit whose best reference is already claimed collects nothing
        claimed_scores = [
            provider.score(gen_values[gi], ref_values[ri])
            for ri in claimed_ref
            if compatible(gen_sorted[gi], ref_sorted[ri])
        ]
        if claimed_scores and max(claimed_scores) >= weights[a].max(initial=0.0):
            weights[a] = 0.0
    matching = max_weight_matching(weights, min_weight)
    residual_pairs = [
        (gen_sorted[residual_gen[a]], ref_sorted[residual_ref[b]], float(weights[a, b]))
        for a, b in matching.sorted_pairs()
    ]

    used_gen = {residual_gen[a] for a, _ in matching.pairs}
    used_ref = {residual_ref[b] for _, b in matching.pairs}
    mass = float(len(exact_pairs)) + sum(s for _, _, s in residual_pairs)
    return TypedMatchResult(
        unit_type=unit_type,
        exact_pairs=exact_pairs,
        residual_pairs=residual_pairs,
        matched_mass=mass,
        gen_count=len(gen_sorted),
        ref_count=len(ref_sorted),
        unmatched_generated=[gen_sorted[gi] for gi in residual_gen if gi not in used_gen],
        unmatched_reference=[ref_sorted[ri] for ri in residual_ref if ri not in used_ref],
    )


@dataclass
class EventMatching:
    """Anchor-compatible event pairs, plus same-slot pairs whose bindings conflict"""

    pairs: Dict[str, str] = field(default_factory=dict)
    similarities: Dict[str, float] = field(default_factory=dict)
    conflicts: Dict[str, str] = field(default_factory=dict)

    @property
    def inverse(self) -> Dict[str, str]:
        return {r: g for g, r in self.pairs.items()}

    @property
    def conflict_inverse(self) -> Dict[str, str]:
        return {r: g for g, r in self.conflicts.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pairs": [
                {"generated": g, "reference": r, "similarity": self.similarities[g]}
                for g, r in sorted(self.pairs.items())
            ],
            "conflicts": [
                {"generated": g, "reference": r} for g, r in sorted(self.conflicts.items())
            ],
        }


def _event_key(event: EventMention) -> Tuple[int, int, str]:
    return event.order_index, event.clause, event.id


def match_events(
    gen_events: Sequence[EventMention],
    ref_events: Sequence[EventMention],
    object_map: ObjectMap,
    provider: SimilarityProvider,
    min_weight: float = 0.5,
    lexicon: Optional[Lexicon] = None,
) -> EventMatching:
    """Match events one-to-one under predicate similarity and participant compatibility"""
    lexicon = lexicon or default_lexicon()
    gen_sorted = sorted(gen_events, key=_event_key)
    ref_sorted = sorted(ref_events, key=_event_key)
    gen_preds = [canonicalize(e.predicate, lexicon) for e in gen_sorted]
    ref_preds = [canonicalize(e.predicate, lexicon) for e in ref_sorted]
    similarity = np.array(
        [[provider.score(g, r) for r in ref_preds] for g in gen_preds], dtype=np.float64
    ).reshape(len(gen_sorted), len(ref_sorted))

    def mapped(event: EventMention) -> List[Optional[str]]:
        return [object_map.get(p) for p in event.participants]

    weights = np.zeros_like(similarity)
    for i, g in enumerate(gen_sorted):
        for j, r in enumerate(ref_sorted):
            if len(g.participants) == len(r.participants) and mapped(g) == list(r.participants):
                weights[i, j] = similarity[i, j]
    matching = max_weight_matching(weights, min_weight)
    pairs = {gen_sorted[i].id: ref_sorted[j].id for i, j in matching.sorted_pairs()}
    sims = {gen_sorted[i].id: float(similarity[i, j]) for i, j in matching.sorted_pairs()}

    # Slot conflicts among the residual events
    used_rows = {i for i, _ in matching.pairs}
    used_cols = {j for _, j in matching.pairs}
    rows = [i for i in range(len(gen_sorted)) if i not in used_rows]
    cols = [j for j in range(len(ref_sorted)) if j not in used_cols]
    conflict_weights = np.zeros((len(rows), len(cols)), dtype=np.float64)
    for a, i in enumerate(rows):
        g = gen_sorted[i]
        bound = mapped(g)
        if any(b is None for b in bound):
            continue
        for b, j in enumerate(cols):
            r = ref_sorted[j]
            if len(g.participants) != len(r.participants):
                continue
            if bound != list(r.participants):
                conflict_weights[a, b] = similarity[i, j]
    conflict_matching = max_weight_matching(conflict_weights, min_weight)
    conflicts = {
        gen_sorted[rows[a]].id: ref_sorted[cols[b]].id for a, b in conflict_matching.sorted_pairs()
    }
    return EventMatching(pairs=pairs, similarities=sims, conflicts=conflicts)
