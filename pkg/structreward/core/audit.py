# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Compositional consistency audit and train/eval filename overlap
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from structreward.core.matcher import build_object_map
from structreward.errors import EmptyAudit, NoRootRelation
from structreward.generators.world_sim import WorldState, world_units
from structreward.models.caption_ir import RelationUnit, StructuredCaption
from structreward.parsers.lexicon import Lexicon, default_lexicon
from structreward.utils.similarity import SimilarityProvider, canonicalize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuditRecord:
    sample_id: str
    c_r: bool
    c_a: bool
    c_e: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"sample_id": self.sample_id, "c_r": self.c_r, "c_a": self.c_a, "c_e": self.c_e}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AuditRecord":
        flags = []
        for name in ("c_r", "c_a", "c_e"):
            value = data.get(name)
            if isinstance(value, bool):
                flags.append(value)
            elif value in (0, 1):
                flags.append(bool(value))
            else:
                raise ValueError(f"{name} must be a boolean or 0/1, got {value!r}")
        return cls(str(data.get("sample_id", "")), *flags)


@dataclass(frozen=True)
class AuditSummary:
    n_total: int
    n_root_correct: int
    n_root_and_attr_correct: int
    rra: Optional[float]
    aca: Optional[float]
    eca: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_total": self.n_total,
            "n_root_correct": self.n_root_correct,
            "n_root_and_attr_correct": self.n_root_and_attr_correct,
            "rra": self.rra,
            "aca": self.aca,
            "eca": self.eca,
        }


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def audit_metrics(records: Sequence[AuditRecord]) -> AuditSummary:
    """Cascaded accuracies: root over all, attribute given root, existence given both"""
    if not records:
        raise EmptyAudit("audit needs at least one record")
    root = [r for r in records if r.c_r]
    root_attr = [r for r in root if r.c_a]
    return AuditSummary(
        n_total=len(records),
        n_root_correct=len(root),
        n_root_and_attr_correct=len(root_attr),
        rra=_ratio(len(root), len(records)),
        aca=_ratio(sum(1 for r in root if r.c_a), len(root)),
        eca=_ratio(sum(1 for r in root_attr if r.c_e), len(root_attr)),
    )


def derive_record(
    sample_id: str,
    caption: StructuredCaption,
    world: WorldState,
    root: Optional[RelationUnit] = None,
    provider: Optional[SimilarityProvider] = None,
    min_weight: float = 0.5,
    lexicon: Optional[Lexicon] = None,
) -> AuditRecord:
    """Check one caption's root relation, its endpoint attributes and endpoint existence

    Endpoints are grounded to world entities by the object map against the world's own units.
    The root defaults to the caption's first relation.
    """
    lexicon = lexicon or default_lexicon()
    provider = provider or SimilarityProvider()
    if root is None:
        relations = caption.sorted_relations()
        if not relations:
            raise NoRootRelation(f"sample {sample_id} has no relation to audit")
        root = relations[0]

    object_map = build_object_map(caption, world_units(world), provider, min_weight, lexicon)
    entities = world.entity_by_id()
    heads = {o.id: o.head for o in caption.objects}
    endpoints = (root.subject, root.object)
    grounded = [object_map.get(a) for a in endpoints]

    c_e = all(
        g is not None and g in entities and entities[g].head == heads.get(a)
        for a, g in zip(endpoints, grounded)
    )
    c_r = (
        None not in grounded
        and (grounded[0], canonicalize(root.predicate, lexicon), grounded[1]) in world.all_relations()
    )
    c_a = True
    for attr in caption.attributes:
        if attr.object not in endpoints:
            continue
        target = object_map.get(attr.object)
        value = canonicalize(attr.value, lexicon)
        if target is None or target not in entities or value not in entities[target].attributes:
            c_a = False
            break
    return AuditRecord(sample_id, bool(c_r), c_a, c_e)


def derive_records(
    samples: Iterable[Tuple[str, StructuredCaption, WorldState]],
    provider: Optional[SimilarityProvider] = None,
    min_weight: float = 0.5,
    lexicon: Optional[Lexicon] = None,
) -> List[AuditRecord]:
    return [
        derive_record(sample_id, caption, world, None, provider, min_weight, lexicon)
        for sample_id, caption, world in samples
    ]


def normalize_name(name: str) -> str:
    """Lowercase, drop directories and the extension"""
    base = os.path.basename(name.replace("\\", "/").rstrip("/"))
    stem, _ = os.path.splitext(base)
    return stem.lower()


def overlap_audit(train_names: Iterable[str], eval_name_sets: Dict[str, Iterable[str]]) -> Dict[str, Any]:
    """Exact normalized filename overlap between a training list and evaluation lists

    Returns:
        Per-set and union counts, each with the evaluation size and an "n/N" display string
    """
    train = {normalize_name(n) for n in train_names}
    report: Dict[str, Any] = {"sets": {}}
    union: set = set()
    for set_name in sorted(eval_name_sets):
        names = {normalize_name(n) for n in eval_name_sets[set_name]}
        union |= names
        shared = train & names
        report["sets"][set_name] = {
            "overlap": len(shared),
            "size": len(names),
            "display": f"{len(shared)}/{len(names)}",
            "names": sorted(shared),
        }
    shared_union = train & union
    report["union"] = {
        "overlap": len(shared_union),
        "size": len(union),
        "display": f"{len(shared_union)}/{len(union)}",
    }
    logger.info("Overlap audit", extra={"sets": len(eval_name_sets), "union_overlap": len(shared_union)})
    return report
