# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Error hierarchy shared by every module
from typing import Optional


class StructRewardError(Exception):
    """Base class for all domain errors raised by structreward"""

    @property
    def name(self) -> str:
        return type(self).__name__


# Caption IR
class IRError(StructRewardError):
    pass


class SchemaError(IRError):
    pass


class DanglingAnchor(IRError):
    pass


class DuplicateId(IRError):
    pass


class DuplicateUnit(IRError):
    pass


class InvalidOrder(IRError):
    pass


# Grammar parser
class ParseError(StructRewardError):
    def __init__(self, message: str, clause: Optional[int] = None):
        self.clause = clause
        if clause is not None:
            message = f"clause {clause}: {message}"
        super().__init__(message)


class EmptyInput(ParseError):
    pass


class UnknownToken(ParseError):
    def __init__(self, token: str, clause: Optional[int] = None):
        self.token = token
        super().__init__(f"unknown token '{token}'", clause)


class MalformedClause(ParseError):
    pass


class UnresolvedDefinite(ParseError):
    pass


class LexiconError(StructRewardError):
    pass


# Similarity
class SimilarityError(StructRewardError):
    pass


class EmbeddingTableError(SimilarityError):
    pass


class TableDimensionMismatch(EmbeddingTableError):
    pass


# Matcher
class MatchError(StructRewardError):
    pass


class WeightOutOfRange(MatchError):
    pass


# Question generation
class QuestionError(StructRewardError):
    pass


class MissingSlot(QuestionError):
    pass


# Verifier
class VerifierError(StructRewardError):
    pass


class VerifierUnavailable(VerifierError):
    pass


class MalformedResponse(VerifierError):
    pass


class VerifierTimeout(VerifierError):
    pass


class UnknownSlotAnchor(VerifierError):
    pass


# Reward engine
class RewardError(StructRewardError):
    pass


class InvalidConfig(RewardError):
    pass


# World simulator
class WorldError(StructRewardError):
    pass


class LexiconTooSmall(WorldError):
    pass


class EmptyWorld(WorldError):
    pass


class NothingToCorrupt(WorldError):
    pass


class InvalidWorld(WorldError):
    pass


# Trainer
class TrainerError(StructRewardError):
    pass


class NonFiniteGradient(TrainerError):
    pass


class HistoryWriteFailed(TrainerError):
    pass


# Audit
class AuditError(StructRewardError):
    pass


class NoRootRelation(AuditError):
    pass


class EmptyAudit(AuditError):
    pass


# Configuration
class ConfigError(StructRewardError):
    pass


class UnknownKey(ConfigError):
    pass


class TypeMismatch(ConfigError):
    pass
