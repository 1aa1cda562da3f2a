"""Exception types shared across the package.

Every error raised by the public API derives from KbnavError so callers
(and the CLI exit-code mapping) can catch one base class.
"""
from __future__ import annotations


class KbnavError(Exception):
    """Base class for all package errors."""


# --- feature bank -----------------------------------------------------------

class DimensionMismatch(KbnavError):
    pass


class DuplicateId(KbnavError):
    pass


class NonFiniteFeature(KbnavError):
    pass


class IoFailure(KbnavError):
    pass


class BadMagic(KbnavError):
    pass


class VersionUnsupported(KbnavError):
    pass


class TruncatedPayload(KbnavError):
    pass


class ManifestMismatch(KbnavError):
    pass


# --- retrieval --------------------------------------------------------------

class ZeroVector(KbnavError):
    pass


class EmptyBank(KbnavError):
    pass


class MissingEntry(KbnavError):
    pass


class EmptySubgoalList(KbnavError):
    pass


# --- numerical kernels ------------------------------------------------------

class NonFiniteInput(KbnavError):
    pass


class NonFiniteGradient(KbnavError):
    pass


# --- augmentors -------------------------------------------------------------

class EmptyInstruction(KbnavError):
    pass


class EmptyPhrase(KbnavError):
    pass


class EmptyKnowledge(KbnavError):
    pass


# --- navigation environment -------------------------------------------------

class ParseError(KbnavError):
    pass


class InvariantViolation(KbnavError):
    pass


class DuplicateNode(KbnavError):
    pass


class UnknownNode(KbnavError):
    pass


class InvalidState(KbnavError):
    pass


# --- metrics ----------------------------------------------------------------

class MissingGoal(KbnavError):
    pass


class InvalidPath(KbnavError):
    pass


class TooFewVectors(KbnavError):
    pass


class InternalConsistency(KbnavError):
    """An aggregate violated a relation that must hold by construction."""
