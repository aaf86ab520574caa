"""Exception hierarchy.

Every error raised deliberately by the package derives from :class:`RollganError`.
Data and contract violations derive from :class:`DataError`, which the CLI maps
to exit code 2.
"""


class RollganError(Exception):
    """Base class for all package errors."""


class DataError(RollganError, ValueError):
    """Input data or a call contract was violated."""


# MIDI / piano-roll I/O
class MalformedMidi(DataError):
    pass


class UnmatchedNoteOn(DataError):
    pass


class EmptyAfterQuantization(DataError):
    pass


class InvalidThreshold(DataError):
    pass


class NonBinaryRoll(DataError):
    pass


class BadMagic(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class NonBinaryValues(DataError):
    pass


class FilterRejected(DataError):
    def __init__(self, reason):
        super().__init__(f"input rejected by corpus filter: {reason}")
        self.reason = reason


# dataset
class EmptyGenre(DataError):
    pass


class EmptyDomain(DataError):
    pass


class InvalidCount(DataError):
    pass


# classifiers
class EmptyClass(DataError):
    pass


class InvalidHyperparam(DataError):
    pass


class UnfittedModel(RollganError):
    pass


class EmptyTestSet(DataError):
    pass


class LayoutMismatch(DataError):
    pass


# losses / training
class EmptyScores(DataError):
    pass


class InvalidMargin(DataError):
    pass


class MissingTerm(DataError):
    pass


class NonFiniteLoss(RollganError):
    pass


class EmptyBatch(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


class UnsupportedShape(DataError):
    pass
