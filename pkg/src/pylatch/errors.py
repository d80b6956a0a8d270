"""Exception hierarchy shared by every pylatch module."""

from __future__ import annotations


class LatchError(Exception):
    """Base class for all pylatch errors."""


class DataError(LatchError, ValueError):
    """Input data or file content is invalid (CLI exit code 2)."""


# image
class NotPGM(DataError):
    pass


class UnsupportedDepth(DataError):
    pass


class Truncated(DataError):
    pass


class Malformed(DataError):
    pass


class OutOfBounds(DataError, IndexError):
    pass


class BadScale(DataError):
    pass


# detect / latch
class ImageTooSmall(DataError):
    pass


class TooCloseToBorder(DataError):
    pass


# pattern
class BadHeader(DataError):
    pass


class BadTripletCount(DataError):
    pass


class CoordinateOutOfRange(DataError):
    pass


class DegenerateTriplet(DataError):
    pass


class MissingInfo(DataError):
    pass


class GridSizeMismatch(DataError):
    pass


class LabelParse(DataError):
    pass


class NoPositives(DataError):
    pass


class NoNegatives(DataError):
    pass


class EmptyPairs(DataError):
    pass


class InsufficientCandidates(DataError):
    pass


# match
class LengthMismatch(DataError):
    pass


class EmptyGallery(DataError):
    pass


# cli
class NoKeypoints(DataError):
    pass


class BadDescriptorFile(DataError):
    pass
