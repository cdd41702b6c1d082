"""Exception taxonomy shared across the package.

Every error raised by library code derives from RetouchError so callers
(and the CLI exit-code mapping) can distinguish our failures from bugs.
"""

from __future__ import annotations


class RetouchError(Exception):
    """Base class for all errors raised by this package."""


class IoError(RetouchError):
    """Filesystem problem: missing file, unreadable path, failed write."""


class UnsupportedFormat(RetouchError):
    """Input file is not a format this package handles (e.g. palette PNG)."""


class CorruptData(RetouchError):
    """File structure is recognized but its contents are damaged."""


class BadMagic(CorruptData):
    """A binary artifact file does not start with the expected magic bytes."""


class VersionMismatch(CorruptData):
    """A binary artifact file carries an unknown format version."""


class OutOfRangeParam(RetouchError):
    """A retouching parameter lies outside its declared raw range."""


class ShapeMismatch(RetouchError):
    """Tensor or weight shapes are inconsistent."""


class DimensionMismatch(RetouchError):
    """Two images that must share dimensions do not."""


class EmptyImage(RetouchError):
    """An operation requiring pixels received an empty image."""


class EmptyCorpus(RetouchError):
    """A corpus directory or image list contains no usable images."""


class NonFiniteLoss(RetouchError):
    """Training loss became NaN/Inf; carries the offending step index."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


class ScorerFailure(RetouchError):
    """An aesthetic scorer plugin raised; carries the scorer name."""

    def __init__(self, scorer_name: str, cause: Exception):
        super().__init__(f"scorer {scorer_name!r} failed: {cause}")
        self.scorer_name = scorer_name
        self.cause = cause
