"""Exception types shared across the package."""

from __future__ import annotations


class KgcalError(Exception):
    """Base class for all package errors."""


class TripleParseError(KgcalError):
    """A triple line did not have exactly three tab-separated fields."""

    def __init__(self, line_no: int, line: str):
        self.line_no = line_no
        self.line = line
        super().__init__(f"line {line_no}: expected 3 tab-separated fields, got {line!r}")


class PathExplosionError(KgcalError):
    """Shortest-path enumeration exceeded the configured path cap."""


class InvalidOutputError(KgcalError):
    """Generated evidence text does not conform to the <PATH ...> grammar.

    Downstream reward scoring maps this to the invalid-output penalty.
    """


class PredictionParseError(KgcalError):
    """No JSON object of answer -> confidence pairs found in a reasoner response."""

    def __init__(self, raw_response: str):
        self.raw_response = raw_response
        super().__init__("no parseable answer/confidence JSON object in response")


class TransportError(KgcalError):
    """A remote reasoner backend failed after exhausting retries."""


class EmptySampleError(KgcalError):
    """A metric that needs at least one sample was given none."""
