"""Error types shared across the engine.

Every error carries a stable ``code`` (its class name) so the HTTP layer can
map engine failures onto JSON error bodies without string matching.
"""

from __future__ import annotations

from typing import Any


class CompressLabError(Exception):
    """Base class for all engine errors."""

    def __init__(self, message: str, detail: Any = None):
        super().__init__(message)
        self.message = message
        self.detail = detail

    @property
    def code(self) -> str:
        return type(self).__name__


# --- experiment store -------------------------------------------------------

class SchemaError(CompressLabError):
    """Document does not match the experiment-spec schema."""


class DuplicateId(CompressLabError):
    pass


class UnknownParent(CompressLabError):
    pass


class CycleDetected(CompressLabError):
    pass


class UndeclaredMetric(CompressLabError):
    pass


class InvalidMetricValue(CompressLabError):
    pass


class RootWithOperation(CompressLabError):
    pass


class ChildWithoutOperation(CompressLabError):
    pass


class UnknownModel(CompressLabError):
    pass


# --- metric analytics -------------------------------------------------------

class UnknownMetric(CompressLabError):
    pass


class NoValues(CompressLabError):
    pass


# --- behaviors --------------------------------------------------------------

class MissingOutput(CompressLabError):
    pass


class BaseRequired(CompressLabError):
    pass


class MismatchedInstanceSets(CompressLabError):
    pass


# --- layers -----------------------------------------------------------------

class PathSetMismatch(CompressLabError):
    pass


class KindMismatch(CompressLabError):
    pass


class PathMismatch(CompressLabError):
    pass


# --- simulator --------------------------------------------------------------

class DimensionMismatch(CompressLabError):
    pass


class UnknownPath(CompressLabError):
    pass


class ShapeMismatch(CompressLabError):
    pass


# --- service ----------------------------------------------------------------

class BadConfig(CompressLabError):
    pass


class LoadFailure(CompressLabError):
    pass


class ProviderUnavailable(CompressLabError):
    pass


class ProviderProtocolViolation(CompressLabError):
    pass


# Unknown-entity errors map to 404, provider failures to 502, the rest to 400.
NOT_FOUND_CODES = {"UnknownModel", "UnknownMetric", "UnknownPath"}
BAD_GATEWAY_CODES = {"ProviderUnavailable", "ProviderProtocolViolation"}


def http_status(exc: CompressLabError) -> int:
    if exc.code in NOT_FOUND_CODES:
        return 404
    if exc.code in BAD_GATEWAY_CODES:
        return 502
    return 400
