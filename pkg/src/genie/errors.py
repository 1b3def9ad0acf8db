"""Engine-wide exception types.

Every error raised across module boundaries derives from GenieError so
callers (CLI, HTTP service) can report failures uniformly.
"""

from __future__ import annotations


class GenieError(Exception):
    """Base class for all engine errors."""


# --- query language ---------------------------------------------------------

class QlangSyntaxError(GenieError):
    """Parse failure with position info; formats as ``line:col: message``."""

    def __init__(self, line: int, col: int, message: str, expected: tuple[str, ...] = ()):
        self.line = line
        self.col = col
        self.message = message
        self.expected = expected
        super().__init__(f"{line}:{col}: {message}")


class BindError(GenieError):
    pass


class UnknownTable(BindError):
    pass


class UnknownColumn(BindError):
    pass


class AmbiguousColumn(BindError):
    pass


# --- catalog ----------------------------------------------------------------

class CatalogError(GenieError):
    pass


class DuplicateSimulator(CatalogError):
    pass


class UnknownAdapter(CatalogError):
    pass


class UnknownSimulator(CatalogError):
    pass


class DuplicateTable(CatalogError):
    pass


class UnknownDependency(CatalogError):
    pass


class CyclicDependency(CatalogError):
    pass


class NotVirtual(CatalogError):
    pass


# --- grid store -------------------------------------------------------------

class StoreError(GenieError):
    pass


class DomainExceeded(StoreError):
    pass


class CoverageMiss(StoreError):
    """Internal contract violation: a read touched an uncovered cell."""


class NonIntegerRatio(StoreError):
    pass


class ParseError(StoreError):
    """Tabular ingest failure; carries the offending row number."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class SchemaMismatch(StoreError):
    pass


# --- planner ----------------------------------------------------------------

class PlannerError(GenieError):
    pass


class ConflictingHints(PlannerError):
    pass


class HintOutOfDomain(PlannerError):
    pass


class Infeasible(PlannerError):
    """No candidate parameter assignment meets the accuracy floor."""


class GeometryMismatch(PlannerError):
    pass


class ZeroWeightSum(PlannerError):
    pass


# --- simulators -------------------------------------------------------------

class SimError(GenieError):
    pass


class MissingIgnitionFields(SimError):
    pass


class EmissionsGeometryMismatch(SimError):
    pass


class UnknownCandidate(SimError):
    pass


class DegenerateReference(SimError):
    pass


# --- engine -----------------------------------------------------------------

class EngineError(GenieError):
    pass


class NoPriorQuery(EngineError):
    pass
