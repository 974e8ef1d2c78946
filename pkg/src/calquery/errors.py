"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CalqueryError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(CalqueryError):
    """Invalid or inconsistent configuration values."""


class TripleParseError(CalqueryError):
    """Malformed line in a triple file; message carries the line number."""


class GraphError(CalqueryError):
    """Invalid graph construction or mutation request."""


class WorkloadError(CalqueryError):
    """Workload generation or (de)serialization failure."""


class QueryStructureError(CalqueryError):
    """Malformed query DAG (cycles, bad arity, duplicate gate slots)."""


class CalibrationError(CalqueryError):
    """Calibration failure: empty splits, corrupt table, broken invariant."""


class ExecutionError(CalqueryError):
    """Query execution failure (unknown entity/relation, bad threshold vector)."""


class BenchError(CalqueryError):
    """Experiment harness failure (bad splits, malformed results files)."""
