"""Risk-calibrated query answering over incomplete knowledge graphs.

The package answers multi-hop conjunctive queries on a graph whose
observed edge set is a subset of the truth. Each hop runs through a
gate that admits retrieved edges and, when the calibrated threshold
allows, high-scoring inferred candidates. Thresholds are chosen by
conformal risk control so the expected fraction of missed answers
stays below a user-chosen budget.
"""

from .calibration import (
    CalibrationEntry,
    CalibrationTable,
    Calibrator,
    EmpiricalQuantile,
    ScalarizationStrategy,
    corrected_risk,
    crc_select,
    default_strategies,
)
from .config import ExperimentConfig, load_config, parse_config
from .engine import (
    EngineContext,
    ExecutionTrace,
    GateConfig,
    GateMode,
    Provenance,
    execute_query,
    gate_execute,
    unified_score,
)
from .errors import (
    BenchError,
    CalibrationError,
    CalqueryError,
    ConfigurationError,
    ExecutionError,
    GraphError,
    QueryStructureError,
    TripleParseError,
    WorkloadError,
)
from .graph import (
    GraphView,
    KnowledgeGraph,
    ViewKind,
    generate_synthetic,
    load_snapshot,
    load_triples,
    save_snapshot,
)
from .query import (
    QueryDag,
    QueryInstance,
    Topology,
    generate_workload,
    ground_truth,
    instantiate,
    load_workload,
    save_workload,
)
from .scorer import FIDELITY_SHAPES, ScoreFunction, SyntheticScorer

__version__ = "0.1.0"

__all__ = [
    "BenchError",
    "CalibrationEntry",
    "CalibrationError",
    "CalibrationTable",
    "Calibrator",
    "CalqueryError",
    "ConfigurationError",
    "EmpiricalQuantile",
    "EngineContext",
    "ExecutionError",
    "ExecutionTrace",
    "ExperimentConfig",
    "FIDELITY_SHAPES",
    "GateConfig",
    "GateMode",
    "GraphError",
    "GraphView",
    "KnowledgeGraph",
    "Provenance",
    "QueryDag",
    "QueryInstance",
    "QueryStructureError",
    "ScalarizationStrategy",
    "ScoreFunction",
    "SyntheticScorer",
    "Topology",
    "TripleParseError",
    "ViewKind",
    "WorkloadError",
    "corrected_risk",
    "crc_select",
    "default_strategies",
    "execute_query",
    "gate_execute",
    "generate_synthetic",
    "generate_workload",
    "ground_truth",
    "instantiate",
    "load_config",
    "load_snapshot",
    "load_triples",
    "load_workload",
    "parse_config",
    "save_snapshot",
    "save_workload",
    "unified_score",
    "__version__",
]
