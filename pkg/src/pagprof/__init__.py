"""pagprof: an online profiler for distributed dataflow computations.

Ingests contract-conforming event streams, builds a per-epoch program
activity graph, and runs metrics, invariant, and graph-pattern analytics
served through a CLI and a live dashboard.
"""

from .model import ActivityKind, EventKind, LogRecord, Pair, RawEvent, pair_compare

__version__ = "0.1.0"

__all__ = [
    "ActivityKind",
    "EventKind",
    "LogRecord",
    "Pair",
    "RawEvent",
    "pair_compare",
    "__version__",
]
