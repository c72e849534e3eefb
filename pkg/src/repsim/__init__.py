"""repsim: a deterministic desk-scale model of journal-based asynchronous
storage replication with consistency groups, copy-on-write snapshot groups,
an operator-driven control plane, and a crash-consistency verifier."""

from .system import System, SystemConfig

__version__ = "0.1.0"

__all__ = ["System", "SystemConfig", "__version__"]
