"""Exact train-track calculus.

Ribbon-graph train tracks, their polyhedral cones of transverse measures,
the split/subtrack move calculus, good cell structures under subdivision,
full-dimension splitting paths, and the bounded-multiplicity cover drivers
with an exactly computable once-punctured-torus instantiation.
"""

from .errors import InvariantViolation, PreconditionError, StructureError

__all__ = ["InvariantViolation", "PreconditionError", "StructureError"]

__version__ = "0.1.0"
