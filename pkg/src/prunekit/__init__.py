"""Greedy likelihood-preserving token pruning for reasoning chains."""

from .core import (
    DEFAULT_RHO_GRID,
    Instance,
    KeepFraction,
    KeepSet,
    Objective,
    PruneTrace,
    StepRecord,
    TokenUnit,
    apply_keep,
    keep_set_at,
    units_from_texts,
    validate_instance,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_RHO_GRID",
    "Instance",
    "KeepFraction",
    "KeepSet",
    "Objective",
    "PruneTrace",
    "StepRecord",
    "TokenUnit",
    "apply_keep",
    "keep_set_at",
    "units_from_texts",
    "validate_instance",
    "__version__",
]
