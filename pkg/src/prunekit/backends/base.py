"""Backend protocol: anything that can score token sequences teacher-forced.

A backend exposes per-token log-probabilities of a target span conditioned
on a context span. Optional capabilities (attention access, batched
deletion scans) are advertised through the descriptor and duck-typed
methods; the scoring layer falls back to the generic per-candidate path
when a capability is absent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from ..core import Objective
from ..errors import ValidationError


@dataclass(frozen=True)
class BackendDescriptor:
    """Capabilities of a likelihood backend.

    ``backend_id`` must be stable across runs: it keys the score cache.
    """

    backend_id: str
    provides_attention: bool
    max_sequence: int
    concurrency_safe: bool


@dataclass(frozen=True)
class Span:
    """1-based inclusive position range within a scored sequence."""

    start: int
    stop: int

    def __post_init__(self):
        if self.start < 1 or self.stop < self.start:
            raise ValidationError(f"invalid span [{self.start}, {self.stop}]")

    def __len__(self) -> int:
        return self.stop - self.start + 1

    def positions(self) -> range:
        return range(self.start, self.stop + 1)


class AttentionTensor:
    """Per-layer, per-head causal attention matrices, shape [L, H, T, T].

    Row t of each head is the attention distribution of position t over
    positions <= t: entries above the diagonal are zero and every row sums
    to one (within 1e-6 for softmax output).
    """

    def __init__(self, values: np.ndarray, validate: bool = True):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 4 or values.shape[2] != values.shape[3]:
            raise ValidationError(f"attention tensor must be [L,H,T,T], got {values.shape}")
        if validate:
            if np.any(values < 0):
                raise ValidationError("attention weights must be non-negative")
            upper = np.triu(np.ones(values.shape[2:], dtype=bool), k=1)
            if np.any(values[..., upper] != 0):
                raise ValidationError("attention must be causal (zero above the diagonal)")
            row_sums = values.sum(axis=-1)
            if np.max(np.abs(row_sums - 1.0)) > 1e-6:
                raise ValidationError("attention rows must sum to 1 within 1e-6")
        self.values = values

    @property
    def layers(self) -> int:
        return self.values.shape[0]

    @property
    def heads(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[2]


@runtime_checkable
class LikelihoodBackend(Protocol):
    """Minimal surface the scoring layer requires."""

    @property
    def descriptor(self) -> BackendDescriptor: ...

    def target_logprobs(
        self, context: Sequence[str], target: Sequence[str]
    ) -> List[float]:
        """Log-prob of each target unit, teacher-forced on context + preceding target."""
        ...


def scan_capability(backend: object) -> Optional[object]:
    """The backend's batched deletion scan, if it implements one."""
    return getattr(backend, "scan_deletion_candidates", None)


__all__ = [
    "AttentionTensor",
    "BackendDescriptor",
    "LikelihoodBackend",
    "Objective",
    "Span",
    "scan_capability",
]
