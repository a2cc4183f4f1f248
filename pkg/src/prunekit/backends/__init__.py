"""Likelihood backends: n-gram oracle, seeded toy transformer, remote client."""

from ._scan import COMPILED as KERNEL_COMPILED
from .base import AttentionTensor, BackendDescriptor, LikelihoodBackend, Span


def _scan_cy_available() -> bool:
    """Whether the compiled kernel can be imported (regardless of selection)."""
    try:
        from . import _scan_cy  # noqa: F401

        return True
    except ImportError:
        return False
from .ngram import NgramBackend, NgramModel, fit_ngram, ngram_logprob
from .toy import BOS, SEP, PrefixCache, ToyBackend, ToyTransformer

__all__ = [
    "AttentionTensor",
    "BackendDescriptor",
    "BOS",
    "KERNEL_COMPILED",
    "LikelihoodBackend",
    "NgramBackend",
    "NgramModel",
    "PrefixCache",
    "SEP",
    "Span",
    "ToyBackend",
    "ToyTransformer",
    "fit_ngram",
    "ngram_logprob",
]
