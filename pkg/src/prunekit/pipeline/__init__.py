"""Dataset ingestion, configuration, generation, sweeps, and exports."""

from .config import BackendSpec, SweepConfig, load_sweep_config, parse_backend_spec
from .generate import QuestionRecord, SamplingSpec, generate, normalized_equals, read_questions
from .io import export_sft, read_annotations, read_instances, read_traces, write_instances, write_traces
from .sweep import build_backend, run_sweep

__all__ = [
    "BackendSpec",
    "QuestionRecord",
    "SamplingSpec",
    "SweepConfig",
    "build_backend",
    "export_sft",
    "generate",
    "load_sweep_config",
    "normalized_equals",
    "parse_backend_spec",
    "read_annotations",
    "read_instances",
    "read_questions",
    "read_traces",
    "run_sweep",
    "write_instances",
    "write_traces",
]
