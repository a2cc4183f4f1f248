"""Sweep configuration: TOML with ${ENV_VAR} interpolation for secrets."""

from __future__ import annotations

import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..core import DEFAULT_RHO_GRID, KeepFraction, Objective
from ..errors import ConfigError

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

KNOWN_METHODS = ("greedy", "uniform", "surprisal", "h2o", "external")


def _interpolate(value):
    if isinstance(value, str):
        def repl(match):
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references undefined environment variable {name!r}")
            return os.environ[name]

        return _ENV_PATTERN.sub(repl, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass(frozen=True)
class BackendSpec:
    kind: str  # "ngram" | "toy" | "remote"
    options: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepConfig:
    dataset: Path
    backend: BackendSpec
    methods: Tuple[str, ...]
    objectives: Tuple[Objective, ...]
    rho_grid: Tuple[KeepFraction, ...]
    rho_min: KeepFraction
    out_dir: Path
    seed: int = 0
    k_per_step: int = 1
    record_steps: bool = False
    parallelism: int = 1
    lenient: bool = False
    external_scores: Optional[Path] = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("sweep needs a non-empty method set")
        unknown = [m for m in self.methods if m not in KNOWN_METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(KNOWN_METHODS)}")
        if "external" in self.methods and self.external_scores is None:
            raise ConfigError("the external method requires an external_scores file")
        if any(r < self.rho_min for r in self.rho_grid):
            raise ConfigError("rho grid reaches below rho_min")


def parse_backend_spec(text: str) -> BackendSpec:
    """Parse 'kind:key=value,key=value' (e.g. 'ngram:order=2,alpha=0.5', 'toy:seed=7')."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind not in ("ngram", "toy", "remote"):
        raise ConfigError(f"unknown backend kind {kind!r}")
    options: Dict[str, object] = {}
    if rest:
        if kind == "remote" and "=" not in rest:
            options["endpoint"] = rest
        else:
            for pair in rest.split(","):
                if not pair:
                    continue
                key, _, value = pair.partition("=")
                if not _:
                    raise ConfigError(f"backend option {pair!r} is not key=value")
                options[key.strip()] = value.strip()
    return BackendSpec(kind=kind, options=options)


def load_sweep_config(path) -> SweepConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    raw = _interpolate(raw)
    try:
        backend_table = raw.get("backend", {})
        backend = BackendSpec(
            kind=str(backend_table.get("kind", "ngram")).lower(),
            options={k: v for k, v in backend_table.items() if k != "kind"},
        )
        sweep = raw.get("sweep", {})
        grid = tuple(
            KeepFraction.parse(str(r)) for r in sweep.get("rho_grid", [])
        ) or DEFAULT_RHO_GRID
        objectives = tuple(
            Objective(o) for o in sweep.get("objectives", ["joint"])
        )
        return SweepConfig(
            dataset=Path(raw["dataset"]),
            backend=backend,
            methods=tuple(sweep.get("methods", ["greedy", "uniform"])),
            objectives=objectives,
            rho_grid=grid,
            rho_min=KeepFraction.parse(str(sweep.get("rho_min", "0.1"))),
            out_dir=Path(raw["out_dir"]),
            seed=int(sweep.get("seed", 0)),
            k_per_step=int(sweep.get("k_per_step", 1)),
            record_steps=bool(sweep.get("record_steps", False)),
            parallelism=int(sweep.get("parallelism", 1)),
            lenient=bool(raw.get("lenient", False)),
            external_scores=(
                Path(sweep["external_scores"]) if "external_scores" in sweep else None
            ),
        )
    except KeyError as exc:
        raise ConfigError(f"config missing required field {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
