"""Sweep orchestration: instances x methods x objectives x keep fractions.

Every cell writes one keep-set artifact (greedy additionally writes one
trace per objective); the manifest lists every artifact with a content
digest so downstream analysis can verify it reads what the sweep wrote.
Cells are independent jobs with bounded parallel fan-out; artifact writes
are atomic and the manifest is assembled single-threaded after all cells
settle, so reruns with identical inputs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from ..baselines import (
    RankVector,
    external_ranks,
    prune_by_ranks,
    surprisal_ranks,
    uniform_ranks,
)
from ..core import Instance, KeepFraction, Objective, keep_set_at, trace_to_json
from ..errors import ConfigError, PrunekitError
from ..pruning import GreedyConfig, greedy_prune
from ..scoring import token_surprisals
from ..backends.ngram import NgramBackend, fit_ngram
from ..backends.toy import ToyBackend, ToyTransformer
from .config import BackendSpec, SweepConfig
from .io import (
    atomic_write_text,
    keep_set_to_json,
    read_external_scores,
    read_instances,
    sha256_file,
)


def build_backend(spec: BackendSpec, instances: Sequence[Instance]):
    """Instantiate the likelihood backend a sweep scores with."""
    opts = dict(spec.options)
    if spec.kind == "ngram":
        order = int(opts.get("order", 2))
        alpha = float(opts.get("alpha", 0.5))
        corpus_opt = str(opts.get("corpus", "self"))
        if corpus_opt == "self":
            corpus = [
                tuple(u.text for u in inst.question)
                + tuple(u.text for u in inst.reasoning)
                + tuple(u.text for u in inst.answer)
                for inst in instances
            ]
        else:
            corpus = [
                tuple(json.loads(line))
                for line in Path(corpus_opt).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        return NgramBackend(fit_ngram(corpus, order=order, alpha=alpha))
    if spec.kind == "toy":
        seed = int(opts.get("seed", 0))
        max_sequence = int(opts.get("max_sequence", 512))
        return ToyBackend(ToyTransformer(seed=seed, max_sequence=max_sequence))
    if spec.kind == "remote":
        from ..backends.remote import RemoteBackend, RemoteClient, RemoteConfig

        endpoint = opts.get("endpoint")
        if not endpoint:
            raise ConfigError("remote backend requires an endpoint option")
        config = RemoteConfig(
            score_endpoint=str(endpoint),
            generate_endpoint=opts.get("generate_endpoint"),
            timeout=float(opts.get("timeout", 30.0)),
            max_retries=int(opts.get("max_retries", 2)),
        )
        return RemoteBackend(RemoteClient(config))
    raise ConfigError(f"unknown backend kind {spec.kind!r}")


def _instance_seed(base: int, instance_id: str) -> int:
    digest = hashlib.blake2b(f"{base}:{instance_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class Cell:
    instance_id: str
    method: str
    objective: Optional[str]
    rho: str
    path: str
    sha256: Optional[str]
    status: str  # "ok" | "failed"
    error: Optional[str] = None


def _method_tag(method: str, objective: Optional[Objective]) -> str:
    return f"{method}-{objective.value}" if objective is not None else method


def _write_keep_sets(
    out_dir: Path,
    inst: Instance,
    method: str,
    objective: Optional[Objective],
    rho_grid: Sequence[KeepFraction],
    keep_for_rho,
) -> List[Cell]:
    cells = []
    tag = _method_tag(method, objective)
    for rho in rho_grid:
        rel = Path("keepsets") / tag / inst.id / f"rho-{rho.as_string()}.json"
        path = out_dir / rel
        keep = keep_for_rho(rho)
        payload = keep_set_to_json(
            keep, inst.id, method, rho, objective.value if objective else None
        )
        atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")
        cells.append(
            Cell(
                instance_id=inst.id,
                method=method,
                objective=objective.value if objective else None,
                rho=rho.as_string(),
                path=str(rel),
                sha256=sha256_file(path),
                status="ok",
            )
        )
    return cells


def _failed_cells(
    inst: Instance,
    method: str,
    objective: Optional[Objective],
    rho_grid: Sequence[KeepFraction],
    error: str,
) -> List[Cell]:
    tag = _method_tag(method, objective)
    return [
        Cell(
            instance_id=inst.id,
            method=method,
            objective=objective.value if objective else None,
            rho=rho.as_string(),
            path=str(Path("keepsets") / tag / inst.id / f"rho-{rho.as_string()}.json"),
            sha256=None,
            status="failed",
            error=error,
        )
        for rho in rho_grid
    ]


def _run_job(cfg: SweepConfig, backend, scores_by_id, inst: Instance, method: str):
    cells: List[Cell] = []
    traces: List[dict] = []
    objectives: List[Optional[Objective]] = (
        list(cfg.objectives) if method == "greedy" else [None]
    )
    for objective in objectives:
        try:
            if method == "greedy":
                greedy_cfg = GreedyConfig(
                    objective=objective,
                    rho_min=cfg.rho_min,
                    k_per_step=cfg.k_per_step,
                    record_steps=cfg.record_steps,
                    parallelism=cfg.parallelism,
                )
                trace = greedy_prune(backend, inst, greedy_cfg)
                rel = Path("traces") / _method_tag(method, objective) / f"{inst.id}.jsonl"
                path = cfg.out_dir / rel
                atomic_write_text(path, json.dumps(trace_to_json(trace), sort_keys=True) + "\n")
                traces.append(
                    {
                        "instance_id": inst.id,
                        "objective": objective.value,
                        "path": str(rel),
                        "sha256": sha256_file(path),
                    }
                )
                cells.extend(
                    _write_keep_sets(
                        cfg.out_dir, inst, method, objective, cfg.rho_grid,
                        lambda rho: keep_set_at(trace, rho),
                    )
                )
                continue

            if method == "uniform":
                ranks = uniform_ranks(
                    inst.n, seed=_instance_seed(cfg.seed, inst.id), instance_id=inst.id
                )
            elif method == "surprisal":
                ranks = surprisal_ranks(
                    token_surprisals(backend, inst.question, inst.reasoning, inst.answer),
                    instance_id=inst.id,
                )
            elif method == "h2o":
                if not backend.descriptor.provides_attention:
                    raise PrunekitError(
                        f"backend {backend.descriptor.backend_id!r} provides no attention"
                    )
                from ..baselines import h2o_ranks

                attention, span = backend.attention_for_instance(
                    inst.question, inst.reasoning, inst.answer
                )
                ranks = h2o_ranks(attention, span, instance_id=inst.id)
            elif method == "external":
                ranks = external_ranks(scores_by_id.get(inst.id), inst)
            else:
                raise ConfigError(f"unknown method {method!r}")

            cells.extend(
                _write_keep_sets(
                    cfg.out_dir, inst, method, None, cfg.rho_grid,
                    lambda rho, r=ranks: prune_by_ranks(r, rho),
                )
            )
        except PrunekitError as exc:
            cells.extend(_failed_cells(inst, method, objective, cfg.rho_grid, str(exc)))
    return cells, traces


def run_sweep(cfg: SweepConfig) -> dict:
    """Execute every cell, write artifacts and manifest, return the manifest."""
    instances, issues = read_instances(cfg.dataset, lenient=cfg.lenient)
    if not instances:
        raise ConfigError(f"dataset {cfg.dataset} contains no usable instances")
    instances = sorted(instances, key=lambda i: i.id)
    backend = build_backend(cfg.backend, instances)
    scores_by_id = (
        read_external_scores(cfg.external_scores) if cfg.external_scores else {}
    )

    jobs = [(inst, method) for inst in instances for method in cfg.methods]
    all_cells: List[Cell] = []
    all_traces: List[dict] = []
    if cfg.parallelism > 1 and backend.descriptor.concurrency_safe:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(
                pool.map(lambda jm: _run_job(cfg, backend, scores_by_id, *jm), jobs)
            )
    else:
        results = [_run_job(cfg, backend, scores_by_id, inst, m) for inst, m in jobs]
    for cells, traces in results:
        all_cells.extend(cells)
        all_traces.extend(traces)

    all_cells.sort(key=lambda c: (c.instance_id, c.method, c.objective or "", c.rho))
    all_traces.sort(key=lambda t: (t["instance_id"], t["objective"]))
    failed = [c for c in all_cells if c.status != "ok"]

    manifest = {
        "dataset": str(cfg.dataset),
        "backend_id": backend.descriptor.backend_id,
        "seed": cfg.seed,
        "methods": list(cfg.methods),
        "objectives": [o.value for o in cfg.objectives],
        "rho_grid": [r.as_string() for r in cfg.rho_grid],
        "skipped_input_lines": [
            {"line": issue.line, "message": issue.message} for issue in issues
        ],
        "traces": all_traces,
        "artifacts": [
            {
                "instance": c.instance_id,
                "method": c.method,
                "objective": c.objective,
                "rho": c.rho,
                "path": c.path,
                "sha256": c.sha256,
                "status": c.status,
                **({"error": c.error} if c.error else {}),
            }
            for c in all_cells
        ],
        "status": "partial" if failed else "ok",
    }
    atomic_write_text(
        cfg.out_dir / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    return manifest
