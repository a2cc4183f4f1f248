"""Command-line interface.

Exit codes: 0 success, 1 partial failure (some sweep cells failed), 2
configuration error.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import (
    DynamicsMode,
    category_frequency,
    dynamics_hit,
    retention_curves,
    write_dynamics_csv,
    write_frequency_csv,
    write_retention_csv,
)
from .backends.remote import RemoteClient, RemoteConfig
from .core import DEFAULT_RHO_GRID, KeepFraction, Objective, keep_set_at, trace_to_json
from .errors import ConfigError, EmptyTransition, MissingStepRecords, PrunekitError
from .pipeline.config import load_sweep_config, parse_backend_spec
from .pipeline.generate import SamplingSpec, generate, read_questions
from .pipeline.io import (
    atomic_write_text,
    export_sft,
    keep_set_to_json,
    read_annotations,
    read_external_scores,
    read_instances,
    read_traces,
    write_instances,
    write_jsonl,
)
from .pipeline.sweep import build_backend, run_sweep
from .pruning import GreedyConfig, greedy_prune
from .scoring import ScoreCache
from .surrogate import (
    TrainConfig,
    eval_surrogate,
    extract_features,
    load_model,
    save_model,
    train_surrogate,
)


def _fail(message: str, code: int = 2) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _grid_option(value: str):
    return tuple(KeepFraction.parse(part) for part in value.split(",") if part)


@click.group()
@click.version_option(version=__version__, prog_name="prunekit")
def main():
    """Likelihood-preserving reasoning-token pruning toolkit."""


@main.command()
@click.option("--in", "path", required=True, type=click.Path(exists=True))
@click.option("--lenient", is_flag=True, help="Skip malformed lines instead of failing.")
@click.option("--out", type=click.Path(), help="Write the validated instances back out.")
def ingest(path, lenient, out):
    """Parse and validate an instance JSONL file."""
    try:
        instances, issues = read_instances(path, lenient=lenient)
    except PrunekitError as exc:
        _fail(str(exc))
    for issue in issues:
        click.echo(f"skipped line {issue.line}: {issue.message}", err=True)
    click.echo(f"{len(instances)} instances ok, {len(issues)} skipped")
    if out:
        write_instances(out, instances)


@main.command(name="generate")
@click.option("--questions", required=True, type=click.Path(exists=True))
@click.option("--endpoint", required=True, help="Generation endpoint URL.")
@click.option("--samples", default=10, show_default=True)
@click.option("--temperature", default=0.7, show_default=True)
@click.option("--top-p", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--timeout", default=30.0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def generate_cmd(questions, endpoint, samples, temperature, top_p, seed, timeout, out):
    """Rejection-sample reasoning chains for a question file."""
    client = RemoteClient(
        RemoteConfig(score_endpoint=endpoint, generate_endpoint=endpoint, timeout=timeout)
    )
    try:
        records = read_questions(questions)
        spec = SamplingSpec(
            temperature=temperature, top_p=top_p, samples_per_question=samples
        )
        instances = generate(client, records, spec, seed=seed)
    except PrunekitError as exc:
        _fail(str(exc))
    finally:
        client.close()
    write_instances(out, instances)
    click.echo(f"kept {len(instances)} of {len(records)} questions")


def _load_backend(spec_text: str, instances):
    return build_backend(parse_backend_spec(spec_text), instances)


@main.command()
@click.option("--in", "path", required=True, type=click.Path(exists=True))
@click.option("--backend", "backend_spec", required=True, help="e.g. ngram:order=2,alpha=0.5 or toy:seed=7")
@click.option("--objective", type=click.Choice(["joint", "ans"]), default="joint", show_default=True)
@click.option("--rho-min", default="0.1", show_default=True)
@click.option("--k-per-step", default=1, show_default=True)
@click.option("--record-steps", is_flag=True)
@click.option("--parallelism", default=1, show_default=True)
@click.option("--cache-file", type=click.Path(), help="Append-only score cache.")
@click.option("--out", required=True, type=click.Path())
def prune(path, backend_spec, objective, rho_min, k_per_step, record_steps, parallelism, cache_file, out):
    """Greedy-prune every instance; writes one trace per line."""
    try:
        instances, _ = read_instances(path)
        backend = _load_backend(backend_spec, instances)
        cfg = GreedyConfig(
            objective=Objective(objective),
            rho_min=KeepFraction.parse(rho_min),
            k_per_step=k_per_step,
            record_steps=record_steps,
            parallelism=parallelism,
        )
        cache = ScoreCache(path=cache_file) if cache_file else None
        traces = [
            greedy_prune(backend, inst, cfg, cache=cache)
            for inst in sorted(instances, key=lambda i: i.id)
        ]
    except PrunekitError as exc:
        _fail(str(exc))
    write_jsonl(out, (trace_to_json(t) for t in traces))
    click.echo(f"pruned {len(traces)} instances")


@main.command()
@click.option("--in", "path", required=True, type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["uniform", "surprisal", "h2o", "external"]), required=True)
@click.option("--backend", "backend_spec", default="ngram:order=1,alpha=0.5", show_default=True)
@click.option("--scores", type=click.Path(exists=True), help="External-score JSONL (external method).")
@click.option("--rho", default="0.5", show_default=True, help="Comma-separated keep fractions.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def baseline(path, method, backend_spec, scores, rho, seed, out):
    """Rank tokens with a baseline method and write keep sets."""
    from .baselines import (
        external_ranks,
        h2o_ranks,
        prune_by_ranks,
        surprisal_ranks,
        uniform_ranks,
    )
    from .scoring import token_surprisals

    try:
        instances, _ = read_instances(path)
        grid = _grid_option(rho)
        backend = _load_backend(backend_spec, instances)
        scores_by_id = read_external_scores(scores) if scores else {}
        records = []
        for inst in sorted(instances, key=lambda i: i.id):
            if method == "uniform":
                ranks = uniform_ranks(inst.n, seed=seed, instance_id=inst.id)
            elif method == "surprisal":
                ranks = surprisal_ranks(
                    token_surprisals(backend, inst.question, inst.reasoning, inst.answer),
                    instance_id=inst.id,
                )
            elif method == "h2o":
                attention, span = backend.attention_for_instance(
                    inst.question, inst.reasoning, inst.answer
                )
                ranks = h2o_ranks(attention, span, instance_id=inst.id)
            else:
                ranks = external_ranks(scores_by_id.get(inst.id), inst)
            for r in grid:
                records.append(
                    keep_set_to_json(prune_by_ranks(ranks, r), inst.id, method, r, None)
                )
    except AttributeError:
        _fail(f"backend {backend_spec!r} does not provide attention")
    except PrunekitError as exc:
        _fail(str(exc))
    write_jsonl(out, records)
    click.echo(f"wrote {len(records)} keep sets")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def sweep(config_path):
    """Run the full sweep described by a TOML config."""
    try:
        cfg = load_sweep_config(config_path)
        manifest = run_sweep(cfg)
    except ConfigError as exc:
        _fail(str(exc), code=2)
    except PrunekitError as exc:
        _fail(str(exc), code=1)
    failed = sum(1 for a in manifest["artifacts"] if a["status"] != "ok")
    click.echo(
        f"{len(manifest['artifacts'])} cells, {failed} failed; manifest at "
        f"{Path(cfg.out_dir) / 'manifest.json'}"
    )
    if failed:
        sys.exit(1)


@main.group()
def analyze():
    """Replay analyses from trace and annotation files."""


@analyze.command()
@click.option("--traces", required=True, type=click.Path(exists=True))
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True))
@click.option("--grid", default=",".join(r.as_string() for r in DEFAULT_RHO_GRID), show_default=True)
@click.option("--macro", is_flag=True, help="Average per-instance fractions instead of pooling tokens.")
@click.option("--out", required=True, type=click.Path())
def retention(traces, annotations_path, grid, macro, out):
    """Category retention curves as CSV (rho,category,retention,count)."""
    try:
        table = retention_curves(
            read_traces(traces), read_annotations(annotations_path), _grid_option(grid), macro=macro
        )
    except PrunekitError as exc:
        _fail(str(exc))
    write_retention_csv(table, out)
    click.echo(f"wrote {len(table.rows)} rows")


@analyze.command()
@click.option("--traces", required=True, type=click.Path(exists=True))
@click.option("--rho-curr", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", show_default=True)
@click.option("--delta", default="0.1", show_default=True)
@click.option("--out", required=True, type=click.Path())
def dynamics(traces, rho_curr, delta, out):
    """Hit@|S| of dynamic/frozen/random rankings, averaged over instances."""
    try:
        trace_list = read_traces(traces)
        rows = []
        for rho in _grid_option(rho_curr):
            for mode in DynamicsMode:
                hits = []
                for trace in trace_list:
                    try:
                        hits.append(dynamics_hit(trace, rho, delta, mode))
                    except (EmptyTransition, MissingStepRecords):
                        continue
                if hits:
                    rows.append((rho, mode, sum(hits) / len(hits)))
    except PrunekitError as exc:
        _fail(str(exc))
    write_dynamics_csv(rows, out)
    click.echo(f"wrote {len(rows)} rows")


@analyze.command()
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def freq(annotations_path, out):
    """Pre-pruning category distribution as CSV (category,fraction)."""
    try:
        rows = category_frequency(read_annotations(annotations_path).values())
    except PrunekitError as exc:
        _fail(str(exc))
    write_frequency_csv(rows, out)
    click.echo(f"wrote {len(rows)} rows")


@main.group()
def surrogate():
    """Attention-feature surrogate for first-stage deletion scores."""


@surrogate.command()
@click.option("--in", "path", required=True, type=click.Path(exists=True))
@click.option("--traces", required=True, type=click.Path(exists=True), help="Traces with recorded steps.")
@click.option("--backend", "backend_spec", default="toy:seed=0", show_default=True)
@click.option("--out", required=True, type=click.Path())
def extract(path, traces, backend_spec, out):
    """Pool per-token attention features and first-stage targets into a CSV."""
    try:
        instances, _ = read_instances(path)
        trace_by_id = {t.instance_id: t for t in read_traces(traces)}
        backend = _load_backend(backend_spec, instances)
        if not backend.descriptor.provides_attention:
            raise ConfigError(f"backend {backend_spec!r} provides no attention")
        rows = []
        n_cols = None
        for inst in sorted(instances, key=lambda i: i.id):
            trace = trace_by_id.get(inst.id)
            if trace is None or trace.steps is None:
                raise ConfigError(f"instance {inst.id!r} lacks a step-recorded trace")
            first = trace.steps[0].candidate_scores
            attention, span = backend.attention_for_instance(
                inst.question, inst.reasoning, inst.answer
            )
            features = extract_features(attention, span)
            n_cols = features.shape[1]
            for idx in range(1, inst.n + 1):
                rows.append(
                    [inst.id, idx]
                    + [repr(v) for v in features[idx - 1]]
                    + [repr(first[idx])]
                )
    except PrunekitError as exc:
        _fail(str(exc))
    header = ["id", "index"] + [f"f{j}" for j in range(n_cols)] + ["target"]
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} feature rows")


def _read_feature_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        feature_cols = [i for i, name in enumerate(header) if name.startswith("f")]
        target_col = header.index("target")
        features, targets = [], []
        for row in reader:
            features.append([float(row[i]) for i in feature_cols])
            targets.append(float(row[target_col]))
    return np.asarray(features), np.asarray(targets)


@surrogate.command()
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--hidden", default=8, show_default=True)
@click.option("--lr", default=0.1, show_default=True)
@click.option("--epochs", default=500, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train(features_path, hidden, lr, epochs, seed, out):
    """Train the two-layer surrogate on a feature/target CSV."""
    try:
        X, t = _read_feature_csv(features_path)
        result = train_surrogate(X, t, TrainConfig(hidden=hidden, lr=lr, epochs=epochs, seed=seed))
    except PrunekitError as exc:
        _fail(str(exc))
    save_model(result.model, out)
    click.echo(f"training correlation {result.final_r:.4f} after {epochs} epochs")


@surrogate.command(name="eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
def eval_cmd(model_path, features_path):
    """Correlation of a trained surrogate on a held-out feature CSV."""
    try:
        model = load_model(model_path)
        X, t = _read_feature_csv(features_path)
        r = eval_surrogate(model, X, t)
    except PrunekitError as exc:
        _fail(str(exc))
    click.echo(f"pearson {r:.4f}")


@main.command(name="export-sft")
@click.option("--in", "path", required=True, type=click.Path(exists=True))
@click.option("--traces", required=True, type=click.Path(exists=True))
@click.option("--rho", default="1.0", show_default=True)
@click.option("--out", required=True, type=click.Path())
def export_sft_cmd(path, traces, rho, out):
    """Detokenized (question, pruned reasoning, answer) JSONL for fine-tuning."""
    try:
        instances, _ = read_instances(path)
        trace_by_id = {t.instance_id: t for t in read_traces(traces)}
        count = export_sft(instances, trace_by_id, KeepFraction.parse(rho), out)
    except PrunekitError as exc:
        _fail(str(exc))
    click.echo(f"exported {count} records")


if __name__ == "__main__":
    main()
