"""Command-line front end: profile, synthesize, validate, compile, pipeline."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import compiler, profiler, validator
from .architect import RuleReasoner, run_agent
from .config import load_config
from .errors import ToolError
from .kb import load_kb, load_seed_kb
from .llm import ChatClient, LlmReasoner
from .nadl import parse_nadl, serialize_nadl


def _load_kb(kb_path: str | None):
    return load_kb(kb_path) if kb_path else load_seed_kb()


def _read_profile(path: str) -> profiler.DatasetProfile:
    return profiler.DatasetProfile.from_dict(json.loads(Path(path).read_text()))


def _write_or_echo(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


@click.group()
def main() -> None:
    """Dataset-aware detector architecture synthesis."""


@main.command("profile")
@click.argument("label_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dims-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--images-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dataset-id", default="dataset", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]), default="json")
@click.option("--out", type=click.Path(dir_okay=False))
def cmd_profile(label_dir, dims_manifest, images_dir, dataset_id, fmt, out) -> None:
    """Compute a dataset profile from YOLO-style label files."""
    try:
        records = profiler.load_annotations(
            label_dir, dims_manifest=dims_manifest, images_dir=images_dir
        )
        stats = None
        if images_dir:
            stats = _image_stats(records, Path(images_dir))
        profile = profiler.compute_profile(records, image_stats=stats, dataset_id=dataset_id)
    except ToolError as exc:
        _fail(exc)
    text = profiler.to_json(profile) if fmt == "json" else profiler.to_markdown(profile)
    _write_or_echo(text, out)


def _image_stats(records, images_dir: Path):
    import numpy as np
    from PIL import Image

    stats = []
    for record in records:
        for suffix in (".png", ".jpg", ".jpeg", ".bmp"):
            path = images_dir / f"{record.image_id}{suffix}"
            if path.exists():
                pixels = np.asarray(Image.open(path).convert("RGB"))
                stats.append(profiler.compute_image_stats(record.image_id, pixels))
                break
    return stats or None


@main.command("synthesize")
@click.argument("profile_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--reasoner", "reasoner_kind", type=click.Choice(["rule", "llm"]), default="rule")
@click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--budget", type=int, help="Parameter budget override.")
@click.option("--max-iterations", type=int)
@click.option("--model-id", help="Chat model identifier (llm reasoner).")
@click.option("--replay", type=click.Path(exists=True, dir_okay=False), help="Replay transcript; no network.")
@click.option("--log-transcript", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--trace-out", type=click.Path(dir_okay=False))
def cmd_synthesize(
    profile_path, reasoner_kind, kb_path, config_path, budget, max_iterations,
    model_id, replay, log_transcript, out, trace_out,
) -> None:
    """Synthesize a blueprint for a profiled dataset."""
    try:
        config = load_config(
            config_path, param_budget=budget, max_iterations=max_iterations, model_id=model_id
        )
        kb = _load_kb(kb_path)
        profile = _read_profile(profile_path)
        if reasoner_kind == "rule":
            reasoner = RuleReasoner(
                kb, thresholds=config.thresholds, param_budget=config.param_budget
            )
        else:
            client = ChatClient(
                base_url=config.base_url,
                replay_path=replay,
                log_path=log_transcript,
                max_calls=config.max_llm_calls,
            )
            reasoner = LlmReasoner(
                kb,
                client,
                model_id=config.model_id,
                thresholds=config.thresholds,
                param_budget=config.param_budget,
            )
        doc, trace = run_agent(profile, kb, reasoner, max_iterations=config.max_iterations)
    except ToolError as exc:
        _fail(exc)
    _write_or_echo(serialize_nadl(doc), out)
    if trace_out:
        Path(trace_out).write_text(trace.to_json())


@main.command("validate")
@click.argument("blueprint", type=click.Path(exists=True, dir_okay=False))
@click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
def cmd_validate(blueprint, kb_path, fmt) -> None:
    """Statically analyze a blueprint. Exit 0 clean, 1 warnings, 2 errors."""
    try:
        doc = parse_nadl(Path(blueprint).read_text())
        report = validator.validate(doc, _load_kb(kb_path))
    except ToolError as exc:
        _fail(exc)
    click.echo(report.render_table() if fmt == "table" else report.to_json(), nl=False)
    sys.exit(report.exit_code)


@main.command("compile")
@click.argument("blueprint", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", type=click.Choice(["yaml", "graph", "bundle"]), default="yaml")
@click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", "profile_path", type=click.Path(exists=True, dir_okay=False),
              help="Dataset profile JSON; required for the bundle target.")
@click.option("--out", type=click.Path(), help="Output file, or directory for bundle.")
def cmd_compile(blueprint, target, kb_path, profile_path, out) -> None:
    """Transpile a blueprint to framework YAML, a DOT graph, or a bundle."""
    try:
        kb = _load_kb(kb_path)
        doc = parse_nadl(Path(blueprint).read_text())
        if target == "yaml":
            _write_or_echo(compiler.compile_to_yaml(doc, kb), out)
        elif target == "graph":
            report = validator.validate(doc, kb)
            _write_or_echo(compiler.compile_to_graph_export(doc, report), out)
        else:
            if not profile_path:
                raise click.UsageError("--profile is required for the bundle target")
            if not out:
                raise click.UsageError("--out directory is required for the bundle target")
            profile = _read_profile(profile_path)
            compiler.emit_codegen_bundle(doc, profile, kb, out)
            click.echo(f"bundle written to {out}")
    except ToolError as exc:
        _fail(exc)


@main.command("pipeline")
@click.argument("label_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dims-manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--images-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dataset-id", default="dataset", show_default=True)
@click.option("--kb", "kb_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--budget", type=int)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def cmd_pipeline(
    label_dir, dims_manifest, images_dir, dataset_id, kb_path, config_path, budget, out_dir
) -> None:
    """Profile, synthesize, validate and compile in one pass."""
    try:
        config = load_config(config_path, param_budget=budget)
        kb = _load_kb(kb_path)
        records = profiler.load_annotations(
            label_dir, dims_manifest=dims_manifest, images_dir=images_dir
        )
        stats = _image_stats(records, Path(images_dir)) if images_dir else None
        profile = profiler.compute_profile(records, image_stats=stats, dataset_id=dataset_id)
        reasoner = RuleReasoner(
            kb, thresholds=config.thresholds, param_budget=config.param_budget
        )
        doc, trace = run_agent(profile, kb, reasoner, max_iterations=config.max_iterations)
        report = validator.validate(doc, kb)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "profile.json").write_text(profiler.to_json(profile))
        (out / "blueprint.json").write_text(serialize_nadl(doc))
        (out / "trace.json").write_text(trace.to_json())
        (out / "validation.json").write_text(report.to_json())
        (out / "model.yaml").write_text(compiler.compile_to_yaml(doc, kb))
        compiler.emit_codegen_bundle(doc, profile, kb, out / "bundle")
    except ToolError as exc:
        _fail(exc)
    click.echo(f"pipeline artifacts written to {out_dir}")


def _fail(exc: ToolError) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(2)


if __name__ == "__main__":
    main()
