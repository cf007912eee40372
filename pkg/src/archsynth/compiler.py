"""Transpile validated blueprints to target artifacts.

Targets: framework-style YAML config, a DOT graph export, and a codegen
context bundle. YAML parsing back is provided as the round-trip oracle.
"""

from __future__ import annotations

import os
import tempfile
from importlib import resources
from pathlib import Path

import yaml

from . import profiler, validator
from .errors import BlueprintSyntaxError, CompileError, SchemaError
from .kb import KnowledgeBase
from .nadl import (
    INPUT_REF,
    BlueprintMetadata,
    InputSpec,
    LayerSpec,
    NadlDocument,
    normalize_refs,
    serialize_nadl,
)

# Kind names whose framework spelling differs from the blueprint spelling.
_EMIT_NAME = {"Upsample": "nn.Upsample"}
_PARSE_NAME = {v: k for k, v in _EMIT_NAME.items()}

BUNDLE_FILES = (
    "blueprint.json",
    "profile.json",
    "validation.json",
    "codegen_prompt.md",
)


def _emit_args(kind: str, args: tuple) -> list:
    if kind == "Upsample":
        return [None, *args]
    return list(args)


def _parse_args(kind: str, args: list) -> list:
    if kind == "Upsample" and args and (args[0] is None or args[0] == "None"):
        return args[1:]
    return args


def _fmt_scalar(value) -> str:
    if value is None:
        return "None"
    if isinstance(value, str):
        return f"'{value}'"
    return repr(value)


def _fmt_entry(frm, repeats: int, kind: str, args: list) -> str:
    if isinstance(frm, list):
        frm_text = "[" + ", ".join(str(x) for x in frm) + "]"
    else:
        frm_text = str(frm)
    args_text = "[" + ", ".join(_fmt_scalar(a) for a in args) + "]"
    return f"  - [{frm_text}, {repeats}, {kind}, {args_text}]"


def compile_to_yaml(doc: NadlDocument, kb: KnowledgeBase) -> str:
    """Emit the two-section [from, repeats, module, args] configuration.

    Backbone-role layers fill the backbone section; neck and head roles
    fill the head section in order. The immediately-preceding-layer edge
    is re-encoded as -1.
    """
    report = validator.validate(doc, kb)
    if not report.is_clean:
        details = "; ".join(f"{d.kind}: {d.message}" for d in report.errors)
        raise CompileError(f"refusing to compile a blueprint with errors: {details}")
    doc = normalize_refs(doc)

    seen_non_backbone = False
    for layer in doc.layers:
        if layer.role == "backbone" and seen_non_backbone:
            raise CompileError(
                f"layer {layer.index} has role backbone after a neck/head layer; "
                "sections must partition the layer list in order"
            )
        if layer.role != "backbone":
            seen_non_backbone = True

    backbone_lines: list[str] = []
    head_lines: list[str] = []
    for layer in doc.layers:
        sources = list(layer.sources)
        if sources == [INPUT_REF]:
            frm: int | list = -1
        elif len(sources) == 1:
            frm = -1 if sources[0] == layer.index - 1 else sources[0]
        else:
            frm = sources
        kind = _EMIT_NAME.get(layer.module_kind, layer.module_kind)
        line = _fmt_entry(frm, layer.repeats, kind, _emit_args(layer.module_kind, layer.args))
        (backbone_lines if layer.role == "backbone" else head_lines).append(line)

    lines = [
        f"# generated from blueprint '{doc.metadata.dataset_id}'",
        f"nc: {doc.input_spec.num_classes}",
        "",
        "backbone:",
        *backbone_lines,
        "",
        "head:",
        *head_lines,
    ]
    return "\n".join(lines) + "\n"


def parse_yaml_back(text: str, kb: KnowledgeBase) -> NadlDocument:
    """Reconstruct a document from YAML emitted by compile_to_yaml.

    The result is graph-isomorphic to the source document (same layer
    order, kinds, args and edges); roles are re-derived from the section
    split and the knowledge-base taxonomy.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise BlueprintSyntaxError(str(exc)) from exc
    if not isinstance(raw, dict):
        raise SchemaError("configuration top level must be a mapping")
    extra = set(raw) - {"nc", "backbone", "head"}
    if extra:
        raise SchemaError(f"unknown top-level keys {sorted(extra)}")
    for key in ("nc", "backbone", "head"):
        if key not in raw:
            raise SchemaError(f"missing top-level key {key!r}")
    if not isinstance(raw["nc"], int) or raw["nc"] < 1:
        raise SchemaError("nc must be a positive integer")
    if not raw["head"]:
        raise SchemaError("head section must not be empty")

    layers: list[LayerSpec] = []
    index = 0
    for section, entries in (("backbone", raw["backbone"] or []), ("head", raw["head"])):
        for entry in entries:
            if not isinstance(entry, list) or len(entry) != 4:
                raise SchemaError(f"layer {index}: expected [from, repeats, module, args]")
            frm, repeats, kind, args = entry
            if not isinstance(repeats, int) or repeats < 1:
                raise SchemaError(f"layer {index}: repeats must be a positive integer")
            if not isinstance(kind, str):
                raise SchemaError(f"layer {index}: module token must be a string")
            kind = _PARSE_NAME.get(kind, kind)
            if kind not in kb:
                raise SchemaError(f"layer {index}: unknown module token {kind!r}")
            if not isinstance(args, list):
                raise SchemaError(f"layer {index}: args must be a list")
            sources: tuple
            if isinstance(frm, int):
                sources = (INPUT_REF,) if (index == 0 and frm == -1) else (frm,)
            elif isinstance(frm, list) and all(isinstance(x, int) for x in frm):
                sources = tuple(frm)
            else:
                raise SchemaError(f"layer {index}: bad from value {frm!r}")
            if section == "backbone":
                role = "backbone"
            else:
                role = "head" if kb.get(kind).category == "Head" else "neck"
            layers.append(
                LayerSpec(
                    index=index,
                    sources=sources,
                    repeats=repeats,
                    module_kind=kind,
                    args=tuple(_parse_args(kind, args)),
                    role=role,
                )
            )
            index += 1

    if not any(layer.role == "head" for layer in layers):
        # no Head-category kind in the head section; treat the final layer
        # as the prediction stage so document invariants hold
        last = layers[-1]
        layers[-1] = LayerSpec(
            index=last.index,
            sources=last.sources,
            repeats=last.repeats,
            module_kind=last.module_kind,
            args=last.args,
            role="head",
        )

    task = "obb" if any(layer.module_kind == "OBB" for layer in layers) else "detect"
    return NadlDocument(
        schema_version="1.0",
        task=task,
        input_spec=InputSpec(channels=3, nominal_resolution=640, num_classes=raw["nc"]),
        metadata=BlueprintMetadata(dataset_id="yaml-import"),
        layers=tuple(layers),
    )


def graphs_equal(a: NadlDocument, b: NadlDocument) -> bool:
    """Graph identity: same layer order, kinds, args, repeats and edges."""
    na, nb = normalize_refs(a), normalize_refs(b)
    def shape(doc: NadlDocument):
        return [
            (l.module_kind, l.args, l.repeats, l.sources)
            for l in doc.layers
        ]
    return shape(na) == shape(nb)


def compile_to_graph_export(
    doc: NadlDocument, report: validator.ValidationReport | None = None
) -> str:
    """DOT description: one node per layer, one edge per reference."""
    doc = normalize_refs(doc)
    analysis = {a.layer_index: a for a in report.per_layer} if report is not None else {}
    lines = ["digraph blueprint {", "  rankdir=TB;"]
    for layer in doc.layers:
        label = f"{layer.index} {layer.module_kind}"
        a = analysis.get(layer.index)
        if a is not None and a.inferred_c_out is not None:
            label += f"\\nc={a.inferred_c_out} s={a.inferred_stride}"
        lines.append(f'  n{layer.index} [label="{label}"];')
    for layer in doc.layers:
        for src in layer.sources:
            if src == INPUT_REF:
                continue
            lines.append(f"  n{src} -> n{layer.index};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _write_atomic(path: Path, content: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def suggested_train_command(yaml_name: str = "model.yaml") -> str:
    """The CI/CD hook as an inert command string; never executed here."""
    return (
        f"yolo detect train model={yaml_name} data=dataset.yaml epochs=100 imgsz=640"
    )


def emit_codegen_bundle(
    doc: NadlDocument,
    profile: profiler.DatasetProfile,
    kb: KnowledgeBase,
    out_dir: str | Path,
) -> Path:
    """Write the context bundle for an external code-generation model.

    Contents: canonical blueprint, profile report, validation report, and
    the filled prompt (which embeds the blueprint verbatim plus the
    suggested train/test command).
    """
    report = validator.validate(doc, kb)
    if not report.is_clean:
        details = "; ".join(f"{d.kind}: {d.message}" for d in report.errors)
        raise CompileError(f"refusing to bundle a blueprint with errors: {details}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nadl_text = serialize_nadl(doc)
    template = (
        resources.files("archsynth.prompts").joinpath("codegen_prompt.md").read_text()
    )
    prompt = template.format(
        nadl=nadl_text,
        profile_report=profiler.to_markdown(profile),
        validation_report=report.to_json(),
        train_command=suggested_train_command(),
    )
    contents = {
        "blueprint.json": nadl_text,
        "profile.json": profiler.to_json(profile),
        "validation.json": report.to_json(),
        "codegen_prompt.md": prompt,
    }
    for name in BUNDLE_FILES:
        _write_atomic(out_dir / name, contents[name])
    return out_dir
