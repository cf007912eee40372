"""Blueprint format: parse, serialize, normalize and the graph view.

A blueprint is a JSON document with a flat, densely indexed layer list.
Layer sources reference earlier layers by absolute index, ``-1`` for the
immediately preceding layer, or the reserved string ``"input"`` (layer 0
only) for the network input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

import networkx as nx

from .errors import BlueprintSyntaxError, RefError, SchemaError

SUPPORTED_SCHEMA_VERSIONS = ("1.0",)
INPUT_REF = "input"
TASKS = ("detect", "obb")
ROLES = ("backbone", "neck", "head")
GENERATORS = ("rule", "llm")

Source = int | str  # int index, -1, or INPUT_REF
Scalar = int | float | str


@dataclass(frozen=True)
class InputSpec:
    channels: int = 3
    nominal_resolution: int = 640
    num_classes: int = 1

    def __post_init__(self) -> None:
        if self.channels < 1:
            raise SchemaError(f"input_spec.channels must be >= 1, got {self.channels}")
        if self.nominal_resolution < 32:
            raise SchemaError(
                f"input_spec.nominal_resolution must be >= 32, got {self.nominal_resolution}"
            )
        if self.num_classes < 1:
            raise SchemaError(f"input_spec.num_classes must be >= 1, got {self.num_classes}")


@dataclass(frozen=True)
class BlueprintMetadata:
    dataset_id: str
    rationale_notes: tuple[str, ...] = ()
    generator: str = "rule"
    created_at: str = "1970-01-01T00:00:00Z"

    def __post_init__(self) -> None:
        if not self.dataset_id:
            raise SchemaError("metadata.dataset_id must be non-empty")
        if self.generator not in GENERATORS:
            raise SchemaError(f"metadata.generator must be one of {GENERATORS}")


@dataclass(frozen=True)
class LayerSpec:
    index: int
    sources: tuple[Source, ...]
    repeats: int
    module_kind: str
    args: tuple[Scalar, ...]
    role: str

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise SchemaError(f"layer {self.index}: repeats must be >= 1, got {self.repeats}")
        if not self.sources:
            raise SchemaError(f"layer {self.index}: from must be non-empty")
        if self.role not in ROLES:
            raise SchemaError(f"layer {self.index}: role must be one of {ROLES}")
        if not self.module_kind:
            raise SchemaError(f"layer {self.index}: module must be non-empty")


@dataclass(frozen=True)
class NadlDocument:
    schema_version: str
    task: str
    input_spec: InputSpec
    metadata: BlueprintMetadata
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.schema_version not in SUPPORTED_SCHEMA_VERSIONS:
            raise SchemaError(f"unsupported schema_version {self.schema_version!r}")
        if self.task not in TASKS:
            raise SchemaError(f"task must be one of {TASKS}, got {self.task!r}")
        for pos, layer in enumerate(self.layers):
            if layer.index != pos:
                raise SchemaError(
                    f"layer at position {pos} carries index {layer.index}; indices must be dense"
                )
        if not any(layer.role == "head" for layer in self.layers):
            raise SchemaError("blueprint has no head-role layer")


_TOP_KEYS = ("schema_version", "task", "input_spec", "metadata", "layers")
_LAYER_KEYS = ("index", "from", "repeats", "module", "args", "role")


def _require_keys(obj: dict, keys: tuple[str, ...], where: str) -> None:
    missing = [k for k in keys if k not in obj]
    extra = [k for k in obj if k not in keys]
    if missing:
        raise SchemaError(f"{where}: missing keys {missing}")
    if extra:
        raise SchemaError(f"{where}: unknown keys {extra}")


def _check_source(src: Any, index: int) -> Source:
    if src == INPUT_REF:
        if index != 0:
            raise SchemaError(f"layer {index}: '{INPUT_REF}' source is only legal on layer 0")
        return INPUT_REF
    if isinstance(src, bool) or not isinstance(src, int):
        raise SchemaError(f"layer {index}: source {src!r} is neither an index nor '{INPUT_REF}'")
    if src < -1:
        raise SchemaError(f"layer {index}: relative source {src} not supported; only -1 is")
    return src


def _check_scalar(value: Any, index: int) -> Scalar:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise SchemaError(f"layer {index}: arg {value!r} is not a scalar")
    return value


def _layer_from_obj(obj: Any, pos: int) -> LayerSpec:
    if not isinstance(obj, dict):
        raise SchemaError(f"layer at position {pos} is not an object")
    _require_keys(obj, _LAYER_KEYS, f"layer {pos}")
    index = obj["index"]
    if not isinstance(index, int) or isinstance(index, bool):
        raise SchemaError(f"layer {pos}: index must be an integer")
    if not isinstance(obj["from"], list):
        raise SchemaError(f"layer {pos}: from must be a list")
    if not isinstance(obj["repeats"], int) or isinstance(obj["repeats"], bool):
        raise SchemaError(f"layer {pos}: repeats must be an integer")
    if not isinstance(obj["module"], str):
        raise SchemaError(f"layer {pos}: module must be a string")
    if not isinstance(obj["args"], list):
        raise SchemaError(f"layer {pos}: args must be a list")
    if not isinstance(obj["role"], str):
        raise SchemaError(f"layer {pos}: role must be a string")
    return LayerSpec(
        index=index,
        sources=tuple(_check_source(s, index) for s in obj["from"]),
        repeats=obj["repeats"],
        module_kind=obj["module"],
        args=tuple(_check_scalar(a, index) for a in obj["args"]),
        role=obj["role"],
    )


def parse_nadl(text: str) -> NadlDocument:
    """Parse blueprint text, enforcing field-level invariants.

    Cross-layer topology (forward references, cycles) is deliberately left
    to the validator so that defective documents can still be loaded and
    diagnosed.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BlueprintSyntaxError(str(exc)) from exc
    if not isinstance(raw, dict):
        raise SchemaError("top level must be an object")
    _require_keys(raw, _TOP_KEYS, "document")
    if not isinstance(raw["schema_version"], str):
        raise SchemaError("schema_version must be a string")
    if not isinstance(raw["layers"], list):
        raise SchemaError("layers must be a list")

    spec_obj = raw["input_spec"]
    if not isinstance(spec_obj, dict):
        raise SchemaError("input_spec must be an object")
    _require_keys(spec_obj, ("channels", "nominal_resolution", "num_classes"), "input_spec")
    for key in ("channels", "nominal_resolution", "num_classes"):
        if not isinstance(spec_obj[key], int) or isinstance(spec_obj[key], bool):
            raise SchemaError(f"input_spec.{key} must be an integer")

    meta_obj = raw["metadata"]
    if not isinstance(meta_obj, dict):
        raise SchemaError("metadata must be an object")
    _require_keys(
        meta_obj, ("dataset_id", "rationale_notes", "generator", "created_at"), "metadata"
    )
    if not isinstance(meta_obj["dataset_id"], str):
        raise SchemaError("metadata.dataset_id must be a string")
    if not isinstance(meta_obj["rationale_notes"], list) or not all(
        isinstance(n, str) for n in meta_obj["rationale_notes"]
    ):
        raise SchemaError("metadata.rationale_notes must be a list of strings")
    if not isinstance(meta_obj["created_at"], str):
        raise SchemaError("metadata.created_at must be a string")

    return NadlDocument(
        schema_version=raw["schema_version"],
        task=raw["task"] if isinstance(raw["task"], str) else _bad_task(raw["task"]),
        input_spec=InputSpec(
            channels=spec_obj["channels"],
            nominal_resolution=spec_obj["nominal_resolution"],
            num_classes=spec_obj["num_classes"],
        ),
        metadata=BlueprintMetadata(
            dataset_id=meta_obj["dataset_id"],
            rationale_notes=tuple(meta_obj["rationale_notes"]),
            generator=meta_obj["generator"],
            created_at=meta_obj["created_at"],
        ),
        layers=tuple(_layer_from_obj(obj, pos) for pos, obj in enumerate(raw["layers"])),
    )


def _bad_task(value: Any) -> str:
    raise SchemaError(f"task must be a string, got {value!r}")


def serialize_nadl(doc: NadlDocument) -> str:
    """Serialize to the canonical form: fixed key order, 2-space indent.

    Equal documents serialize to byte-equal strings.
    """
    obj = {
        "schema_version": doc.schema_version,
        "task": doc.task,
        "input_spec": {
            "channels": doc.input_spec.channels,
            "nominal_resolution": doc.input_spec.nominal_resolution,
            "num_classes": doc.input_spec.num_classes,
        },
        "metadata": {
            "dataset_id": doc.metadata.dataset_id,
            "rationale_notes": list(doc.metadata.rationale_notes),
            "generator": doc.metadata.generator,
            "created_at": doc.metadata.created_at,
        },
        "layers": [
            {
                "index": layer.index,
                "from": list(layer.sources),
                "repeats": layer.repeats,
                "module": layer.module_kind,
                "args": list(layer.args),
                "role": layer.role,
            }
            for layer in doc.layers
        ],
    }
    return json.dumps(obj, indent=2, ensure_ascii=True) + "\n"


def normalize_refs(doc: NadlDocument) -> NadlDocument:
    """Replace every ``-1`` source with the absolute previous index.

    Idempotent; absolute references pass through unchanged.
    """
    layers = []
    for layer in doc.layers:
        if -1 in layer.sources and layer.index == 0:
            raise RefError("layer 0 has no predecessor to resolve -1 against")
        sources = tuple(
            layer.index - 1 if src == -1 else src for src in layer.sources
        )
        layers.append(replace(layer, sources=sources))
    return replace(doc, layers=tuple(layers))


def graph_of(doc: NadlDocument) -> nx.MultiDiGraph:
    """Build the layer graph: one node per layer, one edge per reference.

    ``"input"`` sources contribute no edge; duplicate sources contribute
    parallel edges (the edge multiset mirrors the from lists exactly).
    """
    graph = nx.MultiDiGraph()
    graph.add_nodes_from(layer.index for layer in doc.layers)
    for layer in doc.layers:
        for src in layer.sources:
            if src == INPUT_REF:
                continue
            graph.add_edge(src, layer.index)
    return graph
