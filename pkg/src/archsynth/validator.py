"""Static analysis of blueprints: topology, channels, strides, parameters.

The validator collects every diagnostic instead of failing fast, so a
caller (human or model) receives the full defect list in one pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import UnknownModule
from .kb import VARIADIC, KnowledgeBase
from .nadl import INPUT_REF, LayerSpec, NadlDocument

DIAGNOSTIC_KINDS = (
    "BrokenConnection",
    "Cycle",
    "ChannelConflict",
    "ArityMismatch",
    "UnknownModule",
    "BadArgs",
    "HeadStrideDuplicate",
    "NoHead",
    "StrideDivergence",
)

ERROR_KINDS = frozenset(
    {"BrokenConnection", "Cycle", "ChannelConflict", "ArityMismatch", "UnknownModule", "BadArgs", "NoHead"}
)
WARNING_KINDS = frozenset({"HeadStrideDuplicate", "StrideDivergence"})


@dataclass(frozen=True)
class Diagnostic:
    layer_index: int | None
    kind: str
    message: str

    def __post_init__(self) -> None:
        assert self.kind in DIAGNOSTIC_KINDS, self.kind
        assert self.message


@dataclass(frozen=True)
class LayerAnalysis:
    layer_index: int
    inferred_c_out: int | None
    inferred_stride: int | None
    param_estimate: int


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Diagnostic, ...]
    warnings: tuple[Diagnostic, ...]
    per_layer: tuple[LayerAnalysis, ...]
    total_params: int

    @property
    def is_clean(self) -> bool:
        return not self.errors

    @property
    def exit_code(self) -> int:
        if self.errors:
            return 2
        if self.warnings:
            return 1
        return 0

    def to_json(self) -> str:
        obj = {
            "errors": [
                {"layer_index": d.layer_index, "kind": d.kind, "message": d.message}
                for d in self.errors
            ],
            "warnings": [
                {"layer_index": d.layer_index, "kind": d.kind, "message": d.message}
                for d in self.warnings
            ],
            "per_layer": [
                {
                    "layer_index": a.layer_index,
                    "inferred_c_out": a.inferred_c_out,
                    "inferred_stride": a.inferred_stride,
                    "param_estimate": a.param_estimate,
                }
                for a in self.per_layer
            ],
            "total_params": self.total_params,
        }
        return json.dumps(obj, indent=2) + "\n"

    def render_table(self) -> str:
        lines = ["layer  c_out  stride  params"]
        for a in self.per_layer:
            c_out = "-" if a.inferred_c_out is None else str(a.inferred_c_out)
            stride = "-" if a.inferred_stride is None else str(a.inferred_stride)
            lines.append(f"{a.layer_index:>5}  {c_out:>5}  {stride:>6}  {a.param_estimate:>6}")
        lines.append(f"total params: {self.total_params}")
        for d in self.errors:
            where = "doc" if d.layer_index is None else f"layer {d.layer_index}"
            lines.append(f"error [{d.kind}] {where}: {d.message}")
        for d in self.warnings:
            where = "doc" if d.layer_index is None else f"layer {d.layer_index}"
            lines.append(f"warning [{d.kind}] {where}: {d.message}")
        return "\n".join(lines) + "\n"


def _sort_key(diag: Diagnostic) -> tuple:
    index = -1 if diag.layer_index is None else diag.layer_index
    return (index, diag.kind, diag.message)


@dataclass
class _Analysis:
    diags: list[Diagnostic] = field(default_factory=list)
    c_out: dict[int, int] = field(default_factory=dict)
    stride: dict[int, int] = field(default_factory=dict)
    params: dict[int, int] = field(default_factory=dict)

    def add(self, layer_index: int | None, kind: str, message: str) -> None:
        self.diags.append(Diagnostic(layer_index, kind, message))


def _check_structure(layer: LayerSpec, n_layers: int, kb: KnowledgeBase, out: _Analysis) -> bool:
    """Per-layer structural checks; returns True when the layer is sound."""
    i = layer.index
    ok = True
    try:
        sig = kb.get_signature(layer.module_kind)
    except UnknownModule:
        out.add(i, "UnknownModule", f"module kind {layer.module_kind!r} is not registered")
        return False

    if sig.arity != VARIADIC and len(layer.sources) != sig.arity:
        out.add(
            i,
            "ArityMismatch",
            f"{layer.module_kind} expects {sig.arity} input(s), got {len(layer.sources)}",
        )
        ok = False

    for src in layer.sources:
        if src == INPUT_REF:
            if i != 0:
                out.add(i, "BrokenConnection", f"'{INPUT_REF}' source is only legal on layer 0")
                ok = False
        elif src == i:
            out.add(i, "Cycle", f"layer {i} references itself")
            ok = False
        elif src == -1 and i == 0:
            out.add(i, "BrokenConnection", "layer 0 has no predecessor for relative source -1")
            ok = False
        elif src != -1 and (src < 0 or src >= n_layers):
            out.add(i, "BrokenConnection", f"source {src} is out of range (0..{n_layers - 1})")
            ok = False
        elif src != -1 and src > i:
            out.add(i, "BrokenConnection", f"source {src} is a forward reference from layer {i}")
            ok = False

    rule = sig.channel_rule
    if rule.kind == "fixed_out":
        if rule.arg_index >= len(layer.args):
            out.add(
                i,
                "BadArgs",
                f"{layer.module_kind} carries no output-width arg at position {rule.arg_index}",
            )
            ok = False
        else:
            value = layer.args[rule.arg_index]
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                out.add(i, "BadArgs", f"output width arg must be a positive integer, got {value!r}")
                ok = False
    if sig.stride_effect.kind == "from_arg":
        idx = sig.stride_effect.arg_index
        if idx >= len(layer.args):
            out.add(i, "BadArgs", f"{layer.module_kind} carries no stride arg at position {idx}")
            ok = False
        elif layer.args[idx] not in (1, 2):
            out.add(i, "BadArgs", f"stride arg must be 1 or 2, got {layer.args[idx]!r}")
            ok = False
    if sig.kernel_arg is not None:
        if sig.kernel_arg >= len(layer.args):
            out.add(i, "BadArgs", f"{layer.module_kind} carries no kernel arg at position {sig.kernel_arg}")
            ok = False
        else:
            value = layer.args[sig.kernel_arg]
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                out.add(i, "BadArgs", f"kernel arg must be a positive integer, got {value!r}")
                ok = False
    return ok


def _resolve_sources(layer: LayerSpec) -> list[int | str]:
    return [layer.index - 1 if src == -1 else src for src in layer.sources]


def _infer_layer(
    layer: LayerSpec, kb: KnowledgeBase, input_channels: int, out: _Analysis
) -> None:
    """Channel/stride/param inference; requires structural soundness."""
    i = layer.index
    sig = kb.get_signature(layer.module_kind)
    in_channels: list[int] = []
    in_strides: list[int] = []
    for src in _resolve_sources(layer):
        if src == INPUT_REF:
            in_channels.append(input_channels)
            in_strides.append(1)
        elif src in out.c_out:
            in_channels.append(out.c_out[src])
            in_strides.append(out.stride[src])
        else:
            return  # upstream unresolved; leave this layer unresolved too

    rule = sig.channel_rule
    if rule.kind == "fixed_out":
        c_out = layer.args[rule.arg_index]
    elif rule.kind == "same_as_input":
        c_out = in_channels[0]
    elif rule.kind == "sum_of_inputs":
        c_out = sum(in_channels)
    else:  # max_of_inputs: element-wise merge, all inputs must agree
        if len(set(in_channels)) > 1:
            out.add(
                i,
                "ChannelConflict",
                f"{layer.module_kind} requires equal input channels, got {in_channels}",
            )
            return
        c_out = in_channels[0]

    # heads consume several scale levels on purpose; divergence is only
    # suspicious when an in-network merge sees it
    if len(set(in_strides)) > 1 and kb.get(layer.module_kind).category != "Head":
        out.add(
            i,
            "StrideDivergence",
            f"{layer.module_kind} merges inputs at divergent strides {in_strides}",
        )
    stride_in = max(in_strides)
    effect = sig.stride_effect
    if effect.kind == "keep":
        stride = stride_in
    elif effect.kind == "down2":
        stride = stride_in * 2
    elif effect.kind == "up2":
        if stride_in % 2 != 0:
            out.add(
                i,
                "StrideDivergence",
                f"upsample at stride {stride_in} cannot go below the input resolution",
            )
            stride = 1
        else:
            stride = stride_in // 2
    else:  # from_arg
        stride = stride_in * int(layer.args[effect.arg_index])

    c_in = in_channels[0] if sig.arity == 1 else sum(in_channels)
    kernel = int(layer.args[sig.kernel_arg]) if sig.kernel_arg is not None else 1
    out.c_out[i] = int(c_out)
    out.stride[i] = stride
    out.params[i] = sig.param_formula.evaluate(
        c_in=c_in, c_out=int(c_out), repeats=layer.repeats, kernel=kernel
    )


def _check_heads(doc: NadlDocument, out: _Analysis) -> None:
    heads = [layer for layer in doc.layers if layer.role == "head"]
    if not heads:
        out.add(None, "NoHead", "blueprint has no head-role layer")
        return
    for layer in heads:
        if len(layer.sources) < 2:
            continue
        strides = []
        for src in _resolve_sources(layer):
            if src == INPUT_REF or src not in out.stride:
                return
            strides.append(out.stride[src])
        if len(set(strides)) < len(strides):
            out.add(
                layer.index,
                "HeadStrideDuplicate",
                f"head consumes duplicate strides {strides}; scales should be pairwise distinct",
            )


def validate(doc: NadlDocument, kb: KnowledgeBase) -> ValidationReport:
    """Run every check, collecting diagnostics; never raises on bad docs."""
    analysis = _Analysis()
    n = len(doc.layers)
    sound: dict[int, bool] = {}
    for layer in doc.layers:
        sound[layer.index] = _check_structure(layer, n, kb, analysis)
    for layer in doc.layers:
        if sound[layer.index]:
            _infer_layer(layer, kb, doc.input_spec.channels, analysis)
    _check_heads(doc, analysis)

    errors = tuple(sorted((d for d in analysis.diags if d.kind in ERROR_KINDS), key=_sort_key))
    warnings = tuple(sorted((d for d in analysis.diags if d.kind in WARNING_KINDS), key=_sort_key))
    per_layer = tuple(
        LayerAnalysis(
            layer_index=layer.index,
            inferred_c_out=analysis.c_out.get(layer.index),
            inferred_stride=analysis.stride.get(layer.index),
            param_estimate=analysis.params.get(layer.index, 0),
        )
        for layer in doc.layers
    )
    return ValidationReport(
        errors=errors,
        warnings=warnings,
        per_layer=per_layer,
        total_params=sum(a.param_estimate for a in per_layer),
    )


def infer_channels(doc: NadlDocument, kb: KnowledgeBase, input_channels: int | None = None) -> list[int | None]:
    """Per-layer output channels; None where inference could not reach."""
    if input_channels is not None:
        from dataclasses import replace

        doc = replace(doc, input_spec=replace(doc.input_spec, channels=input_channels))
    report = validate(doc, kb)
    return [a.inferred_c_out for a in report.per_layer]


def estimate_params(doc: NadlDocument, kb: KnowledgeBase) -> tuple[int, list[int]]:
    """Total parameter estimate with the per-layer breakdown."""
    report = validate(doc, kb)
    return report.total_params, [a.param_estimate for a in report.per_layer]


def check_head_scales(doc: NadlDocument, kb: KnowledgeBase) -> list[Diagnostic]:
    """Head-scale diagnostics only (duplicate strides, missing head)."""
    report = validate(doc, kb)
    return [
        d
        for d in (*report.errors, *report.warnings)
        if d.kind in ("HeadStrideDuplicate", "NoHead")
    ]
