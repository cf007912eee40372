import random
from dataclasses import replace
from pathlib import Path

import pytest

from generator_tools import random_blueprint
from archsynth.compiler import (
    BUNDLE_FILES,
    compile_to_graph_export,
    compile_to_yaml,
    emit_codegen_bundle,
    graphs_equal,
    parse_yaml_back,
    suggested_train_command,
)
from archsynth.errors import CompileError, SchemaError
from archsynth.validator import validate
from conftest import make_profile


def test_yaml_shape_on_minimal(goldens, kb):
    text = compile_to_yaml(goldens["golden_minimal"], kb)
    assert "nc: 5" in text
    assert "backbone:" in text and "head:" in text
    # head section's chain layer re-encodes its edge as -1
    assert "- [-1, 1, Detect, [5]]" in text


def test_upsample_name_and_args_mapping(goldens, kb):
    text = compile_to_yaml(goldens["golden_fpn"], kb)
    assert "nn.Upsample" in text
    assert "[None, 2, 'nearest']" in text
    assert "Upsample," not in text.replace("nn.Upsample", "")


def test_fire_yaml_contains_decisions(goldens, kb):
    text = compile_to_yaml(goldens["golden_fire"], kb)
    assert "TransformerEncoderBlock" in text
    assert "RTDETRDecoder" in text


def test_compile_refuses_errors(goldens, kb):
    doc = goldens["golden_minimal"]
    mutant = replace(
        doc,
        layers=tuple(
            replace(l, module_kind="Bogus") if l.index == 1 else l
            for l in doc.layers
        ),
    )
    with pytest.raises(CompileError, match="refusing"):
        compile_to_yaml(mutant, kb)


def test_compile_refuses_role_disorder(goldens, kb):
    doc = goldens["golden_fpn"]
    layers = list(doc.layers)
    layers[3] = replace(layers[3], role="neck")
    with pytest.raises(CompileError, match="sections"):
        compile_to_yaml(replace(doc, layers=tuple(layers)), kb)


def test_section_partition(goldens, kb):
    import yaml as yaml_lib

    for name, doc in goldens.items():
        raw = yaml_lib.safe_load(compile_to_yaml(doc, kb))
        n_backbone = sum(1 for l in doc.layers if l.role == "backbone")
        assert len(raw["backbone"]) == n_backbone, name
        assert len(raw["backbone"]) + len(raw["head"]) == len(doc.layers), name


def test_roundtrip_on_goldens(goldens, kb):
    for name, doc in goldens.items():
        back = parse_yaml_back(compile_to_yaml(doc, kb), kb)
        assert graphs_equal(doc, back), name
        assert back.input_spec.num_classes == doc.input_spec.num_classes
        assert back.task == doc.task


def test_roundtrip_property_500_random(kb):
    rng = random.Random(20260823)
    for case in range(500):
        doc = random_blueprint(rng)
        report = validate(doc, kb)
        assert report.errors == (), f"case {case} generated an invalid doc"
        back = parse_yaml_back(compile_to_yaml(doc, kb), kb)
        assert graphs_equal(doc, back), f"case {case}"


def test_parse_yaml_back_rejects_unknown_token(kb):
    text = "nc: 2\nbackbone:\n  - [-1, 1, Conv, [16, 3, 2]]\nhead:\n  - [-1, 1, Wat, [2]]\n"
    with pytest.raises(SchemaError, match="unknown module token"):
        parse_yaml_back(text, kb)


def test_parse_yaml_back_rejects_missing_section(kb):
    with pytest.raises(SchemaError, match="missing top-level key"):
        parse_yaml_back("nc: 2\nbackbone: []\n", kb)


def test_parse_yaml_back_rejects_bad_repeats(kb):
    text = "nc: 2\nbackbone:\n  - [-1, 0, Conv, [16, 3, 2]]\nhead:\n  - [-1, 1, Detect, [2]]\n"
    with pytest.raises(SchemaError, match="repeats"):
        parse_yaml_back(text, kb)


def test_parse_yaml_back_derives_roles(goldens, kb):
    back = parse_yaml_back(compile_to_yaml(goldens["golden_fpn"], kb), kb)
    assert [l.role for l in back.layers[:7]] == ["backbone"] * 7
    assert back.layers[9].role == "neck"
    assert back.layers[10].role == "head"


def test_graph_export_dot(goldens, kb):
    doc = goldens["golden_minimal"]
    dot = compile_to_graph_export(doc, validate(doc, kb))
    assert dot.startswith("digraph")
    assert "n0 -> n1" in dot
    assert "c=16 s=2" in dot


def test_bundle_contents(goldens, kb, tmp_path):
    profile = make_profile()
    out = emit_codegen_bundle(goldens["golden_default"], profile, kb, tmp_path / "bundle")
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(BUNDLE_FILES)
    prompt = (out / "codegen_prompt.md").read_text()
    assert suggested_train_command() in prompt
    assert '"module": "C2f"' in prompt
    blueprint = (out / "blueprint.json").read_text()
    from archsynth.nadl import parse_nadl, serialize_nadl

    assert serialize_nadl(parse_nadl(blueprint)) == blueprint


def test_bundle_refuses_errors(goldens, kb, tmp_path):
    doc = goldens["golden_minimal"]
    mutant = replace(
        doc,
        layers=tuple(
            replace(l, module_kind="Bogus") if l.index == 1 else l
            for l in doc.layers
        ),
    )
    with pytest.raises(CompileError):
        emit_codegen_bundle(mutant, make_profile(), kb, tmp_path / "nope")
    assert not (tmp_path / "nope").exists() or not list((tmp_path / "nope").iterdir())


def test_compile_determinism(goldens, kb):
    for doc in goldens.values():
        assert compile_to_yaml(doc, kb) == compile_to_yaml(doc, kb)
