import json

import pytest

from archsynth.errors import BlueprintSyntaxError, RefError, SchemaError
from archsynth.nadl import (
    INPUT_REF,
    graph_of,
    normalize_refs,
    parse_nadl,
    serialize_nadl,
)


def minimal_obj():
    return {
        "schema_version": "1.0",
        "task": "detect",
        "input_spec": {"channels": 3, "nominal_resolution": 640, "num_classes": 2},
        "metadata": {
            "dataset_id": "d",
            "rationale_notes": [],
            "generator": "rule",
            "created_at": "1970-01-01T00:00:00Z",
        },
        "layers": [
            {"index": 0, "from": ["input"], "repeats": 1, "module": "Conv",
             "args": [16, 3, 2], "role": "backbone"},
            {"index": 1, "from": [-1], "repeats": 1, "module": "Detect",
             "args": [2], "role": "head"},
        ],
    }


def test_parse_minimal():
    doc = parse_nadl(json.dumps(minimal_obj()))
    assert len(doc.layers) == 2
    assert doc.layers[0].sources == (INPUT_REF,)
    assert doc.layers[1].module_kind == "Detect"


def test_parse_rejects_bad_json():
    with pytest.raises(BlueprintSyntaxError):
        parse_nadl("{not json")


def test_parse_rejects_unknown_top_key():
    obj = minimal_obj()
    obj["extra"] = 1
    with pytest.raises(SchemaError, match="unknown keys"):
        parse_nadl(json.dumps(obj))


def test_parse_rejects_missing_layer_key():
    obj = minimal_obj()
    del obj["layers"][0]["repeats"]
    with pytest.raises(SchemaError, match="missing keys"):
        parse_nadl(json.dumps(obj))


def test_parse_rejects_input_ref_after_layer_zero():
    obj = minimal_obj()
    obj["layers"][1]["from"] = ["input"]
    with pytest.raises(SchemaError, match="only legal on layer 0"):
        parse_nadl(json.dumps(obj))


def test_parse_rejects_relative_refs_other_than_minus_one():
    obj = minimal_obj()
    obj["layers"][1]["from"] = [-2]
    with pytest.raises(SchemaError, match="only -1"):
        parse_nadl(json.dumps(obj))


def test_parse_rejects_sparse_indices():
    obj = minimal_obj()
    obj["layers"][1]["index"] = 5
    with pytest.raises(SchemaError, match="dense"):
        parse_nadl(json.dumps(obj))


def test_parse_rejects_unknown_task():
    obj = minimal_obj()
    obj["task"] = "segment"
    with pytest.raises(SchemaError):
        parse_nadl(json.dumps(obj))


def test_parse_rejects_zero_repeats():
    obj = minimal_obj()
    obj["layers"][0]["repeats"] = 0
    with pytest.raises(SchemaError):
        parse_nadl(json.dumps(obj))


def test_parse_requires_head_layer():
    obj = minimal_obj()
    obj["layers"][1]["role"] = "neck"
    with pytest.raises(SchemaError, match="head"):
        parse_nadl(json.dumps(obj))


def test_serialize_is_canonical_and_stable():
    doc = parse_nadl(json.dumps(minimal_obj()))
    text = serialize_nadl(doc)
    assert text == serialize_nadl(parse_nadl(text))
    assert text.endswith("\n")
    assert list(json.loads(text)) == ["schema_version", "task", "input_spec", "metadata", "layers"]


def test_roundtrip_on_goldens(goldens, golden_texts):
    for name, doc in goldens.items():
        assert serialize_nadl(doc) == golden_texts[name]


def test_normalize_refs_resolves_relative():
    doc = parse_nadl(json.dumps(minimal_obj()))
    normalized = normalize_refs(doc)
    assert normalized.layers[1].sources == (0,)
    assert normalize_refs(normalized) == normalized


def test_normalize_refs_layer_zero_error():
    obj = minimal_obj()
    obj["layers"][0]["from"] = [-1]
    with pytest.raises(RefError):
        normalize_refs(parse_nadl(json.dumps(obj)))


def test_graph_of_edges(goldens):
    doc = goldens["golden_fpn"]
    graph = graph_of(doc)
    assert graph.number_of_nodes() == len(doc.layers)
    # "input" contributes no edge; every other source contributes exactly one
    expected = sum(
        1 for layer in doc.layers for s in layer.sources if s != INPUT_REF
    )
    assert graph.number_of_edges() == expected
    assert graph.has_edge(4, 8)


def test_graph_of_parallel_edges():
    obj = minimal_obj()
    obj["layers"][1]["from"] = [0, 0]
    graph = graph_of(parse_nadl(json.dumps(obj)))
    assert graph.number_of_edges() == 2
