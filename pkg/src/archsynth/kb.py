"""Structured module knowledge base with ranked keyword retrieval.

Records are stored as line-delimited JSON. Each record carries the
Backbone/Neck/Head taxonomy plus a machine-checkable structural signature
(arity, channel rule, stride effect, parameter formula) used by the
validator and compiler.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import DuplicateId, EmptyQuery, SchemaError, UnknownModule

CATEGORIES = ("Backbone", "Neck", "Head")
VARIADIC = "variadic"

CHANNEL_RULE_KINDS = ("fixed_out", "same_as_input", "sum_of_inputs", "max_of_inputs")
STRIDE_KINDS = ("keep", "down2", "up2", "from_arg")

# Controlled vocabulary; unknown tags in a record are a load-time SchemaError
# so that agent-side tag queries stay reliable.
TAG_VOCABULARY = frozenset(
    {
        "small-object",
        "background-suppression",
        "multi-scale-fusion",
        "lightweight",
        "oriented-boxes",
        "dense-scene",
        "high-resolution",
        "global-context",
        "real-time",
        "occlusion-robust",
    }
)

PARAM_VARS = ("c_in", "c_out", "repeats", "kernel2")


@dataclass(frozen=True)
class ChannelRule:
    kind: str
    arg_index: int | None = None
    notes: str = ""

    def __post_init__(self) -> None:
        if self.kind not in CHANNEL_RULE_KINDS:
            raise SchemaError(f"unknown channel rule kind {self.kind!r}")
        if self.kind == "fixed_out" and (self.arg_index is None or self.arg_index < 0):
            raise SchemaError("fixed_out channel rule needs a non-negative arg_index")


@dataclass(frozen=True)
class StrideEffect:
    kind: str
    arg_index: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in STRIDE_KINDS:
            raise SchemaError(f"unknown stride effect kind {self.kind!r}")
        if self.kind == "from_arg" and (self.arg_index is None or self.arg_index < 0):
            raise SchemaError("from_arg stride effect needs a non-negative arg_index")


@dataclass(frozen=True)
class FormulaTerm:
    coefficient: float
    powers: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        for name, exp in self.powers:
            if name not in PARAM_VARS:
                raise SchemaError(f"unknown parameter variable {name!r}")
            if exp < 1:
                raise SchemaError(f"power for {name} must be >= 1")


@dataclass(frozen=True)
class ParamFormula:
    terms: tuple[FormulaTerm, ...] = ()
    description: str = ""

    def evaluate(self, c_in: int, c_out: int, repeats: int, kernel: int) -> int:
        env = {"c_in": c_in, "c_out": c_out, "repeats": repeats, "kernel2": kernel * kernel}
        total = 0.0
        for term in self.terms:
            value = term.coefficient
            for name, exp in term.powers:
                value *= env[name] ** exp
            total += value
        if total < 0:
            raise SchemaError("parameter formula evaluated to a negative value")
        return int(round(total))


@dataclass(frozen=True)
class ModuleRecord:
    id: str
    name: str
    category: str
    description: str
    strengths: tuple[str, ...] = ()
    weaknesses: tuple[str, ...] = ()
    applicability_tags: frozenset[str] = frozenset()
    metric_notes: str = ""
    arity: int | str = 1
    channel_rule: ChannelRule = ChannelRule("same_as_input")
    stride_effect: StrideEffect = StrideEffect("keep")
    param_formula: ParamFormula = ParamFormula()
    kernel_arg: int | None = None
    primitive: bool = False

    def __post_init__(self) -> None:
        if not self.id:
            raise SchemaError("record id must be non-empty")
        if self.category not in CATEGORIES:
            raise SchemaError(f"record {self.id}: category must be one of {CATEGORIES}")
        if self.arity != VARIADIC and (not isinstance(self.arity, int) or self.arity < 1):
            raise SchemaError(f"record {self.id}: arity must be >= 1 or '{VARIADIC}'")
        bad = self.applicability_tags - TAG_VOCABULARY
        if bad:
            raise SchemaError(f"record {self.id}: unknown tags {sorted(bad)}")


@dataclass(frozen=True)
class Query:
    text_terms: tuple[str, ...] = ()
    required_tags: frozenset[str] = frozenset()
    category_filter: str | None = None

    def __post_init__(self) -> None:
        if self.category_filter is not None and self.category_filter not in CATEGORIES:
            raise SchemaError(f"category filter must be one of {CATEGORIES}")

    def is_empty(self) -> bool:
        return not self.text_terms and not self.required_tags and self.category_filter is None


@dataclass(frozen=True)
class RankedCandidate:
    record: ModuleRecord
    score: float
    matched_tags: frozenset[str] = frozenset()
    matched_terms: frozenset[str] = frozenset()


class ModuleSignature(NamedTuple):
    arity: int | str
    channel_rule: ChannelRule
    stride_effect: StrideEffect
    param_formula: ParamFormula
    kernel_arg: int | None


def _formula_from_obj(obj: dict) -> ParamFormula:
    terms = []
    for term in obj.get("terms", []):
        powers = tuple(sorted((str(k), int(v)) for k, v in term.get("powers", {}).items()))
        terms.append(FormulaTerm(coefficient=float(term["coefficient"]), powers=powers))
    return ParamFormula(terms=tuple(terms), description=obj.get("description", ""))


def record_from_obj(obj: dict) -> ModuleRecord:
    try:
        rule_obj = obj["channel_rule"]
        stride_obj = obj["stride_effect"]
        return ModuleRecord(
            id=obj["id"],
            name=obj["name"],
            category=obj["category"],
            description=obj["description"],
            strengths=tuple(obj.get("strengths", [])),
            weaknesses=tuple(obj.get("weaknesses", [])),
            applicability_tags=frozenset(obj.get("applicability_tags", [])),
            metric_notes=obj.get("metric_notes", ""),
            arity=obj["arity"],
            channel_rule=ChannelRule(
                kind=rule_obj["kind"],
                arg_index=rule_obj.get("arg_index"),
                notes=rule_obj.get("notes", ""),
            ),
            stride_effect=StrideEffect(
                kind=stride_obj["kind"], arg_index=stride_obj.get("arg_index")
            ),
            param_formula=_formula_from_obj(obj.get("param_formula", {})),
            kernel_arg=obj.get("kernel_arg"),
            primitive=obj.get("primitive", False),
        )
    except KeyError as exc:
        raise SchemaError(f"record missing key {exc}") from exc


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class KnowledgeBase:
    """Immutable record store; all read paths are pure."""

    def __init__(self, records: Iterable[ModuleRecord]) -> None:
        self._records: dict[str, ModuleRecord] = {}
        for record in records:
            if record.id in self._records:
                raise DuplicateId(f"duplicate record id {record.id!r}")
            self._records[record.id] = record
        self._search_tokens = {
            rid: _TOKEN_RE.findall(
                " ".join([rec.description, *rec.strengths]).lower()
            )
            for rid, rec in self._records.items()
        }

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, module_kind: str) -> bool:
        return module_kind in self._records

    def records(self) -> list[ModuleRecord]:
        return list(self._records.values())

    def get(self, module_kind: str) -> ModuleRecord:
        try:
            return self._records[module_kind]
        except KeyError:
            raise UnknownModule(f"module kind {module_kind!r} not in knowledge base") from None

    def get_signature(self, module_kind: str) -> ModuleSignature:
        record = self.get(module_kind)
        return ModuleSignature(
            arity=record.arity,
            channel_rule=record.channel_rule,
            stride_effect=record.stride_effect,
            param_formula=record.param_formula,
            kernel_arg=record.kernel_arg,
        )

    def search(self, query: Query, k: int = 5) -> list[RankedCandidate]:
        """Rank records: 2.0 per matched tag + 1.0 per matched text term.

        Term contribution is the term frequency in description/strengths
        capped at 1.0. Ties break by ascending id; at most ``k`` results.
        """
        if query.is_empty():
            raise EmptyQuery("query has no terms, tags or category filter")
        if k < 1:
            raise ValueError("k must be >= 1")
        ranked = []
        for rid, record in self._records.items():
            if query.category_filter is not None and record.category != query.category_filter:
                continue
            matched_tags = query.required_tags & record.applicability_tags
            tokens = self._search_tokens[rid]
            matched_terms = set()
            term_score = 0.0
            for term in query.text_terms:
                tf = tokens.count(term.lower())
                if tf > 0:
                    matched_terms.add(term)
                    term_score += min(float(tf), 1.0)
            ranked.append(
                RankedCandidate(
                    record=record,
                    score=2.0 * len(matched_tags) + term_score,
                    matched_tags=frozenset(matched_tags),
                    matched_terms=frozenset(matched_terms),
                )
            )
        ranked.sort(key=lambda c: (-c.score, c.record.id))
        return ranked[:k]


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load and lint a line-delimited records file."""
    records = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{line_no}: bad JSON: {exc}") from exc
        records.append(record_from_obj(obj))
    return KnowledgeBase(records)


def load_seed_kb() -> KnowledgeBase:
    """Load the knowledge base seeded with this package's module records."""
    text = resources.files("archsynth.data").joinpath("seed_kb.jsonl").read_text()
    records = [
        record_from_obj(json.loads(line))
        for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    ]
    return KnowledgeBase(records)
