"""Architect agent: map profile features to module choices and a blueprint.

The loop per iteration: propose queries -> retrieve -> select -> assess
gaps; it stops when the gap list is empty or the iteration budget runs
out, then assembles the final blueprint from the selected candidate set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol

from . import validator
from .errors import AssemblyError, NoViableHead
from .kb import KnowledgeBase, Query, RankedCandidate, VARIADIC
from .nadl import BlueprintMetadata, InputSpec, LayerSpec, NadlDocument
from .profiler import DatasetProfile

DEFAULT_MAX_ITERATIONS = 4
DEFAULT_PARAM_BUDGET = 7_000_000
RETRIEVAL_K = 8

# Base channel widths for backbone stages at strides 4/8/16/32; the stem
# (stride 2) runs at half the first stage width. Calibrated so the default
# candidate set lands in the mid-6M range before any budget halving.
BASE_WIDTHS = (48, 96, 176, 352)
STAGE_DEPTHS = (1, 2, 2, 1)
NECK_DEPTH = 1
DEFAULT_TIMESTAMP = "1970-01-01T00:00:00Z"


@dataclass(frozen=True)
class Thresholds:
    sparse_scene_fraction: float = 0.5
    scale_variation_ratio: float = 4.0
    small_fraction: float = 0.4
    objects_per_image_max: int = 30
    edge_density_low: float = 0.05
    edge_density_moderate: float = 0.20
    imbalance_ratio: float = 10.0


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class RuleFiring:
    rule_id: str
    feature: str  # DatasetProfile field that triggered the rule
    description: str
    query: Query | None
    preferred_tags: frozenset[str]


@dataclass(frozen=True)
class GapNote:
    feature: str
    need: str
    satisfied_by: str | None = None


@dataclass(frozen=True)
class CandidateSet:
    backbone_choice: str
    neck_choices: tuple[str, ...]
    head_choice: str
    auxiliary: tuple[str, ...] = ()
    rationale: dict[str, str] = field(default_factory=dict)

    def all_ids(self) -> tuple[str, ...]:
        return (self.backbone_choice, *self.neck_choices, self.head_choice, *self.auxiliary)


@dataclass(frozen=True)
class IterationRecord:
    queries: tuple[Query, ...]
    retrieved: tuple[tuple[str, float], ...]
    selected: tuple[str, ...]
    gap_notes: tuple[GapNote, ...]


@dataclass(frozen=True)
class ArchitectTrace:
    iterations: tuple[IterationRecord, ...]
    stop_reason: str  # gaps_closed | max_iterations
    reasoner_kind: str  # rule | llm

    def to_json(self) -> str:
        obj = {
            "reasoner_kind": self.reasoner_kind,
            "stop_reason": self.stop_reason,
            "iterations": [
                {
                    "queries": [
                        {
                            "text_terms": list(q.text_terms),
                            "required_tags": sorted(q.required_tags),
                            "category_filter": q.category_filter,
                        }
                        for q in it.queries
                    ],
                    "retrieved": [{"id": rid, "score": score} for rid, score in it.retrieved],
                    "selected": list(it.selected),
                    "gap_notes": [
                        {"feature": g.feature, "need": g.need, "satisfied_by": g.satisfied_by}
                        for g in it.gap_notes
                    ],
                }
                for it in self.iterations
            ],
        }
        return json.dumps(obj, indent=2) + "\n"


class Reasoner(Protocol):
    kind: str

    def propose_queries(self, profile: DatasetProfile, gaps: list[GapNote]) -> list[Query]: ...

    def select_modules(
        self, profile: DatasetProfile, candidates: list[RankedCandidate]
    ) -> CandidateSet: ...

    def assess_gaps(self, profile: DatasetProfile, candidate_set: CandidateSet) -> list[GapNote]: ...

    def assemble_blueprint(
        self, profile: DatasetProfile, candidate_set: CandidateSet
    ) -> NadlDocument: ...


# --- decision table ------------------------------------------------------


def rule_reasoner_decision_table(
    profile: DatasetProfile, thresholds: Thresholds = DEFAULT_THRESHOLDS
) -> list[RuleFiring]:
    """Evaluate the fixed-order feature->decision rule table.

    Thresholds operationalize qualitative dataset labels; each fired rule
    carries the retrieval query and tag preferences it contributes.
    """
    fired: list[RuleFiring] = []
    if profile.sparse_scene_fraction > thresholds.sparse_scene_fraction:
        fired.append(
            RuleFiring(
                rule_id="P1",
                feature="sparse_scene_fraction",
                description=(
                    f"sparse scenes ({profile.sparse_scene_fraction:.2f} of images hold "
                    "at most one object): prefer background suppression before the head"
                ),
                query=Query(required_tags=frozenset({"background-suppression"})),
                preferred_tags=frozenset({"background-suppression"}),
            )
        )
    if profile.scale_variation_ratio > thresholds.scale_variation_ratio:
        fired.append(
            RuleFiring(
                rule_id="P2",
                feature="scale_variation_ratio",
                description=(
                    f"extreme scale variation (p90/p10 = {profile.scale_variation_ratio:.2f}): "
                    "prefer adaptive multi-scale fusion in the head"
                ),
                query=Query(required_tags=frozenset({"multi-scale-fusion"})),
                preferred_tags=frozenset({"multi-scale-fusion"}),
            )
        )
    if (
        profile.mean_edge_density is not None
        and profile.mean_edge_density < thresholds.edge_density_moderate
    ):
        level = "low" if profile.mean_edge_density < thresholds.edge_density_low else "moderate"
        fired.append(
            RuleFiring(
                rule_id="P3",
                feature="mean_edge_density",
                description=(
                    f"{level} texture complexity (edge density "
                    f"{profile.mean_edge_density:.3f}): a lightweight backbone suffices, "
                    "freeing budget for the head"
                ),
                query=Query(required_tags=frozenset({"lightweight"}), category_filter="Backbone"),
                preferred_tags=frozenset({"lightweight"}),
            )
        )
    if profile.small_fraction > thresholds.small_fraction:
        fired.append(
            RuleFiring(
                rule_id="P4",
                feature="small_fraction",
                description=(
                    f"small-object heavy ({profile.small_fraction:.2f} of boxes below "
                    "the small-area threshold): keep high-resolution fusion paths"
                ),
                query=Query(required_tags=frozenset({"small-object"})),
                preferred_tags=frozenset({"small-object", "high-resolution"}),
            )
        )
    if profile.objects_per_image_max > thresholds.objects_per_image_max:
        fired.append(
            RuleFiring(
                rule_id="P5",
                feature="objects_per_image_max",
                description=(
                    f"dense scenes (up to {profile.objects_per_image_max} objects per "
                    "image): prefer set-prediction style heads"
                ),
                query=Query(required_tags=frozenset({"dense-scene"})),
                preferred_tags=frozenset({"dense-scene"}),
            )
        )
    if profile.imbalance_ratio > thresholds.imbalance_ratio:
        # training-loss concern; recorded in rationale only, no retrieval
        fired.append(
            RuleFiring(
                rule_id="P6",
                feature="imbalance_ratio",
                description=(
                    f"class imbalance ratio {profile.imbalance_ratio:.1f}: architecture "
                    "unchanged; address with loss weighting at training time"
                ),
                query=None,
                preferred_tags=frozenset(),
            )
        )
    return fired


# --- rule-based reasoner -------------------------------------------------


def _pick(
    candidates: list[RankedCandidate],
    category: str,
    tags: frozenset[str] = frozenset(),
    require_stage_block: bool = False,
) -> str | None:
    """Best-scoring candidate of a category carrying all required tags.

    Stage blocks are single-input modules with an explicit output width,
    the only shape the assembler can place in backbone/neck stages.
    """
    pool = []
    for cand in candidates:
        record = cand.record
        if record.category != category:
            continue
        if not tags <= record.applicability_tags:
            continue
        if require_stage_block and (
            record.arity != 1 or record.channel_rule.kind != "fixed_out"
        ):
            continue
        pool.append(cand)
    if not pool:
        return None
    pool.sort(key=lambda c: (-c.score, c.record.id))
    return pool[0].record.id


class RuleReasoner:
    """Deterministic reasoner backed by the decision table."""

    kind = "rule"

    def __init__(
        self,
        kb: KnowledgeBase,
        thresholds: Thresholds = DEFAULT_THRESHOLDS,
        param_budget: int = DEFAULT_PARAM_BUDGET,
        timestamp: str = DEFAULT_TIMESTAMP,
    ) -> None:
        self.kb = kb
        self.thresholds = thresholds
        self.param_budget = param_budget
        self.timestamp = timestamp

    def propose_queries(self, profile: DatasetProfile, gaps: list[GapNote]) -> list[Query]:
        queries = [
            Query(category_filter="Backbone"),
            Query(category_filter="Neck"),
            Query(category_filter="Head"),
        ]
        for rule in rule_reasoner_decision_table(profile, self.thresholds):
            if rule.query is not None and rule.query not in queries:
                queries.append(rule.query)
        for gap in gaps:
            query = Query(required_tags=frozenset({gap.need}))
            if query not in queries:
                queries.append(query)
        return queries

    def select_modules(
        self, profile: DatasetProfile, candidates: list[RankedCandidate]
    ) -> CandidateSet:
        fired = {r.rule_id: r for r in rule_reasoner_decision_table(profile, self.thresholds)}
        rationale: dict[str, str] = {}

        if not any(c.record.category == "Head" for c in candidates):
            raise NoViableHead("retrieval returned no Head-category candidate")

        backbone = None
        if "P3" in fired:
            backbone = _pick(
                candidates, "Backbone", frozenset({"lightweight"}), require_stage_block=True
            )
            if backbone:
                rationale[backbone] = fired["P3"].description
        if backbone is None:
            backbone = _pick(candidates, "Backbone", require_stage_block=True) or "C2f"
            rationale.setdefault(backbone, "default stage block for a generic corpus")

        neck = None
        if "P2" in fired or "P4" in fired:
            neck = _pick(
                candidates, "Neck", frozenset({"multi-scale-fusion"}), require_stage_block=True
            )
            if neck:
                which = fired.get("P2") or fired["P4"]
                rationale[neck] = which.description
        if neck is None:
            neck = _pick(candidates, "Neck", require_stage_block=True) or "RepC3"
            rationale.setdefault(neck, "standard fusion block for the top-down/bottom-up neck")

        head = None
        if "P2" in fired or "P5" in fired:
            # adaptive (attention-based) fusion first, plain fusion second
            head = (
                _pick(candidates, "Head", frozenset({"multi-scale-fusion", "global-context"}))
                or _pick(candidates, "Head", frozenset({"multi-scale-fusion"}))
                or _pick(candidates, "Head", frozenset({"dense-scene"}))
            )
            if head:
                which = fired.get("P2") or fired["P5"]
                rationale[head] = which.description
        if head is None and "P4" in fired:
            head = _pick(candidates, "Head", frozenset({"small-object"}))
            if head:
                rationale[head] = fired["P4"].description
        if head is None:
            head = _pick(candidates, "Head") or "Detect"
            rationale.setdefault(head, "default decoupled detection head")

        auxiliary: tuple[str, ...] = ()
        if "P1" in fired:
            # the encoder primitive slots directly before the head; other
            # suppression modules would need bespoke wiring
            aux = "TransformerEncoderBlock"
            auxiliary = (aux,)
            rationale[aux] = fired["P1"].description

        if "P6" in fired:
            rationale["_training"] = fired["P6"].description

        return CandidateSet(
            backbone_choice=backbone,
            neck_choices=(neck,),
            head_choice=head,
            auxiliary=auxiliary,
            rationale=rationale,
        )

    def assess_gaps(self, profile: DatasetProfile, candidate_set: CandidateSet) -> list[GapNote]:
        selected_tags: set[str] = set()
        for mid in candidate_set.all_ids():
            if mid in self.kb:
                selected_tags |= self.kb.get(mid).applicability_tags
        gaps = []
        for rule in rule_reasoner_decision_table(profile, self.thresholds):
            if not rule.preferred_tags:
                continue
            if rule.preferred_tags & selected_tags:
                continue
            need = sorted(rule.preferred_tags)[0]
            gaps.append(GapNote(feature=rule.feature, need=need))
        return gaps

    def assemble_blueprint(
        self, profile: DatasetProfile, candidate_set: CandidateSet
    ) -> NadlDocument:
        fired = rule_reasoner_decision_table(profile, self.thresholds)
        notes = [r.description for r in fired]
        notes.extend(
            f"{mid}: {reason}"
            for mid, reason in sorted(candidate_set.rationale.items())
            if mid != "_training"
        )
        if "_training" in candidate_set.rationale:
            notes.append(candidate_set.rationale["_training"])
        return assemble_blueprint(
            profile,
            candidate_set,
            self.kb,
            param_budget=self.param_budget,
            rationale_notes=tuple(notes),
            generator="rule",
            timestamp=self.timestamp,
        )


# --- assembly ------------------------------------------------------------


def _scaled(width: int, scale: float) -> int:
    return max(8, int(round(width * scale / 8)) * 8)


def _check_candidate_set(candidate_set: CandidateSet, kb: KnowledgeBase) -> None:
    backbone = kb.get(candidate_set.backbone_choice)
    if backbone.category != "Backbone":
        raise AssemblyError(f"backbone choice {backbone.id} has category {backbone.category}")
    if backbone.arity != 1 or backbone.channel_rule.kind != "fixed_out":
        raise AssemblyError(f"backbone choice {backbone.id} is not a single-input stage block")
    head = kb.get(candidate_set.head_choice)
    if head.category != "Head":
        raise AssemblyError(f"head choice {head.id} has category {head.category}")
    for mid in candidate_set.neck_choices:
        record = kb.get(mid)
        if record.category != "Neck" and not record.primitive:
            raise AssemblyError(f"neck choice {mid} is neither Neck-category nor a primitive")
        if record.arity != 1 or record.channel_rule.kind != "fixed_out":
            raise AssemblyError(f"neck choice {mid} is not a single-input fusion block")


def assemble_blueprint(
    profile: DatasetProfile,
    candidate_set: CandidateSet,
    kb: KnowledgeBase,
    param_budget: int = DEFAULT_PARAM_BUDGET,
    rationale_notes: tuple[str, ...] = (),
    generator: str = "rule",
    timestamp: str = DEFAULT_TIMESTAMP,
) -> NadlDocument:
    """Build the stem/backbone/neck/head topology around the chosen modules.

    Backbone stages sit at strides 4/8/16/32; the neck fuses the last three
    stages top-down then bottom-up; the head consumes three scale levels.
    Channel widths follow BASE_WIDTHS, halved stepwise until the estimated
    parameter total fits the budget.
    """
    _check_candidate_set(candidate_set, kb)
    head_record = kb.get(candidate_set.head_choice)
    if head_record.arity != VARIADIC and head_record.arity != 3:
        raise AssemblyError(
            f"head {head_record.id} expects {head_record.arity} scale inputs; the neck produces 3"
        )

    last_error: NadlDocument | None = None
    for halvings in range(5):
        scale = 0.5**halvings
        doc = _build(profile, candidate_set, scale, rationale_notes, generator, timestamp)
        report = validator.validate(doc, kb)
        if report.errors:
            details = "; ".join(f"{d.kind}: {d.message}" for d in report.errors)
            raise AssemblyError(f"assembled blueprint failed validation: {details}")
        if report.total_params <= param_budget:
            return doc
        last_error = doc
    assert last_error is not None
    raise AssemblyError(
        f"cannot fit candidate set under a {param_budget}-parameter budget even after halving"
    )


def _build(
    profile: DatasetProfile,
    cset: CandidateSet,
    scale: float,
    rationale_notes: tuple[str, ...],
    generator: str,
    timestamp: str,
) -> NadlDocument:
    w1, w2, w3, w4 = (_scaled(w, scale) for w in BASE_WIDTHS)
    ws = max(8, w1 // 2)
    d1, d2, d3, d4 = STAGE_DEPTHS
    bb = cset.backbone_choice
    nk = cset.neck_choices[0]
    nc = max(1, profile.num_classes)

    layers: list[tuple[list, int, str, list, str]] = [
        (["input"], 1, "Conv", [ws, 3, 2], "backbone"),
        ([0], 1, "Conv", [w1, 3, 2], "backbone"),
        ([1], d1, bb, [w1], "backbone"),
        ([2], 1, "Conv", [w2, 3, 2], "backbone"),
        ([3], d2, bb, [w2], "backbone"),
        ([4], 1, "Conv", [w3, 3, 2], "backbone"),
        ([5], d3, bb, [w3], "backbone"),
        ([6], 1, "Conv", [w4, 3, 2], "backbone"),
        ([7], d4, bb, [w4], "backbone"),
        ([8], 1, "SPPF", [w4, 5], "backbone"),
        # top-down
        ([9], 1, "Upsample", [2, "nearest"], "neck"),
        ([10, 6], 1, "Concat", [], "neck"),
        ([11], NECK_DEPTH, nk, [w3], "neck"),
        ([12], 1, "Upsample", [2, "nearest"], "neck"),
        ([13, 4], 1, "Concat", [], "neck"),
        ([14], NECK_DEPTH, nk, [w2], "neck"),  # P3 out, stride 8
        # bottom-up
        ([15], 1, "Conv", [w2, 3, 2], "neck"),
        ([16, 12], 1, "Concat", [], "neck"),
        ([17], NECK_DEPTH, nk, [w3], "neck"),  # P4 out, stride 16
        ([18], 1, "Conv", [w3, 3, 2], "neck"),
        ([19, 9], 1, "Concat", [], "neck"),
        ([20], NECK_DEPTH, nk, [w4], "neck"),  # P5 out, stride 32
    ]
    head_sources = [15, 18, 21]
    if "TransformerEncoderBlock" in cset.auxiliary:
        layers.append(([21], 1, "TransformerEncoderBlock", [8], "head"))
        head_sources = [15, 18, 22]
    layers.append((head_sources, 1, cset.head_choice, [nc], "head"))

    return NadlDocument(
        schema_version="1.0",
        task="detect",
        input_spec=InputSpec(channels=3, nominal_resolution=640, num_classes=nc),
        metadata=BlueprintMetadata(
            dataset_id=profile.dataset_id,
            rationale_notes=rationale_notes,
            generator=generator,
            created_at=timestamp,
        ),
        layers=tuple(
            LayerSpec(
                index=i,
                sources=tuple(sources),
                repeats=repeats,
                module_kind=kind,
                args=tuple(args),
                role=role,
            )
            for i, (sources, repeats, kind, args, role) in enumerate(layers)
        ),
    )


# --- agent loop ----------------------------------------------------------


def run_agent(
    profile: DatasetProfile,
    kb: KnowledgeBase,
    reasoner: Reasoner,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> tuple[NadlDocument, ArchitectTrace]:
    """Run the retrieve/select/assess loop and assemble the blueprint."""
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    iterations: list[IterationRecord] = []
    gaps: list[GapNote] = []
    candidate_set: CandidateSet | None = None
    stop_reason = "max_iterations"
    for _ in range(max_iterations):
        queries = reasoner.propose_queries(profile, gaps)
        retrieved: list[tuple[str, float]] = []
        candidates: list[RankedCandidate] = []
        for query in queries:
            results = kb.search(query, k=RETRIEVAL_K)
            retrieved.extend((c.record.id, c.score) for c in results)
            candidates.extend(results)
        candidate_set = reasoner.select_modules(profile, candidates)
        gaps = reasoner.assess_gaps(profile, candidate_set)
        iterations.append(
            IterationRecord(
                queries=tuple(queries),
                retrieved=tuple(retrieved),
                selected=candidate_set.all_ids(),
                gap_notes=tuple(gaps),
            )
        )
        if not gaps:
            stop_reason = "gaps_closed"
            break
    assert candidate_set is not None
    doc = reasoner.assemble_blueprint(profile, candidate_set)
    report = validator.validate(doc, kb)
    if report.errors:
        details = "; ".join(f"{d.kind}: {d.message}" for d in report.errors)
        raise AssemblyError(f"final blueprint failed validation: {details}")
    trace = ArchitectTrace(
        iterations=tuple(iterations),
        stop_reason=stop_reason,
        reasoner_kind=reasoner.kind,
    )
    return doc, trace
