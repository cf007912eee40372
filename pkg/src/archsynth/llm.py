"""Provider-agnostic chat-completion client with record/replay.

Replay mode serves recorded responses in order with no network or time
dependence, so the whole synthesis pipeline is testable hermetically.
The LLM-backed reasoner lives here too; it speaks to the model through
schema-constrained structured completions.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable

from . import profiler
from .architect import (
    CandidateSet,
    DEFAULT_PARAM_BUDGET,
    DEFAULT_THRESHOLDS,
    DEFAULT_TIMESTAMP,
    GapNote,
    RuleReasoner,
    Thresholds,
)
from .errors import (
    AuthError,
    BudgetExceeded,
    ReasonerFailure,
    SchemaError,
    SchemaViolation,
    ToolError,
    TransportError,
)
from .kb import CATEGORIES, TAG_VOCABULARY, KnowledgeBase, Query, RankedCandidate
from .nadl import NadlDocument, parse_nadl, serialize_nadl
from .profiler import DatasetProfile

ENV_API_KEY = "ARCHSYNTH_LLM_API_KEY"
ENV_BASE_URL = "ARCHSYNTH_LLM_BASE_URL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL_ID = "gemini-2.5-pro"
MAX_ATTEMPTS = 4  # one initial try plus three retries
DEFAULT_MAX_CALLS = 20


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system_text: str
    user_text: str
    response_schema_id: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if not (0.0 <= self.temperature <= 2.0):
            raise ValueError("temperature must be in [0, 2]")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "system_text": self.system_text,
            "user_text": self.user_text,
            "response_schema_id": self.response_schema_id,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }


@dataclass(frozen=True)
class Transcript:
    request: ChatRequest
    response_text: str | None
    latency_ms: float
    attempt: int
    error: str | None = None


@dataclass(frozen=True)
class StructuredResult:
    value: object
    attempts: int


def _default_transport(base_url: str, api_key: str, request: ChatRequest) -> str:
    import requests

    response = requests.post(
        f"{base_url.rstrip('/')}/chat/completions",
        headers={"Authorization": f"Bearer {api_key}"},
        json={
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        },
        timeout=120,
    )
    response.raise_for_status()
    return response.json()["choices"][0]["message"]["content"]


class ChatClient:
    """Chat client with retries, call budget, transcript log and replay."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        replay_path: str | Path | None = None,
        log_path: str | Path | None = None,
        max_calls: int = DEFAULT_MAX_CALLS,
        transport: Callable[[ChatRequest], str] | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        self.base_url = base_url or os.environ.get(ENV_BASE_URL, DEFAULT_BASE_URL)
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)
        self.log_path = Path(log_path) if log_path is not None else None
        self.max_calls = max_calls
        self.calls_made = 0
        self.transcripts: list[Transcript] = []
        self._transport = transport
        self._sleeper = sleeper
        self._schemas: dict[str, Callable[[str], object]] = {}
        self._replay: list[dict] | None = None
        if replay_path is not None:
            self._replay = [
                json.loads(line)
                for line in Path(replay_path).read_text().splitlines()
                if line.strip()
            ]
            self._replay = [e for e in self._replay if e.get("response_text") is not None]
            self._replay_pos = 0

    # -- schema registry --

    def register_schema(self, schema_id: str, parser: Callable[[str], object]) -> None:
        self._schemas[schema_id] = parser

    # -- transcript log --

    def _log(self, transcript: Transcript) -> None:
        self.transcripts.append(transcript)
        if self.log_path is not None:
            entry = {
                "request": transcript.request.to_dict(),
                "response_text": transcript.response_text,
                "latency_ms": transcript.latency_ms,
                "attempt": transcript.attempt,
                "error": transcript.error,
            }
            with self.log_path.open("a") as handle:
                handle.write(json.dumps(entry) + "\n")

    # -- completion --

    def complete(self, request: ChatRequest) -> str:
        if self._replay is not None:
            if self._replay_pos >= len(self._replay):
                raise TransportError("replay transcript exhausted")
            entry = self._replay[self._replay_pos]
            self._replay_pos += 1
            return entry["response_text"]

        if not self.api_key:
            raise AuthError(f"no API credential; set {ENV_API_KEY}")
        last_error: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            if self.calls_made >= self.max_calls:
                raise BudgetExceeded(f"call budget of {self.max_calls} exhausted")
            self.calls_made += 1
            started = time.monotonic()
            try:
                if self._transport is not None:
                    text = self._transport(request)
                else:
                    text = _default_transport(self.base_url, self.api_key, request)
            except Exception as exc:  # noqa: BLE001 - transport failures retry
                last_error = exc
                self._log(
                    Transcript(
                        request=request,
                        response_text=None,
                        latency_ms=(time.monotonic() - started) * 1000.0,
                        attempt=attempt,
                        error=str(exc),
                    )
                )
                if attempt < MAX_ATTEMPTS:
                    self._sleeper(2.0 ** (attempt - 1))
                continue
            self._log(
                Transcript(
                    request=request,
                    response_text=text,
                    latency_ms=(time.monotonic() - started) * 1000.0,
                    attempt=attempt,
                )
            )
            return text
        raise TransportError(f"transport failed after {MAX_ATTEMPTS} attempts: {last_error}")

    def complete_structured(self, request: ChatRequest) -> StructuredResult:
        """Complete and parse against the registered response schema.

        One repair round-trip (embedding the parse diagnostics) is issued
        on failure before giving up.
        """
        if request.response_schema_id not in self._schemas:
            raise SchemaError(f"unregistered response schema {request.response_schema_id!r}")
        parser = self._schemas[request.response_schema_id]
        text = self.complete(request)
        try:
            return StructuredResult(value=parser(text), attempts=1)
        except ToolError as exc:
            repair = replace(
                request,
                user_text=(
                    f"{request.user_text}\n\n"
                    "Your previous response failed validation:\n"
                    f"{exc}\n\nPrevious response:\n{text}\n\n"
                    "Reply again with corrected JSON only."
                ),
            )
            text = self.complete(repair)
            try:
                return StructuredResult(value=parser(text), attempts=2)
            except ToolError as exc2:
                raise SchemaViolation(
                    f"response failed schema {request.response_schema_id!r} "
                    f"after repair: {exc2}"
                ) from exc2


# --- structured response parsers -----------------------------------------

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n|\n```\s*$")


def strip_code_fences(text: str) -> str:
    return _FENCE_RE.sub("", text.strip())


def _load_json(text: str) -> object:
    try:
        return json.loads(strip_code_fences(text))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"response is not valid JSON: {exc}") from exc


def parse_query_list(text: str) -> list[Query]:
    obj = _load_json(text)
    if not isinstance(obj, dict) or "queries" not in obj:
        raise SchemaError("expected an object with a 'queries' list")
    queries = []
    for i, q in enumerate(obj["queries"]):
        if not isinstance(q, dict):
            raise SchemaError(f"query {i} is not an object")
        tags = frozenset(q.get("required_tags", []))
        bad = tags - TAG_VOCABULARY
        if bad:
            raise SchemaError(f"query {i}: unknown tags {sorted(bad)}")
        category = q.get("category_filter")
        if category is not None and category not in CATEGORIES:
            raise SchemaError(f"query {i}: bad category_filter {category!r}")
        query = Query(
            text_terms=tuple(q.get("text_terms", [])),
            required_tags=tags,
            category_filter=category,
        )
        if query.is_empty():
            raise SchemaError(f"query {i} is empty")
        queries.append(query)
    if not queries:
        raise SchemaError("at least one query is required")
    return queries


def make_candidate_set_parser(kb: KnowledgeBase) -> Callable[[str], CandidateSet]:
    def parse_candidate_set(text: str) -> CandidateSet:
        obj = _load_json(text)
        if not isinstance(obj, dict):
            raise SchemaError("expected a JSON object")
        for key in ("backbone", "necks", "head"):
            if key not in obj:
                raise SchemaError(f"missing key {key!r}")
        ids = [obj["backbone"], *obj["necks"], obj["head"], *obj.get("auxiliary", [])]
        for mid in ids:
            if mid not in kb:
                raise SchemaError(f"unknown module id {mid!r}")
        if kb.get(obj["backbone"]).category != "Backbone":
            raise SchemaError(f"{obj['backbone']} is not a Backbone module")
        if kb.get(obj["head"]).category != "Head":
            raise SchemaError(f"{obj['head']} is not a Head module")
        for mid in obj["necks"]:
            record = kb.get(mid)
            if record.category != "Neck" and not record.primitive:
                raise SchemaError(f"{mid} is neither Neck-category nor a primitive")
        return CandidateSet(
            backbone_choice=obj["backbone"],
            neck_choices=tuple(obj["necks"]),
            head_choice=obj["head"],
            auxiliary=tuple(obj.get("auxiliary", [])),
            rationale={str(k): str(v) for k, v in obj.get("rationale", {}).items()},
        )

    return parse_candidate_set


def parse_nadl_response(text: str) -> NadlDocument:
    return parse_nadl(strip_code_fences(text))


# --- LLM-backed reasoner -------------------------------------------------


def _prompt(name: str) -> str:
    return resources.files("archsynth.prompts").joinpath(f"{name}.md").read_text()


SYSTEM_TEXT = (
    "You are an expert object-detection architecture designer. "
    "You reason from measured dataset properties and reply with JSON only."
)


class LlmReasoner:
    """Reasoner that delegates query proposal, selection and assembly to a
    chat model; gap assessment stays deterministic so the loop terminates.
    """

    kind = "llm"

    def __init__(
        self,
        kb: KnowledgeBase,
        client: ChatClient,
        model_id: str = DEFAULT_MODEL_ID,
        thresholds: Thresholds = DEFAULT_THRESHOLDS,
        param_budget: int = DEFAULT_PARAM_BUDGET,
        timestamp: str = DEFAULT_TIMESTAMP,
    ) -> None:
        self.kb = kb
        self.client = client
        self.model_id = model_id
        self.param_budget = param_budget
        self.timestamp = timestamp
        self._rule = RuleReasoner(
            kb, thresholds=thresholds, param_budget=param_budget, timestamp=timestamp
        )
        client.register_schema("query-list", parse_query_list)
        client.register_schema("candidate-set", make_candidate_set_parser(kb))
        client.register_schema("nadl-document", parse_nadl_response)

    def _request(self, schema_id: str, user_text: str) -> ChatRequest:
        return ChatRequest(
            model_id=self.model_id,
            system_text=SYSTEM_TEXT,
            user_text=user_text,
            response_schema_id=schema_id,
        )

    def propose_queries(self, profile: DatasetProfile, gaps: list[GapNote]) -> list[Query]:
        gap_text = (
            "\n".join(f"- {g.feature}: needs {g.need}" for g in gaps) if gaps else "(none)"
        )
        user = _prompt("propose_queries").format(
            profile_report=profiler.to_markdown(profile),
            gap_notes=gap_text,
            tag_vocabulary=", ".join(sorted(TAG_VOCABULARY)),
        )
        try:
            result = self.client.complete_structured(self._request("query-list", user))
        except SchemaViolation as exc:
            raise ReasonerFailure(f"query proposal failed: {exc}") from exc
        return list(result.value)

    def select_modules(
        self, profile: DatasetProfile, candidates: list[RankedCandidate]
    ) -> CandidateSet:
        seen = set()
        lines = []
        for cand in candidates:
            if cand.record.id in seen:
                continue
            seen.add(cand.record.id)
            record = cand.record
            lines.append(
                f"- {record.id} [{record.category}] tags={sorted(record.applicability_tags)} "
                f"score={cand.score:.1f}: {record.description}"
            )
        user = _prompt("select_modules").format(
            profile_report=profiler.to_markdown(profile),
            candidate_list="\n".join(lines),
        )
        try:
            result = self.client.complete_structured(self._request("candidate-set", user))
        except SchemaViolation as exc:
            raise ReasonerFailure(f"module selection failed: {exc}") from exc
        return result.value

    def assess_gaps(self, profile: DatasetProfile, candidate_set: CandidateSet) -> list[GapNote]:
        return self._rule.assess_gaps(profile, candidate_set)

    def assemble_blueprint(
        self, profile: DatasetProfile, candidate_set: CandidateSet
    ) -> NadlDocument:
        from . import validator

        signatures = "\n".join(
            f"- {r.id}: arity={r.arity}, channel_rule={r.channel_rule.kind}, "
            f"stride_effect={r.stride_effect.kind}"
            for r in self.kb.records()
        )
        cset_text = json.dumps(
            {
                "backbone": candidate_set.backbone_choice,
                "necks": list(candidate_set.neck_choices),
                "head": candidate_set.head_choice,
                "auxiliary": list(candidate_set.auxiliary),
            },
            indent=2,
        )
        user = _prompt("assemble_blueprint").format(
            profile_report=profiler.to_markdown(profile),
            candidate_set=cset_text,
            signatures=signatures,
            param_budget=self.param_budget,
        )
        request = self._request("nadl-document", user)
        try:
            result = self.client.complete_structured(request)
        except SchemaViolation as exc:
            raise ReasonerFailure(f"blueprint assembly failed: {exc}") from exc
        doc: NadlDocument = result.value
        report = validator.validate(doc, self.kb)
        if report.is_clean:
            return doc

        details = "\n".join(f"- layer {d.layer_index}: {d.kind}: {d.message}" for d in report.errors)
        repair = self._request(
            "nadl-document",
            f"{user}\n\nYour previous blueprint failed static analysis:\n{details}\n"
            "Reply with a corrected full blueprint JSON.",
        )
        try:
            result = self.client.complete_structured(repair)
        except SchemaViolation as exc:
            raise ReasonerFailure(f"blueprint repair failed: {exc}") from exc
        doc = result.value
        report = validator.validate(doc, self.kb)
        if not report.is_clean:
            raise ReasonerFailure(
                "blueprint failed static analysis after repair: "
                + "; ".join(d.kind for d in report.errors)
            )
        return doc
