"""Exception hierarchy shared across the toolchain."""

from __future__ import annotations


class ToolError(Exception):
    """Base class for every error raised by this package."""


# --- blueprint parsing ---------------------------------------------------


class BlueprintSyntaxError(ToolError):
    """Input text is not well-formed (e.g. broken JSON)."""


class SchemaError(ToolError):
    """Structurally well-formed input that violates the schema."""


class RefError(ToolError):
    """Illegal source reference (relative reference with no predecessor)."""


# --- profiler ------------------------------------------------------------


class FormatError(ToolError):
    """Malformed annotation line; carries file and line number."""

    def __init__(self, path: str, line_no: int, reason: str) -> None:
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class MissingDims(ToolError):
    """An image id has no known pixel dimensions."""


class EmptyImage(ToolError):
    """Raster with zero pixels."""


class EmptyDataset(ToolError):
    """Profiling requested over zero annotation records."""


# --- knowledge base ------------------------------------------------------


class DuplicateId(ToolError):
    """Two knowledge-base records share an id."""


class EmptyQuery(ToolError):
    """Query with no terms, no tags and no category filter."""


class UnknownModule(ToolError):
    """Module kind not present in the knowledge base."""


# --- architect -----------------------------------------------------------


class ReasonerFailure(ToolError):
    """The LLM reasoner returned unusable output after retries."""


class NoViableHead(ToolError):
    """No Head-category candidate could be retrieved."""


class AssemblyError(ToolError):
    """Candidate set cannot be organized into a legal topology."""


# --- compiler ------------------------------------------------------------


class CompileError(ToolError):
    """Document rejected by the compiler (unvalidated or malformed)."""


# --- llm client ----------------------------------------------------------


class TransportError(ToolError):
    """Network attempts exhausted without a response."""


class AuthError(ToolError):
    """Credential missing or rejected."""


class BudgetExceeded(ToolError):
    """Per-run call budget exhausted."""


class SchemaViolation(ToolError):
    """Model response failed schema validation even after one repair round."""
