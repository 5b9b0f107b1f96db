"""Exception hierarchy shared across the package."""

from __future__ import annotations


class StructriageError(Exception):
    """Base class for every error raised by this package."""


# --- document model -------------------------------------------------------

class DocumentError(StructriageError):
    pass


class DuplicateId(DocumentError):
    def __init__(self, node_id: str):
        super().__init__(f"duplicate node id {node_id!r}")
        self.node_id = node_id


class InvalidPageRange(DocumentError):
    pass


class InvalidNode(DocumentError):
    pass


# --- ingestion ------------------------------------------------------------

class IngestError(StructriageError):
    pass


class MalformedJson(IngestError):
    pass


class UnknownSchemaVersion(IngestError):
    pass


class InvalidPath(IngestError):
    pass


class MalformedHtml(IngestError):
    pass


class ValidationError(IngestError):
    pass


class NetworkError(StructriageError):
    """Transport-level failure talking to a remote service."""


class ServiceError(StructriageError):
    def __init__(self, status: int, message: str):
        super().__init__(f"service returned HTTP {status}: {message}")
        self.status = status
        self.message = message


# --- triage functions -----------------------------------------------------
# These are reported back to the model as function results, never fatal.

class TriageError(StructriageError):
    pass


class PageOutOfRange(TriageError):
    def __init__(self, page: int, page_count: int | None = None):
        detail = f" (document has {page_count} pages)" if page_count else ""
        super().__init__(f"page {page} is out of range{detail}")
        self.page = page


class EmptyArgument(TriageError):
    pass


class UnknownSection(TriageError):
    def __init__(self, section_id: str):
        super().__init__(f"unknown section id {section_id!r}")
        self.section_id = section_id


class UnknownFigure(TriageError):
    def __init__(self, figure_id: str):
        super().__init__(f"unknown figure id {figure_id!r}")
        self.figure_id = figure_id


class UnknownTable(TriageError):
    def __init__(self, table_id: str):
        super().__init__(f"unknown table id {table_id!r}")
        self.table_id = table_id


class EmptyQuery(TriageError):
    pass


class EmptyDocument(TriageError):
    pass


class UnknownFunction(TriageError):
    pass


class InvalidArguments(TriageError):
    pass


# --- retrieval ------------------------------------------------------------

class RetrievalError(StructriageError):
    pass


class DimensionMismatch(RetrievalError):
    pass


class ZeroVector(RetrievalError):
    pass


class EmptyIndex(RetrievalError):
    pass


class ProviderError(StructriageError):
    """A model or embedding provider failed or returned something unusable."""


# --- llm protocol ---------------------------------------------------------

class LLMError(StructriageError):
    pass


class InvalidMessageSequence(LLMError):
    pass


class MalformedResponse(LLMError):
    pass


class UnparseableArguments(LLMError):
    def __init__(self, name: str, raw_arguments: str, reason: str = ""):
        msg = f"arguments for {name!r} are not a JSON object"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.name = name
        self.raw_arguments = raw_arguments


class ScriptExhausted(LLMError):
    pass


class ProtocolError(LLMError):
    """The model broke the conversation protocol; carries the partial record."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


# --- evaluation -----------------------------------------------------------

class EvalError(StructriageError):
    pass


class SchemaError(EvalError):
    """A bad line in an input file; loaders fill in ``source`` with the path."""

    def __init__(self, line: int, field: str, message: str = "", source: str | None = None):
        text = f"line {line}: field {field!r}"
        if message:
            text += f": {message}"
        super().__init__(text)
        self.line = line
        self.field = field
        self.source = source


class CorpusMiss(EvalError):
    pass


class ScoreParseError(EvalError):
    pass


class StatisticsError(EvalError):
    pass


class LengthMismatch(StatisticsError):
    pass


class ConstantSeries(StatisticsError):
    pass


class DegenerateAgreement(StatisticsError):
    pass


class EmptyText(StatisticsError):
    pass
