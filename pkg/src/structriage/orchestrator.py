"""Answering strategies: structure triage and the page/chunk retrieval baselines."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

from .doc_model import DocumentIndex, document_words, page_text, to_metadata
from .errors import (
    EmptyDocument,
    EmptyQuery,
    ProtocolError,
    TriageError,
    UnparseableArguments,
    ZeroVector,
)
from .llm import (
    DEFAULT_MODEL,
    ChatMessage,
    FinalAnswer,
    FunctionCall,
    Provider,
    ToolDeclaration,
)
from .retrieval import (
    DEFAULT_BUDGET,
    DEFAULT_CHUNK_SIZE,
    EmbeddingProvider,
    HashingEmbedder,
    RetrievedContext,
    TokenCounter,
    VectorIndex,
    chunk_text,
    count_tokens,
    embed,
    top_k_within_budget,
)
from .triage import TOOL_SPECS, DocumentTools, TriageCall

INSTRUCTION = (
    "You are an expert document question answering system. You answer questions by finding "
    "relevant content in the document and answering questions based on that content."
)


def triage_system_prompt(metadata: str) -> str:
    return f"{INSTRUCTION}\nDocument: {metadata}"


def baseline_prompts(context: str, question: str) -> tuple[str, str]:
    """System and user message texts for the retrieval baselines."""
    return f"{INSTRUCTION}\nDocument: {context}", f"Question: {question}"


def tool_declarations() -> list[ToolDeclaration]:
    return [ToolDeclaration(f.value, desc, schema) for f, (desc, schema) in TOOL_SPECS.items()]


class Strategy(str, enum.Enum):
    PDFTRIAGE = "pdftriage"
    PAGE = "page"
    CHUNK = "chunk"


class Status(str, enum.Enum):
    OK = "ok"
    TURN_LIMIT = "turn_limit"
    PROTOCOL_ERROR = "protocol_error"
    ERROR = "error"


@dataclass(frozen=True)
class SessionConfig:
    max_turns: int = 8
    retrieve_budget: int = DEFAULT_BUDGET
    baseline_context_budget: int = DEFAULT_BUDGET
    model_id: str = DEFAULT_MODEL
    chunk_size: int = DEFAULT_CHUNK_SIZE
    table_body: bool = True
    max_consecutive_errors: int = 3
    metadata_include_text: bool = False

    def __post_init__(self):
        if self.max_turns < 2:
            raise ValueError("max_turns must be >= 2")
        if self.retrieve_budget <= 0 or self.baseline_context_budget <= 0:
            raise ValueError("budgets must be positive")


@dataclass
class TraceEvent:
    """One retrieval step: a triage function call or a baseline retrieval."""

    kind: str  # "call" or "retrieval"
    function: str
    arguments: dict[str, Any]
    fragments: list[dict[str, str]] = field(default_factory=list)
    token_count: int = 0
    error: str | None = None

    @classmethod
    def from_context(cls, kind: str, function: str, arguments: Mapping[str, Any],
                     ctx: RetrievedContext) -> TraceEvent:
        return cls(kind, function, dict(arguments),
                   [{"source_label": f.source_label, "text": f.text} for f in ctx.fragments],
                   ctx.token_count)


@dataclass
class QARecord:
    question: str
    strategy: Strategy
    answer: str = ""
    trace: list[TraceEvent] = field(default_factory=list)
    retrieved_tokens: int = 0
    turns_used: int = 0
    status: Status = Status.OK
    error: str | None = None
    question_id: str | None = None
    document_id: str | None = None
    category: str | None = None
    difficulty: str | None = None
    page_count: int | None = None
    metadata_tokens: int | None = None
    gpt_score: float | None = None

    def add(self, event: TraceEvent) -> None:
        self.trace.append(event)
        self.retrieved_tokens += event.token_count

    @property
    def turn_limit_exceeded(self) -> bool:
        return self.status is Status.TURN_LIMIT

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["status"] = self.status.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=False)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> QARecord:
        data = dict(d)
        data["strategy"] = Strategy(data["strategy"])
        data["status"] = Status(data.get("status", "ok"))
        data["trace"] = [TraceEvent(**e) for e in data.get("trace", [])]
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown QARecord fields: {sorted(unknown)}")
        record = cls(**data)
        if record.retrieved_tokens != sum(e.token_count for e in record.trace):
            raise ValueError("retrieved_tokens disagrees with the trace")
        return record


def _error_text(exc: Exception) -> str:
    return f"Error: {exc}"


def answer_pdftriage(
    index: DocumentIndex,
    question: str,
    provider: Provider,
    config: SessionConfig = SessionConfig(),
    tools: DocumentTools | None = None,
    embedder: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
) -> QARecord:
    """Metadata in the system prompt, then one function call per turn until an answer."""
    if not question.strip():
        raise EmptyQuery("question is empty")
    tools = tools or DocumentTools(index, embedder, counter, config.table_body, config.chunk_size)
    metadata = to_metadata(index, config.metadata_include_text, counter)
    declarations = tool_declarations()
    messages = [ChatMessage.system(triage_system_prompt(metadata.body)), ChatMessage.user(question)]
    record = QARecord(question, Strategy.PDFTRIAGE, page_count=index.page_count,
                      metadata_tokens=metadata.token_count)
    consecutive_errors = 0
    bad_arguments = 0

    while record.turns_used < config.max_turns:
        record.turns_used += 1
        try:
            action = provider.complete(messages, declarations).action
        except UnparseableArguments as exc:
            bad_arguments += 1
            if bad_arguments >= 2:
                record.status = Status.PROTOCOL_ERROR
                record.error = str(exc)
                raise ProtocolError(f"model sent unparseable arguments twice: {exc}", record) from exc
            messages.append(ChatMessage.assistant_call(exc.name, exc.raw_arguments))
            messages.append(ChatMessage.function(exc.name, _error_text(exc)))
            continue
        bad_arguments = 0

        if isinstance(action, FinalAnswer):
            record.answer = action.text
            return record

        raw_args = json.dumps(dict(action.arguments), ensure_ascii=False)
        messages.append(ChatMessage.assistant_call(action.name, raw_args))
        try:
            call = TriageCall.parse(action.name, action.arguments)
            ctx = tools.execute(call, config.retrieve_budget)
        except TriageError as exc:
            record.add(TraceEvent("call", action.name, dict(action.arguments), error=str(exc)))
            messages.append(ChatMessage.function(action.name, _error_text(exc)))
            consecutive_errors += 1
            if consecutive_errors >= config.max_consecutive_errors:
                record.status = Status.TURN_LIMIT
                record.error = f"{consecutive_errors} consecutive function errors"
                return record
            continue
        consecutive_errors = 0
        record.add(TraceEvent.from_context("call", call.function.value, call.arguments, ctx))
        messages.append(ChatMessage.function(call.function.value, ctx.render()))

    record.status = Status.TURN_LIMIT
    record.error = f"no answer within {config.max_turns} turns"
    return record


def baseline_context(
    strategy: Strategy | str,
    index: DocumentIndex,
    query: str,
    budget: int,
    embedder: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    table_body: bool = True,
) -> RetrievedContext:
    """Pages or fixed-size chunks most similar to ``query``, filled up to ``budget`` tokens."""
    strategy = Strategy(strategy)
    if not query.strip():
        raise EmptyQuery("question is empty")
    if strategy is Strategy.PAGE:
        texts = {}
        for p in range(1, index.page_count + 1):
            text = page_text(index, p, table_body)
            if text.split():
                texts[p] = text
        label = "page {}".format
    elif strategy is Strategy.CHUNK:
        words, pages = document_words(index)
        texts = {c.id: c.text for c in chunk_text(" ".join(words), chunk_size, pages)}
        label = "chunk {}".format
    else:
        raise ValueError(f"{strategy.value} is not a retrieval baseline")
    if not texts:
        raise EmptyDocument("document has no text to index")
    embedder = embedder or HashingEmbedder()
    vectors = VectorIndex.build(embedder, texts)
    (qvec,) = embed(embedder, [query])
    try:
        return top_k_within_budget(qvec, vectors, texts, budget, counter, label)
    except ZeroVector:
        raise EmptyQuery(f"question {query!r} has no indexable words") from None


def _answer_baseline(
    strategy: Strategy,
    index: DocumentIndex,
    question: str,
    provider: Provider,
    config: SessionConfig,
    embedder: EmbeddingProvider | None,
    counter: TokenCounter,
) -> QARecord:
    budget = config.baseline_context_budget
    ctx = baseline_context(strategy, index, question, budget, embedder, counter,
                           config.chunk_size, config.table_body)
    record = QARecord(question, strategy, page_count=index.page_count)
    record.add(TraceEvent.from_context("retrieval", strategy.value,
                                       {"query": question, "budget": budget}, ctx))
    system, user = baseline_prompts(ctx.plain_text(), question)
    record.turns_used = 1
    try:
        action = provider.complete([ChatMessage.system(system), ChatMessage.user(user)], []).action
    except UnparseableArguments as exc:
        action = FunctionCall(exc.name, {})
    if isinstance(action, FunctionCall):
        record.status = Status.PROTOCOL_ERROR
        record.error = f"model called {action.name!r} but no functions were declared"
        raise ProtocolError(record.error, record)
    record.answer = action.text
    return record


def answer_page_retrieval(
    index: DocumentIndex,
    question: str,
    provider: Provider,
    config: SessionConfig = SessionConfig(),
    embedder: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
) -> QARecord:
    return _answer_baseline(Strategy.PAGE, index, question, provider, config, embedder, counter)


def answer_chunk_retrieval(
    index: DocumentIndex,
    question: str,
    provider: Provider,
    config: SessionConfig = SessionConfig(),
    embedder: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
) -> QARecord:
    return _answer_baseline(Strategy.CHUNK, index, question, provider, config, embedder, counter)


def answer(
    strategy: Strategy | str,
    index: DocumentIndex,
    question: str,
    provider: Provider,
    config: SessionConfig = SessionConfig(),
    embedder: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
) -> QARecord:
    strategy = Strategy(strategy)
    if strategy is Strategy.PDFTRIAGE:
        return answer_pdftriage(index, question, provider, config, embedder=embedder, counter=counter)
    if strategy is Strategy.PAGE:
        return answer_page_retrieval(index, question, provider, config, embedder, counter)
    return answer_chunk_retrieval(index, question, provider, config, embedder, counter)


def replay_trace(record: QARecord, index: DocumentIndex, config: SessionConfig = SessionConfig(),
                 embedder: EmbeddingProvider | None = None,
                 counter: TokenCounter = count_tokens) -> list[RetrievedContext | None]:
    """Re-run every retrieval step of a record against ``index``; failed calls give ``None``."""
    tools = DocumentTools(index, embedder, counter, config.table_body, config.chunk_size)
    out: list[RetrievedContext | None] = []
    for event in record.trace:
        if event.error is not None:
            out.append(None)
        elif event.kind == "call":
            out.append(tools.execute(TriageCall.parse(event.function, event.arguments), config.retrieve_budget))
        else:
            out.append(baseline_context(event.function, index, event.arguments["query"],
                                        event.arguments["budget"], embedder, counter,
                                        config.chunk_size, config.table_body))
    return out
