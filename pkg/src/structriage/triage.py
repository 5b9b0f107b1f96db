"""The five model-callable document functions and their tool declarations."""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import jsonschema

from .doc_model import DocumentIndex, document_words, node_content, page_text, section_text
from .errors import (
    EmptyArgument,
    EmptyDocument,
    EmptyQuery,
    InvalidArguments,
    PageOutOfRange,
    UnknownFigure,
    UnknownFunction,
    UnknownSection,
    UnknownTable,
    ZeroVector,
)
from .retrieval import (
    DEFAULT_BUDGET,
    DEFAULT_CHUNK_SIZE,
    EmbeddingProvider,
    Fragment,
    HashingEmbedder,
    RetrievedContext,
    TokenCounter,
    VectorIndex,
    chunk_text,
    count_tokens,
    embed,
    top_k_within_budget,
)

__all__ = [
    "Fragment", "RetrievedContext", "TriageFunction", "TriageCall", "TOOL_SPECS",
    "DocumentTools", "fetch_pages", "fetch_sections", "fetch_figure", "fetch_table",
    "retrieve",
]


class TriageFunction(str, enum.Enum):
    FETCH_PAGES = "fetch_pages"
    FETCH_SECTIONS = "fetch_sections"
    FETCH_FIGURE = "fetch_figure"
    FETCH_TABLE = "fetch_table"
    RETRIEVE = "retrieve"


def _list_param(item_type: str, description: str) -> dict[str, Any]:
    return {"type": "array", "items": {"type": item_type}, "description": description}


# name -> (description, JSON schema of parameters)
TOOL_SPECS: dict[TriageFunction, tuple[str, dict[str, Any]]] = {
    TriageFunction.FETCH_PAGES: (
        "Get the text contained in the pages listed.",
        {"type": "object",
         "properties": {"pages": _list_param("integer", "1-based page numbers to fetch.")},
         "required": ["pages"], "additionalProperties": False},
    ),
    TriageFunction.FETCH_SECTIONS: (
        "Get the text contained in the section listed.",
        {"type": "object",
         "properties": {"section_ids": _list_param("string", "Section ids from the document metadata.")},
         "required": ["section_ids"], "additionalProperties": False},
    ),
    TriageFunction.FETCH_FIGURE: (
        "Get the text contained in the figure caption listed.",
        {"type": "object",
         "properties": {"figure_ids": _list_param("string", "Figure ids from the document metadata.")},
         "required": ["figure_ids"], "additionalProperties": False},
    ),
    TriageFunction.FETCH_TABLE: (
        "Get the text contained in the table caption listed.",
        {"type": "object",
         "properties": {"table_ids": _list_param("string", "Table ids from the document metadata.")},
         "required": ["table_ids"], "additionalProperties": False},
    ),
    TriageFunction.RETRIEVE: (
        "Issue a natural language query over the document, and fetch relevant chunks.",
        {"type": "object",
         "properties": {"query": {"type": "string", "description": "Natural language search query."}},
         "required": ["query"], "additionalProperties": False},
    ),
}

_VALIDATORS = {f: jsonschema.Draft7Validator(schema) for f, (_, schema) in TOOL_SPECS.items()}


@dataclass(frozen=True)
class TriageCall:
    function: TriageFunction
    arguments: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, name: str, arguments: Mapping[str, Any]) -> TriageCall:
        try:
            function = TriageFunction(name)
        except ValueError:
            raise UnknownFunction(f"no function named {name!r}") from None
        errors = sorted(_VALIDATORS[function].iter_errors(arguments), key=lambda e: list(e.path))
        if errors:
            raise InvalidArguments(f"{name}: {errors[0].message}")
        return cls(function, dict(arguments))


def _dedup(items: Iterable) -> list:
    return list(dict.fromkeys(items))


# --- the five functions ---------------------------------------------------

def fetch_pages(index: DocumentIndex, pages: list[int], counter: TokenCounter = count_tokens,
                table_body: bool = True) -> RetrievedContext:
    if not pages:
        raise EmptyArgument("fetch_pages needs at least one page")
    wanted = sorted(set(pages))
    for p in wanted:
        if not 1 <= p <= index.page_count:
            raise PageOutOfRange(p, index.page_count)
    return RetrievedContext.of(
        [Fragment(f"page {p}", page_text(index, p, table_body)) for p in wanted], counter)


def fetch_sections(index: DocumentIndex, section_ids: list[str], counter: TokenCounter = count_tokens,
                   table_body: bool = True) -> RetrievedContext:
    if not section_ids:
        raise EmptyArgument("fetch_sections needs at least one section id")
    fragments = []
    for sid in _dedup(section_ids):
        node = index.by_section.get(sid)
        if node is None:
            raise UnknownSection(sid)
        fragments.append(Fragment(f"section {sid}", section_text(node, table_body)))
    return RetrievedContext.of(fragments, counter)


def fetch_figure(index: DocumentIndex, figure_ids: list[str],
                 counter: TokenCounter = count_tokens) -> RetrievedContext:
    if not figure_ids:
        raise EmptyArgument("fetch_figure needs at least one figure id")
    figures = index.figure_ids
    fragments = []
    for fid in _dedup(figure_ids):
        if fid not in figures:
            raise UnknownFigure(fid)
        fragments.append(Fragment(f"figure {fid}", figures[fid].text))
    return RetrievedContext.of(fragments, counter)


def fetch_table(index: DocumentIndex, table_ids: list[str], counter: TokenCounter = count_tokens,
                table_body: bool = True) -> RetrievedContext:
    """Caption plus markdown rows; caption only when ``table_body`` is false."""
    if not table_ids:
        raise EmptyArgument("fetch_table needs at least one table id")
    tables = index.table_ids
    fragments = []
    for tid in _dedup(table_ids):
        if tid not in tables:
            raise UnknownTable(tid)
        fragments.append(Fragment(f"table {tid}", node_content(tables[tid], table_body)))
    return RetrievedContext.of(fragments, counter)


@dataclass(frozen=True)
class ChunkIndex:
    texts: Mapping[int, str]
    vectors: VectorIndex


def build_chunk_index(index: DocumentIndex, provider: EmbeddingProvider,
                      chunk_size: int = DEFAULT_CHUNK_SIZE) -> ChunkIndex:
    words, pages = document_words(index)
    chunks = chunk_text(" ".join(words), chunk_size, pages)
    if not chunks:
        raise EmptyDocument("document has no text to retrieve from")
    texts = {c.id: c.text for c in chunks}
    return ChunkIndex(texts, VectorIndex.build(provider, texts))


def retrieve(
    index: DocumentIndex,
    query: str,
    budget: int = DEFAULT_BUDGET,
    provider: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
    chunk_index: ChunkIndex | None = None,
) -> RetrievedContext:
    if not query or not query.strip():
        raise EmptyQuery("retrieve needs a non-empty query")
    provider = provider or HashingEmbedder()
    chunk_index = chunk_index or build_chunk_index(index, provider)
    (qvec,) = embed(provider, [query])
    try:
        return top_k_within_budget(qvec, chunk_index.vectors, chunk_index.texts, budget, counter)
    except ZeroVector:
        raise EmptyQuery(f"query {query!r} has no indexable words") from None


# --- bound toolset --------------------------------------------------------

class DocumentTools:
    """The five functions bound to one document, with a lazily built chunk index."""

    def __init__(
        self,
        index: DocumentIndex,
        provider: EmbeddingProvider | None = None,
        counter: TokenCounter = count_tokens,
        table_body: bool = True,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
    ):
        self.index = index
        self.provider = provider or HashingEmbedder()
        self.counter = counter
        self.table_body = table_body
        self.chunk_size = chunk_size
        self._chunks: ChunkIndex | None = None
        self._lock = threading.Lock()

    @property
    def chunk_index(self) -> ChunkIndex:
        with self._lock:
            if self._chunks is None:
                self._chunks = build_chunk_index(self.index, self.provider, self.chunk_size)
            return self._chunks

    def execute(self, call: TriageCall, retrieve_budget: int = DEFAULT_BUDGET) -> RetrievedContext:
        args = call.arguments
        f = call.function
        if f is TriageFunction.FETCH_PAGES:
            return fetch_pages(self.index, args["pages"], self.counter, self.table_body)
        if f is TriageFunction.FETCH_SECTIONS:
            return fetch_sections(self.index, args["section_ids"], self.counter, self.table_body)
        if f is TriageFunction.FETCH_FIGURE:
            return fetch_figure(self.index, args["figure_ids"], self.counter)
        if f is TriageFunction.FETCH_TABLE:
            return fetch_table(self.index, args["table_ids"], self.counter, self.table_body)
        if not args["query"].strip():
            raise EmptyQuery("retrieve needs a non-empty query")
        return retrieve(self.index, args["query"], retrieve_budget, self.provider,
                        self.counter, self.chunk_index)
