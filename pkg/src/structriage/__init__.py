"""Structure-aware question answering over documents.

An LLM is shown a JSON skeleton of the document and fetches pages,
sections, tables, figures or retrieved chunks through function calls
before answering. Page- and chunk-retrieval baselines and an evaluation
harness are included.
"""

from .doc_model import (
    DocumentIndex,
    MetadataPrompt,
    NodeKind,
    StructureNode,
    build_index,
    page_text,
    to_metadata,
)
from .ingest import emit_interchange, fetch_extraction, parse_html_lite, parse_interchange
from .llm import ChatMessage, FinalAnswer, FunctionCall, RemoteChatProvider, ScriptedProvider
from .orchestrator import (
    QARecord,
    SessionConfig,
    Strategy,
    answer,
    answer_chunk_retrieval,
    answer_page_retrieval,
    answer_pdftriage,
)
from .retrieval import HashingEmbedder, RetrievedContext, chunk_text, cosine_similarity, count_tokens
from .triage import DocumentTools, fetch_figure, fetch_pages, fetch_sections, fetch_table, retrieve

__version__ = "0.1.0"

__all__ = [
    "DocumentIndex", "MetadataPrompt", "NodeKind", "StructureNode", "build_index", "page_text",
    "to_metadata", "emit_interchange", "fetch_extraction", "parse_html_lite", "parse_interchange",
    "ChatMessage", "FinalAnswer", "FunctionCall", "RemoteChatProvider", "ScriptedProvider",
    "QARecord", "SessionConfig", "Strategy", "answer", "answer_chunk_retrieval",
    "answer_page_retrieval", "answer_pdftriage", "HashingEmbedder", "RetrievedContext",
    "chunk_text", "cosine_similarity", "count_tokens", "DocumentTools", "fetch_figure",
    "fetch_pages", "fetch_sections", "fetch_table", "retrieve",
]
