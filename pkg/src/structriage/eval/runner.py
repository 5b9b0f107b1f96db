"""Batch evaluation over a corpus and automated answer scoring."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..doc_model import DocumentIndex, build_index, loads_tree
from ..errors import CorpusMiss, ProtocolError, ScoreParseError, StructriageError
from ..ingest import parse_html_lite, parse_interchange
from ..llm import ChatMessage, FinalAnswer, Provider
from ..orchestrator import QARecord, SessionConfig, Status, Strategy, answer
from ..retrieval import EmbeddingProvider, TokenCounter, count_tokens
from .dataset import QuestionItem

log = logging.getLogger(__name__)

SCORING_INSTRUCTION = (
    "Give a score (1-5) for how well the question was answered. Only provide the numerical "
    "rating. Do not give any explanation for your rating."
)


def load_document(path: str | Path) -> DocumentIndex:
    """Canonical tree JSON, interchange JSON (``schema_version`` present) or HTML."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() in {".html", ".htm"}:
        return build_index(parse_html_lite(raw.decode("utf-8")))
    if b'"schema_version"' in raw[:4096]:
        return build_index(parse_interchange(raw))
    return build_index(loads_tree(raw))


def document_id_for(path: Path) -> str:
    name = path.name
    for suffix in (".interchange.json", ".tree.json", ".json", ".html", ".htm"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def load_corpus(directory: str | Path) -> dict[str, DocumentIndex]:
    corpus = {}
    for path in sorted(Path(directory).iterdir()):
        if path.suffix.lower() not in {".json", ".html", ".htm"}:
            continue
        doc_id = document_id_for(path)
        if doc_id in corpus:
            raise CorpusMiss(f"two corpus files map to document id {doc_id!r}")
        corpus[doc_id] = load_document(path)
    return corpus


def _session_provider(provider, strategy: Strategy, question_id: str) -> Provider:
    bind = getattr(provider, "for_session", None)
    return bind(strategy.value, question_id) if bind else provider


def run_one(
    item: QuestionItem,
    index: DocumentIndex,
    strategy: Strategy,
    provider,
    config: SessionConfig,
    embedder: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
) -> QARecord:
    try:
        record = answer(strategy, index, item.text, _session_provider(provider, strategy, item.id),
                        config, embedder, counter)
    except ProtocolError as exc:
        record = exc.record or QARecord(item.text, strategy, status=Status.PROTOCOL_ERROR, error=str(exc))
    except StructriageError as exc:
        log.warning("question %s / %s failed: %s", item.id, strategy.value, exc)
        record = QARecord(item.text, strategy, status=Status.ERROR, error=f"{type(exc).__name__}: {exc}",
                          page_count=index.page_count)
    record.question_id = item.id
    record.document_id = item.document_id
    record.category = item.category.value
    record.difficulty = item.difficulty.value if item.difficulty else None
    return record


def run_eval(
    corpus: Mapping[str, DocumentIndex],
    dataset: Sequence[QuestionItem],
    strategies: Iterable[Strategy | str],
    provider,
    config: SessionConfig = SessionConfig(),
    embedder: EmbeddingProvider | None = None,
    counter: TokenCounter = count_tokens,
    workers: int = 1,
) -> list[QARecord]:
    """Answer every question with every strategy; failures become flagged records.

    Output is ordered by (question id, strategy order) whatever ``workers`` is.
    """
    strategies = [Strategy(s) for s in strategies]
    missing = sorted({q.document_id for q in dataset} - set(corpus))
    if missing:
        raise CorpusMiss(f"documents not in corpus: {', '.join(missing)}")
    jobs = [(q, s) for q in dataset for s in strategies]

    def work(job):
        q, s = job
        return run_one(q, corpus[q.document_id], s, provider, config, embedder, counter)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(work, jobs))
    else:
        records = [work(j) for j in jobs]
    order = {s: i for i, s in enumerate(strategies)}
    return sorted(records, key=lambda r: (r.question_id, order[r.strategy]))


def scoring_prompt(question: str, answer_text: str) -> str:
    return f"{SCORING_INSTRUCTION}\nQuestion: {question}\nAnswer: {answer_text}"


_SCORE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*$")


def parse_score(text: str) -> float:
    m = _SCORE.match(text)
    if not m:
        raise ScoreParseError(f"not a bare number: {text!r}")
    value = float(m.group(1))
    if not 1.0 <= value <= 5.0:
        raise ScoreParseError(f"score {value} outside 1-5")
    return value


def gpt_score(record: QARecord, provider: Provider) -> float:
    """Ask a model to rate an answer 1-5. Recorded for analysis only."""
    if not record.answer.strip():
        raise ScoreParseError("record has no answer to score")
    prompt = scoring_prompt(record.question, record.answer)
    action = provider.complete([ChatMessage.system(prompt)], []).action
    if not isinstance(action, FinalAnswer):
        raise ScoreParseError("scorer replied with a function call")
    return parse_score(action.text)
