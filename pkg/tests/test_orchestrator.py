from __future__ import annotations

import json
import random

import pytest

from structriage.doc_model import NodeKind, StructureNode, build_index, page_text, to_metadata
from structriage.errors import ProtocolError, UnparseableArguments
from structriage.llm import FinalAnswer, FunctionCall, Role, ScriptedProvider
from structriage.orchestrator import (
    INSTRUCTION,
    QARecord,
    SessionConfig,
    Status,
    Strategy,
    answer,
    answer_chunk_retrieval,
    answer_page_retrieval,
    answer_pdftriage,
    baseline_context,
    baseline_prompts,
    replay_trace,
    triage_system_prompt,
)
from structriage.retrieval import chunk_text

from oracles import bucket_counts, heuristic_tokens, signed_cos2


def test_prompt_goldens(fixtures, minidoc):
    template = (fixtures / "golden" / "pdftriage_system.txt").read_text(encoding="utf-8")
    assert triage_system_prompt("<textual metadata of document>") == template
    assert triage_system_prompt(to_metadata(minidoc).body) == \
        (fixtures / "golden" / "pdftriage_system_minidoc.txt").read_text(encoding="utf-8")
    system, user = baseline_prompts("<retrieved pages/chunks>", "<question>")
    assert f"{system}\n{user}" == (fixtures / "golden" / "baseline_prompt.txt").read_text(encoding="utf-8")


def test_fetch_then_answer(minidoc):
    provider = ScriptedProvider([FunctionCall("fetch_sections", {"section_ids": ["sec-2"]}), FinalAnswer("A")])
    record = answer_pdftriage(minidoc, "How much did revenue grow?", provider)
    assert record.answer == "A" and record.status is Status.OK
    assert len(record.trace) == 1 and record.turns_used == 2
    (event,) = record.trace
    text = event.fragments[0]["text"]
    assert record.retrieved_tokens == heuristic_tokens(text)
    assert "Revenue grew by twelve percent" in text and "| North | 2.1 |" in text


def test_messages_sent_to_model(minidoc):
    provider = ScriptedProvider([FunctionCall("fetch_pages", {"pages": [2]}), FinalAnswer("A")])
    answer_pdftriage(minidoc, "What grew?", provider)
    first, second = provider.calls
    assert first[0].role is Role.SYSTEM
    assert first[0].content == f"{INSTRUCTION}\nDocument: {to_metadata(minidoc).body}"
    assert first[1].role is Role.USER and first[1].content == "What grew?"  # no extra formatting
    assert second[2].function_call == ("fetch_pages", '{"pages": [2]}')
    assert second[3].role is Role.FUNCTION and second[3].function_name == "fetch_pages"
    assert second[3].content == "[page 2]\n" + page_text(minidoc, 2)


def test_error_is_fed_back(minidoc):
    provider = ScriptedProvider([FunctionCall("fetch_pages", {"pages": [99]}),
                                 FunctionCall("fetch_pages", {"pages": [1]}), FinalAnswer("B")])
    record = answer_pdftriage(minidoc, "q", provider)
    assert record.answer == "B" and record.status is Status.OK
    assert [e.error is not None for e in record.trace] == [True, False]
    assert record.trace[0].token_count == 0
    assert provider.calls[1][-1].content.startswith("Error: ")
    assert record.retrieved_tokens == heuristic_tokens(page_text(minidoc, 1))


def test_turn_limit(minidoc):
    provider = ScriptedProvider([FunctionCall("fetch_pages", {"pages": [1]})] * 8)
    record = answer_pdftriage(minidoc, "q", provider, SessionConfig(max_turns=8))
    assert record.turn_limit_exceeded and record.answer == ""
    assert record.turns_used == 8 and len(record.trace) == 8


def test_consecutive_errors_stop_session(minidoc):
    provider = ScriptedProvider([FunctionCall("fetch_table", {"table_ids": ["x"]})] * 5)
    record = answer_pdftriage(minidoc, "q", provider)
    assert record.status is Status.TURN_LIMIT and len(record.trace) == 3


def test_single_answer_takes_one_turn(minidoc):
    record = answer_pdftriage(minidoc, "q", ScriptedProvider([FinalAnswer("fast")]))
    assert (record.answer, record.turns_used, record.trace) == ("fast", 1, [])


def test_unparseable_arguments_twice_is_protocol_error(minidoc):
    bad = UnparseableArguments("retrieve", "{", "bad json")
    record = answer_pdftriage(minidoc, "q", ScriptedProvider([bad, FinalAnswer("ok")]))
    assert record.answer == "ok"
    with pytest.raises(ProtocolError) as err:
        answer_pdftriage(minidoc, "q", ScriptedProvider([bad, bad]))
    assert err.value.record.status is Status.PROTOCOL_ERROR


def _plain_doc(pages: list[str]) -> object:
    children = [StructureNode(f"p-{i}", NodeKind.PARAGRAPH, i, i, text=t) for i, t in enumerate(pages, 1)]
    return build_index(StructureNode("sec-1", NodeKind.SECTION, 1, len(pages), title="S", level=1,
                                     children=children))


def _rand_text(rng, n):
    return " ".join(f"k{rng.randrange(300)}" for _ in range(n))


def test_page_retrieval_argmax():
    rng = random.Random(11)
    pages = [_rand_text(rng, 80) for _ in range(4)]
    idx = _plain_doc(pages)
    scores = [signed_cos2(bucket_counts(pages[1]), bucket_counts(p)) for p in pages]
    assert max(range(4), key=scores.__getitem__) == 1
    record = answer_page_retrieval(idx, pages[1], ScriptedProvider([FinalAnswer("C")]))
    assert record.trace[0].fragments[0]["source_label"] == "page 2"
    assert (record.answer, record.turns_used, len(record.trace)) == ("C", 1, 1)
    assert record.trace[0].kind == "retrieval"


def test_page_budget_below_smallest_page():
    rng = random.Random(2)
    idx = _plain_doc([_rand_text(rng, 50), _rand_text(rng, 60)])
    ctx = baseline_context(Strategy.PAGE, idx, "k1 k2", budget=20)
    assert len(ctx.fragments) == 1 and ctx.token_count <= 20


def test_chunk_baseline():
    rng = random.Random(5)
    text = _rand_text(rng, 250)
    idx = _plain_doc([text])
    chunks = chunk_text(text)
    assert len(chunks) == 3
    shuffled = chunks[1].text.split()
    rng.shuffle(shuffled)
    ctx = baseline_context(Strategy.CHUNK, idx, " ".join(shuffled), budget=3000)
    assert len(ctx.fragments) == 3 and ctx.labels[0] == "chunk 1"
    record = answer_chunk_retrieval(idx, "anything at all", ScriptedProvider([FinalAnswer("D")]))
    assert record.answer == "D"


def test_baseline_prompt_sent(minidoc):
    provider = ScriptedProvider([FinalAnswer("x")])
    record = answer(Strategy.PAGE, minidoc, "revenue by region", provider)
    system, user = provider.calls[0]
    assert system.content.startswith(INSTRUCTION + "\nDocument: ")
    assert user.content == "Question: revenue by region"
    assert record.page_count == 3


def test_baseline_rejects_function_calls(minidoc):
    with pytest.raises(ProtocolError):
        answer(Strategy.CHUNK, minidoc, "q", ScriptedProvider([FunctionCall("fetch_pages", {"pages": [1]})]))


def test_record_round_trip_and_replay(minidoc):
    provider = ScriptedProvider([FunctionCall("retrieve", {"query": "northern region"}),
                                 FunctionCall("fetch_figure", {"figure_ids": ["fig-1"]}), FinalAnswer("E")])
    record = answer_pdftriage(minidoc, "q", provider)
    again = QARecord.from_dict(json.loads(record.to_json()))
    assert again == record
    replayed = replay_trace(record, minidoc)
    assert [c.render() for c in replayed] == [
        "\n\n".join(f"[{f['source_label']}]\n{f['text']}" for f in e.fragments) for e in record.trace]
    bad = record.to_dict() | {"retrieved_tokens": record.retrieved_tokens + 1}
    with pytest.raises(ValueError):
        QARecord.from_dict(bad)
    with pytest.raises(ValueError):
        QARecord.from_dict(record.to_dict() | {"mystery": 1})


def test_config_validation():
    with pytest.raises(ValueError):
        SessionConfig(max_turns=1)
    with pytest.raises(ValueError):
        SessionConfig(retrieve_budget=0)
