from __future__ import annotations

import json

import httpx
import pytest

from structriage.doc_model import to_metadata
from structriage.errors import (
    InvalidMessageSequence,
    MalformedResponse,
    NetworkError,
    ProviderError,
    ScriptExhausted,
    UnparseableArguments,
)
from structriage.llm import (
    LLM_KEY_ENV,
    ChatMessage,
    Completion,
    FinalAnswer,
    FunctionCall,
    RemoteChatProvider,
    ScriptBook,
    ScriptedProvider,
    decode_completion,
    decode_response,
    encode_request,
    encode_response,
    load_script,
)
from structriage.orchestrator import tool_declarations, triage_system_prompt
from structriage.triage import fetch_sections


def golden_messages(index):
    """The message list frozen in fixtures/request1.json."""
    return [
        ChatMessage.system(triage_system_prompt(to_metadata(index).body)),
        ChatMessage.user("How much did revenue grow?"),
        ChatMessage.assistant_call("fetch_sections", '{"section_ids": ["sec-2"]}'),
        ChatMessage.function("fetch_sections", fetch_sections(index, ["sec-2"]).render()),
    ]


def test_request_declares_five_functions():
    body = json.loads(encode_request([ChatMessage.system("s"), ChatMessage.user("u")],
                                     tool_declarations(), "m"))
    assert [f["name"] for f in body["functions"]] == ["fetch_pages", "fetch_sections", "fetch_figure",
                                                      "fetch_table", "retrieve"]
    assert body["messages"] == [{"role": "system", "content": "s"}, {"role": "user", "content": "u"}]


def test_request_without_tools_omits_functions():
    body = json.loads(encode_request([ChatMessage.system("s")], [], "m"))
    assert "functions" not in body


def test_first_message_must_be_system():
    with pytest.raises(InvalidMessageSequence):
        encode_request([ChatMessage.user("hi")], [], "m")
    with pytest.raises(InvalidMessageSequence):
        encode_request([], [], "m")


def test_message_invariants():
    with pytest.raises(InvalidMessageSequence):
        ChatMessage("function", "x")
    with pytest.raises(InvalidMessageSequence):
        ChatMessage("user", "x", function_call=("f", "{}"))


def test_request_golden(fixtures, minidoc):
    encoded = encode_request(golden_messages(minidoc), tool_declarations(), "gpt-35-turbo-0613", temperature=0)
    assert encoded == (fixtures / "request1.json").read_text(encoding="utf-8")


@pytest.mark.parametrize("name", ["response_function_call.json", "response_answer.json"])
def test_response_golden_round_trip(fixtures, name):
    raw = (fixtures / name).read_text(encoding="utf-8")
    assert encode_response(decode_completion(raw)) == raw


def test_decode_function_call(fixtures):
    action = decode_response((fixtures / "response_function_call.json").read_bytes())
    assert action == FunctionCall("fetch_sections", {"section_ids": ["sec-2"]})


def _resp(message, **extra):
    return {"choices": [{"index": 0, "message": message, "finish_reason": "stop"}], **extra}


def test_decode_answer_and_errors():
    assert decode_response(_resp({"role": "assistant", "content": "The answer is 42."})) == \
        FinalAnswer("The answer is 42.")
    with pytest.raises(UnparseableArguments) as err:
        decode_response(_resp({"role": "assistant", "content": None,
                               "function_call": {"name": "retrieve", "arguments": '"not json'}}))
    assert err.value.name == "retrieve" and err.value.raw_arguments == '"not json'
    for bad in ("nope", "[]", {"choices": []}, _resp("text"), _resp({"content": 3}),
                _resp({"function_call": {"arguments": "{}"}})):
        with pytest.raises(MalformedResponse):
            decode_response(bad)


def test_decode_tool_calls_shape():
    msg = {"role": "assistant", "content": None, "tool_calls": [
        {"id": "c1", "type": "function", "function": {"name": "fetch_pages", "arguments": '{"pages": [1]}'}},
        {"id": "c2", "type": "function", "function": {"name": "fetch_pages", "arguments": '{"pages": [2]}'}},
    ]}
    assert decode_response(_resp(msg)) == FunctionCall("fetch_pages", {"pages": [1]})


def test_scripted_queue():
    p = ScriptedProvider([FunctionCall("fetch_pages", {"pages": [1]}), FinalAnswer("x")])
    assert p.complete([], []).action == FunctionCall("fetch_pages", {"pages": [1]})
    assert p.complete([], []).action == FinalAnswer("x")
    with pytest.raises(ScriptExhausted):
        p.complete([], [])
    assert len(p.calls) == 3


def test_scripted_empty_rejected():
    with pytest.raises(ValueError):
        ScriptedProvider([])


def test_scripted_raises_exceptions():
    p = ScriptedProvider([UnparseableArguments("retrieve", "{", "bad")])
    with pytest.raises(UnparseableArguments):
        p.complete([], [])


def test_load_script_forms(tmp_path):
    flat = tmp_path / "a.json"
    flat.write_text(json.dumps([{"function_call": {"name": "fetch_pages", "arguments": '{"pages": [2]}'}},
                                {"answer": "ok"}]))
    p = load_script(flat)
    assert isinstance(p, ScriptedProvider) and p.remaining == 2
    book_path = tmp_path / "b.json"
    book_path.write_text(json.dumps({"q1/page": [{"answer": "special"}], "*": [{"answer": "generic"}]}))
    book = load_script(book_path)
    assert isinstance(book, ScriptBook)
    assert book.for_session("page", "q1").complete([], []).action == FinalAnswer("special")
    assert book.for_session("chunk", "q1").complete([], []).action == FinalAnswer("generic")


class _Server:
    """httpx handler replaying a list of (status, body) replies."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests: list[httpx.Request] = []

    def __call__(self, request):
        self.requests.append(request)
        status, body = self.replies.pop(0)
        if isinstance(body, Exception):
            raise body
        return httpx.Response(status, content=body if isinstance(body, bytes) else json.dumps(body).encode())


def _provider(server, **kw):
    sleeps = []
    p = RemoteChatProvider("http://llm/v1", api_key="secret",
                           client=httpx.Client(transport=httpx.MockTransport(server)),
                           sleep=sleeps.append, **kw)
    return p, sleeps


MSGS = [ChatMessage.system("s"), ChatMessage.user("u")]


def test_remote_success(fixtures):
    server = _Server([(200, (fixtures / "response_answer.json").read_bytes())])
    p, sleeps = _provider(server)
    done = p.complete(MSGS, tool_declarations())
    assert isinstance(done.action, FinalAnswer) and done.attempts == 1
    req = server.requests[0]
    assert str(req.url) == "http://llm/v1/chat/completions"
    assert req.headers["Authorization"] == "Bearer secret"
    body = json.loads(req.content)
    assert body["temperature"] == 0 and body["model"] == "gpt-35-turbo-0613"
    assert done.usage["total_tokens"] == 482


def test_remote_retries_429_then_succeeds(fixtures):
    ok = (fixtures / "response_answer.json").read_bytes()
    server = _Server([(429, b"slow down"), (503, b"busy"), (200, ok)])
    p, sleeps = _provider(server, backoff=0.5)
    done = p.complete(MSGS, [])
    assert done.attempts == 3
    assert sleeps == [0.5, 1.0]


def test_remote_never_retries_4xx():
    server = _Server([(401, b"bad key")])
    p, sleeps = _provider(server)
    with pytest.raises(ProviderError):
        p.complete(MSGS, [])
    assert len(server.requests) == 1 and sleeps == []


def test_remote_gives_up_after_retries():
    server = _Server([(500, b"x")] * 3)
    p, sleeps = _provider(server, max_retries=2)
    with pytest.raises(ProviderError):
        p.complete(MSGS, [])
    assert len(server.requests) == 3


def test_remote_network_error():
    server = _Server([(0, httpx.ConnectError("refused"))] * 2)
    p, _ = _provider(server, max_retries=1)
    with pytest.raises(NetworkError):
        p.complete(MSGS, [])


def test_remote_key_from_env(monkeypatch):
    monkeypatch.setenv(LLM_KEY_ENV, "from-env")
    p = RemoteChatProvider("http://llm", client=httpx.Client())
    assert p.api_key == "from-env"


def test_encode_response_defaults():
    raw = encode_response(Completion(FunctionCall("retrieve", {"query": "q"})))
    obj = json.loads(raw)
    assert obj["choices"][0]["finish_reason"] == "function_call"
    assert decode_response(raw) == FunctionCall("retrieve", {"query": "q"})
