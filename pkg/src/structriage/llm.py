"""Chat messages, the chat-completions wire codec, and model providers.

The wire shape is the OpenAI-compatible chat completions API with the
``functions`` / ``function_call`` flavour of function calling: one call
per assistant turn. See ``docs/wire.md``.
"""

from __future__ import annotations

import collections
import enum
import json
import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence, Union

import httpx

from .errors import (
    InvalidMessageSequence,
    MalformedResponse,
    NetworkError,
    ProviderError,
    ScriptExhausted,
    UnparseableArguments,
)

DEFAULT_MODEL = "gpt-35-turbo-0613"
LLM_KEY_ENV = "STRUCTRIAGE_LLM_KEY"


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"
    FUNCTION = "function"


@dataclass(frozen=True)
class FunctionCall:
    name: str
    arguments: Mapping[str, Any]


@dataclass(frozen=True)
class FinalAnswer:
    text: str


AssistantAction = Union[FunctionCall, FinalAnswer]


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str = ""
    function_name: str | None = None
    # (name, raw JSON arguments) on assistant turns that call a function
    function_call: tuple[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if self.role is Role.FUNCTION and not self.function_name:
            raise InvalidMessageSequence("function messages need function_name")
        if self.function_call is not None:
            if self.role is not Role.ASSISTANT:
                raise InvalidMessageSequence("only assistant messages carry function_call")
            if self.content:
                raise InvalidMessageSequence("assistant function_call messages must have empty content")

    @classmethod
    def system(cls, content: str) -> ChatMessage:
        return cls(Role.SYSTEM, content)

    @classmethod
    def user(cls, content: str) -> ChatMessage:
        return cls(Role.USER, content)

    @classmethod
    def function(cls, name: str, content: str) -> ChatMessage:
        return cls(Role.FUNCTION, content, function_name=name)

    @classmethod
    def assistant_call(cls, name: str, raw_arguments: str) -> ChatMessage:
        return cls(Role.ASSISTANT, "", function_call=(name, raw_arguments))

    def to_wire(self) -> dict[str, Any]:
        if self.function_call is not None:
            name, args = self.function_call
            return {"role": "assistant", "content": None,
                    "function_call": {"name": name, "arguments": args}}
        msg: dict[str, Any] = {"role": self.role.value}
        if self.role is Role.FUNCTION:
            msg["name"] = self.function_name
        msg["content"] = self.content
        return msg


@dataclass(frozen=True)
class ToolDeclaration:
    name: str
    description: str
    parameters: Mapping[str, Any]

    def to_wire(self) -> dict[str, Any]:
        return {"name": self.name, "description": self.description, "parameters": self.parameters}


def dumps_wire(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def encode_request(
    messages: Sequence[ChatMessage],
    tools: Sequence[ToolDeclaration],
    model_id: str,
    temperature: float | None = None,
    max_tokens: int | None = None,
) -> str:
    if not messages:
        raise InvalidMessageSequence("no messages")
    if messages[0].role is not Role.SYSTEM:
        raise InvalidMessageSequence(f"first message must be system, got {messages[0].role.value}")
    names = [t.name for t in tools]
    if len(set(names)) != len(names):
        raise InvalidMessageSequence("tool names must be unique within a request")
    payload: dict[str, Any] = {"model": model_id, "messages": [m.to_wire() for m in messages]}
    if tools:
        payload["functions"] = [t.to_wire() for t in tools]
    if temperature is not None:
        payload["temperature"] = temperature
    if max_tokens is not None:
        payload["max_tokens"] = max_tokens
    return dumps_wire(payload)


@dataclass(frozen=True)
class Completion:
    """One decoded model reply plus the metadata that came with it."""

    action: AssistantAction
    response_id: str | None = None
    model: str | None = None
    created: int | None = None
    finish_reason: str | None = None
    usage: Mapping[str, int] | None = None
    attempts: int = 1


def _parse_arguments(name: str, raw: Any) -> Mapping[str, Any]:
    if isinstance(raw, Mapping):
        return dict(raw)
    if not isinstance(raw, str):
        raise UnparseableArguments(name, repr(raw), "arguments must be a JSON string")
    try:
        args = json.loads(raw) if raw.strip() else {}
    except json.JSONDecodeError as exc:
        raise UnparseableArguments(name, raw, str(exc)) from None
    if not isinstance(args, dict):
        raise UnparseableArguments(name, raw, f"decoded to {type(args).__name__}")
    return args


def decode_completion(raw: str | bytes | Mapping[str, Any]) -> Completion:
    if isinstance(raw, (str, bytes)):
        try:
            obj = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedResponse(f"response is not JSON: {exc}") from None
    else:
        obj = raw
    try:
        choice = obj["choices"][0]
        message = choice["message"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponse("response has no choices[0].message") from None
    if not isinstance(message, Mapping):
        raise MalformedResponse("choices[0].message is not an object")

    call = message.get("function_call")
    if call is None and message.get("tool_calls"):
        tool_calls = message["tool_calls"]
        if not isinstance(tool_calls, list) or not isinstance(tool_calls[0], Mapping):
            raise MalformedResponse("tool_calls is not a list of objects")
        call = tool_calls[0].get("function")
    if call is not None:
        if not isinstance(call, Mapping) or not isinstance(call.get("name"), str) or not call["name"]:
            raise MalformedResponse("function_call lacks a name")
        action: AssistantAction = FunctionCall(call["name"], _parse_arguments(call["name"], call.get("arguments", "")))
    else:
        content = message.get("content")
        if content is None:
            content = ""
        if not isinstance(content, str):
            raise MalformedResponse("message content is not a string")
        action = FinalAnswer(content)

    usage = obj.get("usage")
    return Completion(
        action=action,
        response_id=obj.get("id"),
        model=obj.get("model"),
        created=obj.get("created"),
        finish_reason=choice.get("finish_reason"),
        usage=dict(usage) if isinstance(usage, Mapping) else None,
    )


def decode_response(raw: str | bytes | Mapping[str, Any]) -> AssistantAction:
    return decode_completion(raw).action


def encode_response(completion: Completion) -> str:
    """Render a completion in the server's wire shape (used by stubs and fixtures)."""
    action = completion.action
    if isinstance(action, FunctionCall):
        message = {"role": "assistant", "content": None,
                   "function_call": {"name": action.name,
                                     "arguments": json.dumps(dict(action.arguments), ensure_ascii=False)}}
        finish = completion.finish_reason or "function_call"
    else:
        message = {"role": "assistant", "content": action.text}
        finish = completion.finish_reason or "stop"
    obj: dict[str, Any] = {}
    if completion.response_id is not None:
        obj["id"] = completion.response_id
    obj["object"] = "chat.completion"
    if completion.created is not None:
        obj["created"] = completion.created
    if completion.model is not None:
        obj["model"] = completion.model
    obj["choices"] = [{"index": 0, "message": message, "finish_reason": finish}]
    if completion.usage is not None:
        obj["usage"] = dict(completion.usage)
    return dumps_wire(obj)


# --- providers ------------------------------------------------------------

class Provider(Protocol):
    def complete(self, messages: Sequence[ChatMessage], tools: Sequence[ToolDeclaration]) -> Completion: ...


ScriptEntry = Union[FunctionCall, FinalAnswer, Exception]


class ScriptedProvider:
    """Replays a fixed list of assistant actions, one per completion call.

    An ``Exception`` in the script is raised instead of returned, which is
    how tests drive error paths such as unparseable arguments.
    """

    def __init__(self, script: Sequence[ScriptEntry]):
        if not script:
            raise ValueError("script must contain at least one action")
        self._queue = collections.deque(script)
        self._lock = threading.Lock()
        self.calls: list[list[ChatMessage]] = []

    def complete(self, messages, tools) -> Completion:
        with self._lock:
            self.calls.append(list(messages))
            if not self._queue:
                raise ScriptExhausted(f"script exhausted after {len(self.calls) - 1} calls")
            entry = self._queue.popleft()
        if isinstance(entry, Exception):
            raise entry
        return Completion(entry)

    @property
    def remaining(self) -> int:
        return len(self._queue)


def script_entry_from_json(item: Mapping[str, Any]) -> ScriptEntry:
    """``{"answer": text}`` or ``{"function_call": {"name": ..., "arguments": obj-or-str}}``."""
    if "answer" in item:
        return FinalAnswer(str(item["answer"]))
    call = item.get("function_call")
    if not isinstance(call, Mapping) or "name" not in call:
        raise ValueError(f"bad script entry: {item!r}")
    try:
        return FunctionCall(call["name"], _parse_arguments(call["name"], call.get("arguments", {})))
    except UnparseableArguments as exc:
        return exc


class ScriptBook:
    """Per-session scripts keyed by ``"<question_id>/<strategy>"``, ``"<strategy>"`` or ``"*"``."""

    def __init__(self, scripts: Mapping[str, Sequence[ScriptEntry]]):
        if not scripts:
            raise ValueError("script book is empty")
        self.scripts = dict(scripts)

    def for_session(self, strategy: str, question_id: str | None = None) -> ScriptedProvider:
        for key in (f"{question_id}/{strategy}", strategy, "*"):
            if key in self.scripts:
                return ScriptedProvider(self.scripts[key])
        raise ScriptExhausted(f"no script for strategy {strategy!r} (question {question_id!r})")

    def complete(self, messages, tools) -> Completion:
        raise ScriptExhausted("a script book must be bound to a session with for_session()")


def load_script(path: str | Path) -> ScriptedProvider | ScriptBook:
    """A JSON list gives a :class:`ScriptedProvider`; a JSON object a :class:`ScriptBook`."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        return ScriptedProvider([script_entry_from_json(i) for i in data])
    if isinstance(data, dict):
        return ScriptBook({k: [script_entry_from_json(i) for i in v] for k, v in data.items()})
    raise ValueError(f"{path}: script must be a JSON list or object")


RETRYABLE = frozenset({429, 500, 502, 503, 504})


@dataclass
class RemoteChatProvider:
    """Chat-completions client. Retries 429/5xx with exponential backoff, never other 4xx."""

    endpoint: str
    api_key: str | None = None
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int | None = None
    max_retries: int = 3
    backoff: float = 1.0
    timeout: float = 120.0
    client: httpx.Client | None = None
    sleep: Callable[[float], None] = time.sleep
    _own_client: bool = field(default=False, init=False, repr=False)

    def __post_init__(self):
        if self.api_key is None:
            self.api_key = os.environ.get(LLM_KEY_ENV)
        if self.client is None:
            self.client = httpx.Client(timeout=self.timeout)
            self._own_client = True

    @property
    def url(self) -> str:
        return f"{self.endpoint.rstrip('/')}/chat/completions"

    def complete(self, messages, tools) -> Completion:
        body = encode_request(messages, tools, self.model, self.temperature, self.max_tokens)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        attempt = 0
        while True:
            attempt += 1
            try:
                resp = self.client.post(self.url, content=body.encode("utf-8"), headers=headers)
            except httpx.HTTPError as exc:
                if attempt > self.max_retries:
                    raise NetworkError(f"{self.url}: {exc} (after {attempt} attempts)") from exc
                self.sleep(self.backoff * 2 ** (attempt - 1))
                continue
            if resp.status_code == 200:
                break
            if resp.status_code in RETRYABLE and attempt <= self.max_retries:
                self.sleep(self.backoff * 2 ** (attempt - 1))
                continue
            raise ProviderError(f"HTTP {resp.status_code} from {self.url} after {attempt} attempt(s): {resp.text[:500]}")
        completion = decode_completion(resp.content)
        return replace(completion, attempts=attempt)

    def close(self) -> None:
        if self._own_client and self.client is not None:
            self.client.close()
