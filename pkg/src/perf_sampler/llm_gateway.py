"""Chat-completion access: OpenAI-compatible HTTP endpoints, scripted mocks, transcripts.

Also hosts :func:`extract_structured`, which pulls the first schema-conforming
JSON value out of free model text.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import (EmptyCompletion, NoJsonFound, NonRetryableStatus, NoScriptEntry,
                         SchemaMismatch, TransportError)

log = logging.getLogger(__name__)

ROLE_TAGS = ("filter", "analyzer", "designer", "generator", "voter-aux")
SPEAKERS = ("system", "user", "assistant")
DEFAULT_TEMPERATURES = {"filter": 0.2, "analyzer": 0.2, "designer": 0.2, "generator": 0.8, "voter-aux": 0.2}
API_KEY_ENV = "PERF_SAMPLER_API_KEY"
WILDCARD = "*"


@dataclass(frozen=True)
class ChatRequest:
    role_tag: str
    messages: tuple
    temperature: float | None = None
    model_id: str = "mock"
    iteration: int = 0

    def __post_init__(self):
        if self.role_tag not in ROLE_TAGS:
            raise ValueError(f"unknown role tag {self.role_tag!r}")
        msgs = tuple((str(s), str(t)) for s, t in self.messages)
        if not msgs:
            raise ValueError("a chat request needs at least one message")
        if msgs[0][0] != "system":
            raise ValueError("the first message must come from the system speaker")
        for speaker, _ in msgs:
            if speaker not in SPEAKERS:
                raise ValueError(f"unknown speaker {speaker!r}")
        temp = DEFAULT_TEMPERATURES[self.role_tag] if self.temperature is None else float(self.temperature)
        if not 0.0 <= temp <= 2.0:
            raise ValueError(f"temperature {temp} outside [0, 2]")
        if int(self.iteration) < 0:
            raise ValueError("iteration must be non-negative")
        object.__setattr__(self, "messages", msgs)
        object.__setattr__(self, "temperature", temp)
        object.__setattr__(self, "iteration", int(self.iteration))

    @property
    def text(self) -> str:
        """All message texts joined by newlines; what mock matchers search."""
        return "\n".join(t for _, t in self.messages)

    def wire_body(self) -> dict:
        return {
            "model": self.model_id,
            "messages": [{"role": s, "content": t} for s, t in self.messages],
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: tuple = (0, 0)
    latency: float = 0.0


@dataclass(frozen=True)
class ScriptEntry:
    role_tag: str
    iteration: int | str
    response: str
    matcher: str | None = None


class MockScript:
    """Canned responses keyed by (role tag, iteration or "*", optional matcher substring).

    Lookup order: exact iteration with a matching matcher, exact iteration
    without matcher, wildcard with a matching matcher, wildcard without
    matcher. Within one level the earliest entry wins.
    """

    def __init__(self, entries: Sequence[ScriptEntry] = ()):
        self.entries = tuple(entries)

    def __len__(self):
        return len(self.entries)

    def add(self, role_tag, iteration, response, matcher=None) -> MockScript:
        return MockScript(self.entries + (ScriptEntry(role_tag, iteration, response, matcher),))

    def lookup(self, req: ChatRequest) -> str:
        text = req.text
        levels = (
            lambda e: e.iteration == req.iteration and e.matcher is not None and e.matcher in text,
            lambda e: e.iteration == req.iteration and e.matcher is None,
            lambda e: e.iteration == WILDCARD and e.matcher is not None and e.matcher in text,
            lambda e: e.iteration == WILDCARD and e.matcher is None,
        )
        own = [e for e in self.entries if e.role_tag == req.role_tag]
        for hit in levels:
            for e in own:
                if hit(e):
                    return e.response
        raise NoScriptEntry(f"no scripted response for role={req.role_tag} iteration={req.iteration}")

    def to_json(self) -> dict:
        out = []
        for e in self.entries:
            d = {"role_tag": e.role_tag, "iteration": e.iteration, "response": e.response}
            if e.matcher is not None:
                d["matcher"] = e.matcher
            out.append(d)
        return {"entries": out}

    @classmethod
    def from_json(cls, obj: Mapping) -> MockScript:
        entries = []
        for d in obj.get("entries", []):
            it = d.get("iteration", WILDCARD)
            it = WILDCARD if it == WILDCARD else int(it)
            entries.append(ScriptEntry(d["role_tag"], it, d["response"], d.get("matcher")))
        return cls(entries)

    @classmethod
    def load(cls, path) -> MockScript:
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n")

    @classmethod
    def from_transcript(cls, path) -> MockScript:
        """Replay script: each record becomes an exact-iteration entry matched on its full request text."""
        entries = []
        for rec in read_transcript(path):
            entries.append(ScriptEntry(rec["role_tag"], int(rec["iteration"]), rec["response_text"],
                                       rec["request_text"]))
        return cls(entries)


@dataclass
class LiveEndpoint:
    """OpenAI-compatible chat-completions endpoint.

    ``max_retries`` counts re-attempts after the first call; 429, 5xx and
    transport failures are retried with exponential backoff.
    """

    base_url: str
    model_id: str = "gpt-4o"
    api_key: str | None = None
    max_retries: int = 3
    backoff: float = 1.0
    timeout: float = 120.0
    transport: object = None
    sleep: object = field(default=time.sleep, repr=False)

    def credential(self) -> str:
        key = self.api_key or os.environ.get(API_KEY_ENV)
        if not key:
            raise TransportError(f"no credential: set {API_KEY_ENV}")
        return key

    def url(self) -> str:
        return self.base_url.rstrip("/") + "/v1/chat/completions"

    def complete(self, req: ChatRequest) -> ChatResponse:
        import httpx

        headers = {"Authorization": f"Bearer {self.credential()}"}
        body = req.wire_body()
        if req.model_id == "mock":
            body["model"] = self.model_id
        last = None
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            for attempt in range(self.max_retries + 1):
                if attempt:
                    self.sleep(self.backoff * 2 ** (attempt - 1))
                start = time.monotonic()
                try:
                    resp = client.post(self.url(), json=body, headers=headers)
                except httpx.HTTPError as exc:
                    last = TransportError(f"{type(exc).__name__}: {exc}")
                    continue
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = TransportError(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise NonRetryableStatus(resp.status_code, resp.text)
                payload = resp.json()
                try:
                    text = payload["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError):
                    text = None
                if not text:
                    raise EmptyCompletion("endpoint returned no completion text")
                usage = payload.get("usage") or {}
                return ChatResponse(text, (int(usage.get("prompt_tokens", 0)),
                                           int(usage.get("completion_tokens", 0))),
                                    time.monotonic() - start)
        raise last


def complete_chat(backend, req: ChatRequest) -> ChatResponse:
    """One chat completion from a :class:`LiveEndpoint` or a :class:`MockScript`."""
    if isinstance(backend, MockScript):
        text = backend.lookup(req)
        if not text:
            raise EmptyCompletion("scripted response is empty")
        return ChatResponse(text, (0, 0), 0.0)
    if isinstance(backend, LiveEndpoint):
        return backend.complete(req)
    if callable(backend):
        resp = backend(req)
        return resp if isinstance(resp, ChatResponse) else ChatResponse(str(resp))
    raise TypeError(f"unsupported backend {type(backend).__name__}")


# -- structured extraction ---------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z]*[ \t]*\n(.*?)```", re.DOTALL)
_KINDS = {
    "string": str,
    "number": (int, float),
    "integer": int,
    "boolean": bool,
    "object": dict,
    "array": list,
    "string list": list,
}


def _balanced_values(text: str):
    """Every JSON value that parses from a '{' or '[' position, left to right."""
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "{[":
            try:
                value, _ = decoder.raw_decode(text, i)
            except json.JSONDecodeError:
                continue
            yield value


def _schema_problems(value, schema) -> list[str]:
    if schema is None:
        return []
    if not isinstance(value, dict):
        return [f"expected an object, got {type(value).__name__}"]
    problems = []
    for key, kind in schema.items():
        if key not in value:
            problems.append(f"missing key {key!r}")
            continue
        v = value[key]
        expected = _KINDS[kind]
        if kind in ("number", "integer") and isinstance(v, bool):
            ok = False
        else:
            ok = isinstance(v, expected)
        if ok and kind == "string list":
            ok = all(isinstance(x, str) for x in v)
        if not ok:
            problems.append(f"key {key!r} is not a {kind}")
    return problems


def extract_structured(text: str, schema: Mapping | None = None):
    """First JSON value in ``text`` satisfying ``schema`` (fenced blocks take precedence).

    ``schema`` maps required keys to one of "string", "number", "integer",
    "boolean", "object", "array" or "string list".
    """
    candidates = []
    for block in _FENCE.findall(text):
        candidates.extend(_balanced_values(block))
    candidates.extend(_balanced_values(text))
    if not candidates:
        raise NoJsonFound("no JSON value found in model output")
    first_problems = None
    for value in candidates:
        problems = _schema_problems(value, schema)
        if not problems:
            return value
        if first_problems is None:
            first_problems = problems
    raise SchemaMismatch(first_problems)


# -- transcripts -------------------------------------------------------

class TranscriptLog:
    """Append-only JSON-lines log of calls; appends are serialized."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def append(self, req: ChatRequest, resp: ChatResponse, timestamp: float | None = None) -> dict:
        rec = {
            "role_tag": req.role_tag,
            "iteration": req.iteration,
            "model_id": req.model_id,
            "request_text": req.text,
            "response_text": resp.text,
            "usage": list(resp.usage),
            "timestamp": time.time() if timestamp is None else timestamp,
        }
        line = json.dumps(rec, ensure_ascii=False)
        with self._lock:
            self.records.append(rec)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
        return rec

    def __len__(self):
        return len(self.records)

    def count(self, role_tag: str) -> int:
        return sum(r["role_tag"] == role_tag for r in self.records)


def transcript_log(req: ChatRequest, resp: ChatResponse, sink: TranscriptLog) -> dict:
    return sink.append(req, resp)


def read_transcript(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
