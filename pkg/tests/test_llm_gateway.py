import json

import httpx
import pytest

from perf_sampler.exceptions import EmptyCompletion, NoJsonFound, NonRetryableStatus, NoScriptEntry, SchemaMismatch, TransportError
from perf_sampler.llm_gateway import (ChatRequest, LiveEndpoint, MockScript, TranscriptLog, complete_chat,
                                      extract_structured, read_transcript)


def req(role="filter", it=0, user="hello", temperature=None):
    return ChatRequest(role, (("system", "sys"), ("user", user)), temperature, iteration=it)


def test_request_validation_and_defaults():
    assert req().temperature == 0.2
    assert req("generator").temperature == 0.8
    with pytest.raises(ValueError):
        ChatRequest("poet", (("system", "s"),))
    with pytest.raises(ValueError):
        ChatRequest("filter", (("user", "u"),))
    with pytest.raises(ValueError):
        req(temperature=3.0)
    body = req().wire_body()
    assert body["messages"][1] == {"role": "user", "content": "hello"}


def test_mock_lookup_precedence():
    script = (MockScript()
              .add("generator", "*", "wild")
              .add("generator", "*", "wild-matched", matcher="[generator-id: 1]")
              .add("generator", 2, "exact")
              .add("generator", 2, "exact-matched", matcher="[generator-id: 1]"))
    assert complete_chat(script, req("generator", 2, "[generator-id: 1]")).text == "exact-matched"
    assert complete_chat(script, req("generator", 2, "[generator-id: 0]")).text == "exact"
    assert complete_chat(script, req("generator", 3, "[generator-id: 1]")).text == "wild-matched"
    assert complete_chat(script, req("generator", 3, "[generator-id: 0]")).text == "wild"
    with pytest.raises(NoScriptEntry):
        complete_chat(script, req("filter"))


def test_mock_empty_response_is_an_error():
    with pytest.raises(EmptyCompletion):
        complete_chat(MockScript().add("filter", 0, ""), req())


def test_mock_json_roundtrip(tmp_path):
    script = MockScript().add("filter", 0, "a").add("analyzer", "*", "b", matcher="x")
    script.save(tmp_path / "m.json")
    assert MockScript.load(tmp_path / "m.json").entries == script.entries


def _endpoint(handler, **kw):
    sleeps = []
    ep = LiveEndpoint("http://llm.test", api_key="k", transport=httpx.MockTransport(handler),
                      sleep=sleeps.append, **kw)
    return ep, sleeps


def _ok(text="hi"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}],
                                     "usage": {"prompt_tokens": 3, "completion_tokens": 1}})


def test_live_success_sends_openai_body():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return _ok()

    ep, _ = _endpoint(handler)
    resp = complete_chat(ep, req())
    assert resp.text == "hi" and resp.usage == (3, 1)
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer k"
    assert seen["body"]["temperature"] == 0.2


def test_live_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(429) if len(calls) < 3 else _ok()

    ep, sleeps = _endpoint(handler, backoff=0.5)
    assert complete_chat(ep, req()).text == "hi"
    assert sleeps == [0.5, 1.0]


def test_live_exhausts_retries():
    ep, sleeps = _endpoint(lambda r: httpx.Response(503), max_retries=2)
    with pytest.raises(TransportError):
        complete_chat(ep, req())
    assert len(sleeps) == 2


def test_live_transport_error_retried():
    def handler(request):
        raise httpx.ConnectError("refused")

    ep, sleeps = _endpoint(handler, max_retries=1)
    with pytest.raises(TransportError):
        complete_chat(ep, req())
    assert len(sleeps) == 1


def test_live_client_error_not_retried():
    ep, sleeps = _endpoint(lambda r: httpx.Response(401, text="bad key"))
    with pytest.raises(NonRetryableStatus) as info:
        complete_chat(ep, req())
    assert info.value.status_code == 401 and sleeps == []


def test_live_empty_completion():
    ep, _ = _endpoint(lambda r: _ok(""))
    with pytest.raises(EmptyCompletion):
        complete_chat(ep, req())


def test_live_needs_credential(monkeypatch):
    monkeypatch.delenv("PERF_SAMPLER_API_KEY", raising=False)
    ep = LiveEndpoint("http://llm.test", transport=httpx.MockTransport(lambda r: _ok()))
    with pytest.raises(TransportError):
        complete_chat(ep, req())
    monkeypatch.setenv("PERF_SAMPLER_API_KEY", "env-key")
    assert complete_chat(ep, req()).text == "hi"


def test_extract_prefers_fenced_block():
    text = 'Noise {"keep": 1}\n```json\n{"keep": ["a"]}\n```'
    assert extract_structured(text, {"keep": "string list"}) == {"keep": ["a"]}


def test_extract_bare_and_nested():
    assert extract_structured('answer: {"a": {"b": [1, 2]}} done') == {"a": {"b": [1, 2]}}
    assert extract_structured("list [1, 2]") == [1, 2]


def test_extract_errors():
    with pytest.raises(NoJsonFound):
        extract_structured("just prose")
    with pytest.raises(SchemaMismatch):
        extract_structured('{"keep": "a"}', {"keep": "string list"})
    with pytest.raises(SchemaMismatch):
        extract_structured('{"n": true}', {"n": "integer"})


def test_transcript_log(tmp_path):
    log = TranscriptLog(tmp_path / "t.jsonl")
    log.append(req(), complete_chat(MockScript().add("filter", 0, "ok"), req()), timestamp=1.0)
    recs = read_transcript(tmp_path / "t.jsonl")
    assert len(recs) == 1 and recs[0]["response_text"] == "ok" and recs[0]["timestamp"] == 1.0
    assert log.count("filter") == 1 and log.count("generator") == 0
    replay = MockScript.from_transcript(tmp_path / "t.jsonl")
    assert complete_chat(replay, req()).text == "ok"
    fresh = TranscriptLog(tmp_path / "t.jsonl")
    assert len(fresh) == 0 and read_transcript(tmp_path / "t.jsonl") == []
