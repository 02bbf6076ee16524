import json
import re

import httpx
import pytest

from conftest import FIXTURES
from hsrefactor import agents as ag
from hsrefactor.errors import (
    AuthFailure,
    BackendRefusal,
    BackendUnavailable,
    ContextOverflow,
    MissingSlot,
    PipelineWiring,
    ScriptMiss,
)

GOLDEN = FIXTURES / "agents" / "golden"


def _bindings(role):
    return {slot: f"<{slot} goes here>" for slot in role.template.context_slots}


@pytest.mark.parametrize("name", ag.PIPELINE_ORDER)
def test_prompt_matches_golden_snapshot(name):
    role = ag.ROLES[name]
    assert ag.render_prompt(role, _bindings(role)) == (GOLDEN / f"{name}.md").read_text(encoding="utf-8")


@pytest.mark.parametrize("name", ag.PIPELINE_ORDER)
def test_sections_appear_in_order(name):
    text = ag.render_prompt(ag.ROLES[name], _bindings(ag.ROLES[name]))
    heads = [text.index(h) for h in ("## Role", "## Instructions", "## Context", "## Validation")]
    assert heads == sorted(heads)
    assert not ag._MARKER.search(text)


def test_missing_slot():
    role = ag.ROLES["RefactorExpert"]
    with pytest.raises(MissingSlot):
        ag.render_prompt(role, {"strategy": "x"})


def test_values_are_not_rescanned():
    role = ag.ROLES["ContextStructure"]
    text = ag.render_prompt(role, {"source_code": "literal {{strategy}} marker"})
    assert "literal {{strategy}} marker" in text


def test_marker_regex_tolerates_spaces():
    assert ag._MARKER.fullmatch("{{ source_code }}").group(1) == "source_code"


def test_default_chain_is_wired():
    ag.check_chain()


def test_misordered_chain_rejected():
    with pytest.raises(PipelineWiring):
        ag.check_chain(("RefactorStrategy", "ContextStructure"))


def test_every_role_output_is_consumed_or_final():
    consumed = {k for r in ag.ROLES.values() for k in r.input_kinds}
    for name in ag.PIPELINE_ORDER[:-1]:
        assert ag.ROLES[name].output_kind in consumed, name


def _history():
    return [
        ag.AgentMessage.make("system", ag.SOURCE_CODE, "=== FILE: A.hs ===\nmain = pure ()\n"),
        ag.AgentMessage.make("system", ag.STATIC_SMELLS, "No static findings."),
    ]


def test_invoke_with_mock_and_audit(tmp_path):
    backend = ag.mock_backend({("ContextStructure", "*"): "overview"})
    audit = ag.AuditLog(tmp_path / "audit.ndjson")
    msg = ag.invoke(ag.ROLES["ContextStructure"], _history(), backend, audit=audit)
    assert (msg.kind, msg.payload) == (ag.STRUCTURE, "overview")
    lines = (tmp_path / "audit.ndjson").read_text().splitlines()
    entry = json.loads(lines[0])
    assert entry["role"] == "ContextStructure"
    assert entry["digest"] == ag.prompt_digest(entry["prompt"])
    assert entry["error"] is None


def test_invoke_missing_input_is_wiring_error():
    with pytest.raises(PipelineWiring):
        ag.invoke(ag.ROLES["RefactorStrategy"], _history(), ag.mock_backend({}))


def test_context_overflow_checked_before_call():
    backend = ag.mock_backend({("ContextStructure", "*"): "x"}, context_window=100)
    with pytest.raises(ContextOverflow):
        ag.invoke(ag.ROLES["ContextStructure"], _history(), backend)


def test_empty_completion_is_refusal():
    backend = ag.mock_backend({("ContextStructure", "*"): "   "})
    audit = ag.AuditLog()
    with pytest.raises(BackendRefusal):
        ag.invoke(ag.ROLES["ContextStructure"], _history(), backend, audit=audit)
    assert audit.entries[0]["error"] == "empty completion"


def test_mock_exact_digest_beats_wildcard():
    role = ag.ROLES["ContextStructure"]
    prompt = ag.render_prompt(role, {"source_code": _history()[0].payload})
    backend = ag.mock_backend({("ContextStructure", ag.prompt_digest(prompt)): "exact", ("ContextStructure", "*"): "any"})
    assert ag.invoke(role, _history(), backend).payload == "exact"


def test_mock_sequence_repeats_last():
    backend = ag.mock_backend({("Debug", "*"): ["a", "b"]})
    got = [backend.complete(ag.BackendRequest("p", "Debug")).completion for _ in range(3)]
    assert got == ["a", "b", "b"]


def test_mock_strict_miss_and_echo():
    with pytest.raises(ScriptMiss):
        ag.mock_backend({}).complete(ag.BackendRequest("p", "Debug"))
    echo = ag.mock_backend({}, strict=False, default="echo")
    assert echo.complete(ag.BackendRequest("hello", "Debug")).completion == "hello"


@pytest.mark.parametrize("kind, exc", [("unavailable", BackendUnavailable), ("refusal", BackendRefusal)])
def test_mock_scripted_errors(kind, exc):
    with pytest.raises(exc):
        ag.mock_backend({("Debug", "*"): {"error": kind}}).complete(ag.BackendRequest("p", "Debug"))


def test_load_script(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text(
        "strict: true\nresponses:\n"
        "  - role: Debug\n    completions: [one, two]\n"
        "  - role: CodeSmells\n    error: refusal\n"
    )
    backend = ag.load_script(path)
    assert backend.complete(ag.BackendRequest("x", "Debug")).completion == "one"
    with pytest.raises(BackendRefusal):
        backend.complete(ag.BackendRequest("x", "CodeSmells"))


def _audit_run():
    backend = ag.mock_backend({("ContextStructure", "*"): "overview", ("CodeSmells", "*"): "smells"})
    audit = ag.AuditLog()
    hist = _history()
    hist.append(ag.invoke(ag.ROLES["ContextStructure"], hist, backend, audit=audit))
    hist.append(ag.invoke(ag.ROLES["CodeSmells"], hist, backend, audit=audit))
    return audit.entries


def test_audit_is_deterministic():
    assert _audit_run() == _audit_run()


# ---------------------------------------------------------------- remote


def _ok(content="done"):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}, "finish_reason": "stop"}], "usage": {"prompt_tokens": 3}})


def _remote(handler, sleeps=None):
    return ag.RemoteBackend(
        "https://llm.invalid/v1/chat",
        "m",
        transport=httpx.MockTransport(handler),
        sleep=(sleeps.append if sleeps is not None else lambda s: None),
    )


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv(ag.DEFAULT_API_KEY_ENV, "secret")


def test_remote_success(api_key):
    seen = []

    def handler(req):
        seen.append(json.loads(req.content))
        assert req.headers["authorization"] == "Bearer secret"
        return _ok()

    resp = _remote(handler).complete(ag.BackendRequest("hi", "Debug", 10, 0.0))
    assert resp.completion == "done" and resp.usage == {"prompt_tokens": 3}
    assert seen[0]["messages"][0]["content"] == "hi" and seen[0]["temperature"] == 0.0


def test_remote_retries_with_backoff(api_key):
    calls, sleeps = [], []

    def handler(req):
        calls.append(1)
        return httpx.Response(503) if len(calls) < 3 else _ok()

    assert _remote(handler, sleeps).complete(ag.BackendRequest("hi", "Debug")).completion == "done"
    assert sleeps == [1.0, 2.0]


def test_remote_gives_up(api_key):
    def handler(req):
        raise httpx.ConnectError("down")

    with pytest.raises(BackendUnavailable):
        _remote(handler).complete(ag.BackendRequest("hi", "Debug"))


def test_remote_missing_credential_makes_no_request(monkeypatch):
    monkeypatch.delenv(ag.DEFAULT_API_KEY_ENV, raising=False)
    calls = []
    with pytest.raises(AuthFailure):
        _remote(lambda r: calls.append(r) or _ok()).complete(ag.BackendRequest("hi", "Debug"))
    assert calls == []


def test_remote_rejected_credential(api_key):
    with pytest.raises(AuthFailure):
        _remote(lambda r: httpx.Response(401)).complete(ag.BackendRequest("hi", "Debug"))


def test_remote_refusal_not_retried(api_key):
    calls = []

    def handler(req):
        calls.append(1)
        return httpx.Response(200, json={"choices": [{"message": {"content": "", "refusal": "no"}}]})

    with pytest.raises(BackendRefusal):
        _remote(handler).complete(ag.BackendRequest("hi", "Debug"))
    assert len(calls) == 1


def test_remote_config_requires_endpoint():
    with pytest.raises(BackendUnavailable):
        ag.remote_backend({"model": "m"})


def test_token_estimate():
    assert ag.estimate_tokens("") == 0
    assert ag.estimate_tokens("abcde") == 2
    assert re.fullmatch(r"[0-9a-f]{16}", ag.prompt_digest("x"))
