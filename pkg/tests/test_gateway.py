from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from conflictkit import gateway
from conflictkit.gateway import (
    AuthFailureError,
    ChatMessage,
    ChatRequest,
    FinishReason,
    HttpProvider,
    MissingFixtureEntryError,
    ProviderConfig,
    ProviderRefusalError,
    Recorder,
    ReplayProvider,
    TransportExhaustedError,
    record_session,
    replay_session,
    request_hash,
    user_request,
)


class TestRequestValidation:
    def test_requires_messages(self):
        with pytest.raises(ValueError):
            ChatRequest(model="m", messages=())

    def test_last_message_must_be_user(self):
        with pytest.raises(ValueError):
            ChatRequest(model="m", messages=(ChatMessage("assistant", "hi"),))

    def test_negative_temperature_rejected(self):
        with pytest.raises(ValueError):
            user_request("m", "hi", temperature=-0.5)

    def test_invalid_role_rejected(self):
        with pytest.raises(ValueError):
            ChatMessage("tool", "hi")

    def test_hash_stable_and_tag_free(self):
        first = user_request("m", "hi", tag="a")
        second = user_request("m", "hi", tag="b")
        assert request_hash(first) == request_hash(second)

    def test_temperature_omitted_when_default(self):
        payload = gateway.request_payload(user_request("m", "hi"))
        assert "temperature" not in payload
        payload = gateway.request_payload(user_request("m", "hi", temperature=0.0))
        assert payload["temperature"] == 0.0


class TestReplay:
    def test_resolves_by_tag_verbatim(self):
        provider = ReplayProvider({"fig-answer": "The image does not contain a ball."})
        response = provider.complete(user_request("m", "anything", tag="fig-answer"))
        assert response.content == "The image does not contain a ball."
        assert response.finish_reason is FinishReason.STOP

    def test_missing_tag(self):
        provider = ReplayProvider({})
        with pytest.raises(MissingFixtureEntryError):
            provider.complete(user_request("m", "q", tag="absent"))

    def test_entries_resolve_in_any_order(self):
        provider = ReplayProvider({"a": "1", "b": "2", "c": "3"})
        for tag in ("c", "a", "b"):
            assert provider.complete(user_request("m", "q", tag=tag)).content == str(
                {"a": "1", "b": "2", "c": "3"}[tag]
            )

    def test_duplicate_fixture_tags_rejected(self, tmp_path):
        path = tmp_path / "fix.json"
        path.write_text(json.dumps({"entries": [
            {"tag": "a", "request_hash": "", "content": "1"},
            {"tag": "a", "request_hash": "", "content": "2"},
        ]}))
        with pytest.raises(ValueError):
            replay_session(path)


class TestRecordReplay:
    def test_round_trip_byte_identical(self, tmp_path):
        source = ReplayProvider({"x": "alpha", "y": "beta"})
        requests_seq = [
            user_request("m", "first", tag="x"),
            user_request("m", "second", tag="y"),
        ]
        path = tmp_path / "session.json"
        recorded = record_session(source, requests_seq, path)
        replayed = replay_session(path)
        for request, response in zip(requests_seq, recorded):
            assert replayed.complete(request).content == response.content

    def test_fixture_carries_request_hash(self, tmp_path):
        source = ReplayProvider({"x": "alpha"})
        request = user_request("m", "first", tag="x")
        path = tmp_path / "session.json"
        record_session(source, [request], path)
        raw = json.loads(path.read_text())
        assert raw["entries"][0]["request_hash"] == request_hash(request)


class FakeResponse:
    def __init__(self, status_code: int, payload: dict | None = None):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = json.dumps(self._payload)

    def json(self):
        return self._payload


def success_payload(content: str = "ok", finish: str = "stop") -> dict:
    return {"choices": [{"message": {"content": content}, "finish_reason": finish}]}


class ScriptedSession:
    """Fake requests.Session yielding a scripted sequence of outcomes."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


@pytest.fixture(autouse=True)
def _no_sleep(monkeypatch):
    monkeypatch.setattr(gateway.time, "sleep", lambda _: None)


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("CHAT_API_KEY", "test-key")


CONFIG = ProviderConfig(base_url="http://api.test", max_retries=3)


class TestHttpProvider:
    def test_success_after_two_timeouts(self, api_key):
        session = ScriptedSession(
            [requests.Timeout(), requests.Timeout(), FakeResponse(200, success_payload())]
        )
        provider = HttpProvider(CONFIG, session=session)
        response = provider.complete(user_request("m", "q", tag="t"))
        assert response.content == "ok"
        assert session.calls == 3

    def test_auth_failure_not_retried(self, api_key):
        session = ScriptedSession([FakeResponse(401)])
        provider = HttpProvider(CONFIG, session=session)
        with pytest.raises(AuthFailureError):
            provider.complete(user_request("m", "q"))
        assert session.calls == 1

    def test_missing_key_fails_before_network(self, monkeypatch):
        monkeypatch.delenv("CHAT_API_KEY", raising=False)
        session = ScriptedSession([])
        provider = HttpProvider(CONFIG, session=session)
        with pytest.raises(AuthFailureError):
            provider.complete(user_request("m", "q"))
        assert session.calls == 0

    def test_client_error_is_refusal(self, api_key):
        session = ScriptedSession([FakeResponse(400, {"error": "bad"})])
        provider = HttpProvider(CONFIG, session=session)
        with pytest.raises(ProviderRefusalError):
            provider.complete(user_request("m", "q"))
        assert session.calls == 1

    def test_transport_exhausted(self, api_key):
        session = ScriptedSession([requests.ConnectionError()] * 4)
        provider = HttpProvider(CONFIG, session=session)
        with pytest.raises(TransportExhaustedError):
            provider.complete(user_request("m", "q"))
        assert session.calls == 4

    def test_server_errors_retried(self, api_key):
        session = ScriptedSession([FakeResponse(503), FakeResponse(200, success_payload())])
        provider = HttpProvider(CONFIG, session=session)
        assert provider.complete(user_request("m", "q")).content == "ok"
        assert session.calls == 2

    def test_length_finish_reason(self, api_key):
        session = ScriptedSession([FakeResponse(200, success_payload(finish="length"))])
        provider = HttpProvider(CONFIG, session=session)
        assert provider.complete(user_request("m", "q")).finish_reason is FinishReason.LENGTH

    def test_malformed_body_is_refusal(self, api_key):
        session = ScriptedSession([FakeResponse(200, {"unexpected": True})])
        provider = HttpProvider(CONFIG, session=session)
        with pytest.raises(ProviderRefusalError):
            provider.complete(user_request("m", "q"))

    def test_in_flight_cap_enforced(self, api_key):
        active = 0
        peak = 0
        lock = threading.Lock()

        class SlowSession:
            def post(self, url, json=None, headers=None, timeout=None):
                nonlocal active, peak
                with lock:
                    active += 1
                    peak = max(peak, active)
                threading.Event().wait(0.01)
                with lock:
                    active -= 1
                return FakeResponse(200, success_payload())

        config = ProviderConfig(base_url="http://api.test", max_in_flight=2)
        provider = HttpProvider(config, session=SlowSession())
        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(lambda i: provider.complete(user_request("m", f"q{i}")), range(12)))
        assert peak <= 2


class TestProviderConfig:
    def test_from_file_ignores_unknown_keys(self, tmp_path):
        path = tmp_path / "provider.json"
        path.write_text(json.dumps({"base_url": "http://x", "comment": "ignored"}))
        config = ProviderConfig.from_file(path)
        assert config.base_url == "http://x"

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            ProviderConfig(base_url="http://x", max_retries=-1)
        with pytest.raises(ValueError):
            ProviderConfig(base_url="http://x", timeout_ms=0)
