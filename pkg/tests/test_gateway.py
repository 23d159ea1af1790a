from __future__ import annotations

import json
import threading
import time

import httpx
import pytest

from xicl.gateway import (
    ChatRequest, EndpointConfig, Gateway, GatewayError, ModelGenerator,
    ResponseCache, ScriptedMockModel,
)


def chat_reply(text, finish="stop"):
    return {
        "choices": [{"message": {"role": "assistant", "content": text},
                     "finish_reason": finish}],
        "usage": {"prompt_tokens": 3, "completion_tokens": 2},
    }


def make_gateway(tmp_path, handler, **kwargs):
    endpoints = {
        "test-model": EndpointConfig(model_id="test-model",
                                     url="https://api.test/v1/chat/completions"),
    }
    transport = httpx.MockTransport(handler)
    return Gateway(endpoints, ResponseCache(tmp_path), transport=transport,
                   sleep=lambda s: None, **kwargs)


def req(text="hello", temperature=0.0):
    return ChatRequest(model_id="test-model", system="sys",
                       messages=(("user", text),), temperature=temperature)


def test_complete_and_cache_identity(tmp_path):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(200, json=chat_reply("pong"))

    gateway = make_gateway(tmp_path, handler)
    first = gateway.complete(req())
    assert first.text == "pong" and not first.from_cache
    second = gateway.complete(req())
    assert second.from_cache
    assert second.text == first.text
    assert calls["n"] == 1


def test_request_body_carries_default_temperature(tmp_path):
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json=chat_reply("ok"))

    gateway = make_gateway(tmp_path, handler)
    gateway.complete(req())
    assert seen["temperature"] == 0.0
    assert seen["messages"][0] == {"role": "system", "content": "sys"}


def test_retry_on_429_then_success(tmp_path):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] <= 2:
            return httpx.Response(429, json={"error": "slow down"})
        return httpx.Response(200, json=chat_reply("finally"))

    gateway = make_gateway(tmp_path, handler)
    response = gateway.complete(req())
    assert response.text == "finally"
    assert response.attempts == 3
    assert calls["n"] == 3


def test_exponential_backoff_schedule(tmp_path):
    sleeps = []
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] <= 3:
            return httpx.Response(503)
        return httpx.Response(200, json=chat_reply("up"))

    endpoints = {"test-model": EndpointConfig(model_id="test-model", url="https://x/c")}
    gateway = Gateway(endpoints, ResponseCache(tmp_path),
                      transport=httpx.MockTransport(handler), sleep=sleeps.append)
    gateway.complete(req())
    assert sleeps == [1.0, 2.0, 4.0]


def test_retries_exhausted_yields_error_response(tmp_path):
    gateway = make_gateway(tmp_path, lambda r: httpx.Response(500), max_tries=3)
    response = gateway.complete(req())
    assert response.finish == "error"
    assert response.text is None
    assert "3 tries" in response.error
    # Errors are never cached.
    assert gateway.cache.get(req().digest()) is None


def test_auth_failure_no_retry(tmp_path):
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(401)

    gateway = make_gateway(tmp_path, handler)
    with pytest.raises(GatewayError, match="authentication"):
        gateway.complete(req())
    assert calls["n"] == 1


def test_malformed_reply_raises(tmp_path):
    gateway = make_gateway(tmp_path, lambda r: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(GatewayError, match="malformed"):
        gateway.complete(req())


def test_missing_credential_env(tmp_path, monkeypatch):
    monkeypatch.delenv("XICL_TEST_KEY", raising=False)
    endpoints = {"m": EndpointConfig(model_id="m", url="https://x/c",
                                     api_key_env="XICL_TEST_KEY")}
    gateway = Gateway(endpoints, ResponseCache(tmp_path),
                      transport=httpx.MockTransport(lambda r: httpx.Response(200)))
    with pytest.raises(GatewayError, match="XICL_TEST_KEY"):
        gateway.complete(ChatRequest(model_id="m", system="s", messages=()))


def test_batch_order_preserved_and_errors_positional(tmp_path):
    def handler(request):
        body = json.loads(request.content)
        text = body["messages"][-1]["content"]
        if text == "item-3":
            return httpx.Response(400)
        return httpx.Response(200, json=chat_reply(f"echo:{text}"))

    gateway = make_gateway(tmp_path, handler, max_tries=2)
    requests = [req(f"item-{i}") for i in range(10)]
    responses = gateway.complete_batch(requests, max_in_flight=4)
    assert len(responses) == 10
    for i, response in enumerate(responses):
        if i == 3:
            assert response.finish == "error"
        else:
            assert response.text == f"echo:item-{i}"


def test_batch_concurrency_ceiling(tmp_path):
    state = {"now": 0, "peak": 0}
    lock = threading.Lock()

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return httpx.Response(200, json=chat_reply("ok"))

    gateway = make_gateway(tmp_path, handler)
    requests = [req(f"q{i}") for i in range(10)]
    responses = gateway.complete_batch(requests, max_in_flight=3)
    assert all(r.finish == "stop" for r in responses)
    assert state["peak"] == 3


def test_batch_empty_and_bad_bound(tmp_path):
    gateway = make_gateway(tmp_path, lambda r: httpx.Response(200, json=chat_reply("x")))
    assert gateway.complete_batch([], max_in_flight=2) == []
    with pytest.raises(GatewayError):
        gateway.complete_batch([req()], max_in_flight=0)


def test_rate_limited_requests_space_out(tmp_path):
    stamps = []

    def handler(request):
        stamps.append(time.monotonic())
        return httpx.Response(200, json=chat_reply("ok"))

    endpoints = {"test-model": EndpointConfig(
        model_id="test-model", url="https://x/c", requests_per_minute=1200,
    )}
    gateway = Gateway(endpoints, ResponseCache(tmp_path),
                      transport=httpx.MockTransport(handler))
    for i in range(3):
        gateway.complete(req(f"q{i}"))
    gaps = [b - a for a, b in zip(stamps, stamps[1:])]
    assert all(gap >= 0.045 for gap in gaps)  # 1200/min = 50ms spacing


def test_cache_roundtrip_bytes(tmp_path):
    cache = ResponseCache(tmp_path)
    payload = {"text": "카페 ☕", "finish": "stop"}
    cache.put("deadbeef", payload)
    assert cache.get("deadbeef") == payload


def test_request_digest_separates_fields():
    base = req().digest()
    assert req(temperature=0.5).digest() != base
    assert ChatRequest(model_id="other", system="sys",
                       messages=(("user", "hello"),)).digest() != base


def test_warm_cache_runs_without_any_network(tmp_path):
    def handler(request):
        return httpx.Response(200, json=chat_reply("net"))

    warm = make_gateway(tmp_path, handler)
    warm.complete(req())

    def explode(request):
        raise AssertionError("network touched with a warm cache")

    cold = make_gateway(tmp_path, explode)
    response = cold.complete(req())
    assert response.from_cache and response.text == "net"


def test_min_temperature_substitution_recorded(tmp_path):
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json=chat_reply("ok"))

    endpoints = {"test-model": EndpointConfig(
        model_id="test-model", url="https://x/c", min_temperature=0.3,
    )}
    gateway = Gateway(endpoints, ResponseCache(tmp_path),
                      transport=httpx.MockTransport(handler))
    response = gateway.complete(req(temperature=0.0))
    assert seen["temperature"] == 0.3
    assert response.temperature_used == 0.3
    # The substitution survives the cache round-trip.
    cached = gateway.complete(req(temperature=0.0))
    assert cached.from_cache and cached.temperature_used == 0.3


def test_scripted_mock_model_determinism():
    mock = ScriptedMockModel()
    request = ChatRequest(
        model_id="mock", system="multiple-choice ... uppercase letter",
        messages=(("user", "Q?\nA. one\nB. two\nC. three\nD. four"),),
    )
    assert mock.reply(request) == mock.reply(request)
    assert mock.reply(request) in {"A", "B", "C", "D"}


def test_mock_endpoint_serves_generation_prompts(tmp_path):
    endpoints = {"mock-chat": EndpointConfig(model_id="mock-chat", url="mock:scripted")}
    gateway = Gateway(endpoints, ResponseCache(tmp_path))
    generator = ModelGenerator(gateway, "mock-chat")
    from xicl.codeswitch import GenerationPolicy, validate_and_regenerate
    from xicl.corpus import ParallelPair
    from xicl.languages import LANGUAGES

    pair = ParallelPair(id="g", source_text="나는 저녁을 빨리 먹었다.",
                        english_text="I ate dinner quickly tonight.",
                        source_lang=LANGUAGES["ko"])
    result = validate_and_regenerate(pair, "tgt_to_en", GenerationPolicy(), generator)
    assert result.valid
