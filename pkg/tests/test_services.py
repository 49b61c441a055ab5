import json
import socket
import threading
import urllib.error
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from scenesmith.retrieval import StubEmbeddingProvider
from scenesmith.services import (
    CallPolicy,
    ProtocolError,
    ResponseCache,
    ServiceClient,
    ServiceEmbeddingProvider,
    ServiceError,
    ServiceOracle,
    is_endpoint,
    make_oracle,
    make_provider,
    request_key,
)


def test_endpoint_syntax():
    assert is_endpoint("stub") and is_endpoint("http://host:9/x") and is_endpoint("https://a.b")
    assert not is_endpoint("ftp://x") and not is_endpoint("localhost:80")


def test_stub_call_writes_cache(tmp_path):
    cache = ResponseCache(tmp_path)
    prov = make_provider("stub", cache, offline=False, dim=8, seed=1)
    v = prov.embed(b"abc")
    assert np.allclose(v, StubEmbeddingProvider(8, 1).embed(b"abc"), atol=1e-15)
    files = list(tmp_path.rglob("*.json"))
    assert len(files) == 1 and files[0].parent.name == files[0].stem[:2]
    assert prov.client.network_calls == 0


def test_retries_then_error_names_endpoint():
    calls, sleeps = [], []

    def down(url, payload, timeout):
        calls.append((url, timeout))
        raise urllib.error.URLError("connection refused")

    client = ServiceClient("http://embed.invalid/v1", "embed", transport=down, sleep=sleeps.append)
    with pytest.raises(ServiceError, match="http://embed.invalid/v1") as exc:
        client.call({"x": 1})
    assert exc.value.endpoint == "http://embed.invalid/v1"
    assert len(calls) == 3 and all(t == 30.0 for _, t in calls)
    assert sleeps == [0.5, 1.0]


def test_recovers_on_second_attempt(tmp_path):
    state = {"n": 0}

    def flaky(url, payload, timeout):
        state["n"] += 1
        if state["n"] == 1:
            raise TimeoutError("slow")
        return {"chosen_id": "a"}

    client = ServiceClient("http://o.invalid", "oracle", cache=ResponseCache(tmp_path), transport=flaky,
                           sleep=lambda s: None)
    assert ServiceOracle(client).choose({"task": "t"}) == {"chosen_id": "a"}
    assert client.network_calls == 2


def test_offline_replay_and_miss(tmp_path):
    cache = ResponseCache(tmp_path)
    online = ServiceClient("http://o.invalid", "oracle", cache=cache, transport=lambda u, p, t: {"v": p["q"]})
    assert online.call({"q": 7}) == {"v": 7}
    replay = ServiceClient("http://o.invalid", "oracle", cache=cache, offline=True,
                           transport=lambda *a: pytest.fail("network used in offline mode"))
    assert replay.call({"q": 7}) == {"v": 7}
    assert replay.network_calls == 0
    with pytest.raises(ServiceError, match="offline"):
        replay.call({"q": 8})


def test_stub_works_offline_without_cache():
    oracle = make_oracle("stub", None, offline=True)
    assert oracle.choose({"task": "mass", "category": "sofa", "volume": 1.44})["mass_kg"] == pytest.approx(86.4)


def test_protocol_errors_carry_path():
    bad = ServiceClient("http://e.invalid", "embed", transport=lambda *a: {"vector": [1, 2]})
    with pytest.raises(ProtocolError) as exc:
        ServiceEmbeddingProvider(bad).embed(b"x")
    assert exc.value.path == "$.embedding"
    zero = ServiceClient("http://e.invalid", "embed", transport=lambda *a: {"embedding": [0, 0]})
    with pytest.raises(ProtocolError):
        ServiceEmbeddingProvider(zero).embed(b"x")
    lst = ServiceClient("http://o.invalid", "oracle", transport=lambda *a: [1, 2])
    with pytest.raises(ProtocolError) as exc:
        ServiceOracle(lst).choose({})
    assert exc.value.path == "$"


def test_request_key_stable_and_kind_scoped():
    assert request_key("a", {"x": 1, "y": 2}) == request_key("a", {"y": 2, "x": 1})
    assert request_key("a", {"x": 1}) != request_key("b", {"x": 1})


class _Echo(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        out = json.dumps({"embedding": [1.0, float(len(body["image"])), 0.0]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


def test_real_http_round_trip(tmp_path):
    server = HTTPServer(("127.0.0.1", 0), _Echo)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/embed"
        prov = make_provider(url, ResponseCache(tmp_path), offline=False, dim=3, seed=0)
        v = prov.embed(b"abcd")
        assert prov.client.network_calls == 1
        assert np.isclose(np.linalg.norm(v), 1.0)
        again = make_provider(url, ResponseCache(tmp_path), offline=True, dim=3, seed=0)
        assert np.array_equal(again.embed(b"abcd"), v)
    finally:
        server.shutdown()


def test_closed_port_fails_after_policy(tmp_path):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    client = ServiceClient(f"http://127.0.0.1:{port}/x", "oracle", policy=CallPolicy(attempts=3, base_delay=0, timeout=1),
                           sleep=lambda s: None)
    with pytest.raises(ServiceError, match="3 attempts failed"):
        client.call({})
    assert client.network_calls == 3
