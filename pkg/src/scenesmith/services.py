"""Clients for the embedding provider and selection oracle.

Every call goes through :func:`service_call`, which retries with exponential
backoff, enforces a timeout and records the request/response pair in a cache
directory keyed by the request hash.  A warm cache can be replayed offline.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .retrieval.providers import StubEmbeddingProvider, StubOracle

logger = logging.getLogger(__name__)


class ServiceError(RuntimeError):
    """Transport failure after all attempts (or an offline cache miss)."""

    def __init__(self, endpoint: str, message: str):
        self.endpoint = endpoint
        super().__init__(f"service {endpoint}: {message}")


class ProtocolError(ServiceError):
    """Response arrived but does not match the protocol."""

    def __init__(self, endpoint: str, path: str, payload):
        self.path = path
        self.payload = payload
        super().__init__(endpoint, f"malformed response at {path}: {payload!r}"[:500])


@dataclass(frozen=True)
class CallPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    timeout: float = 30.0


def is_endpoint(value: str) -> bool:
    if value == "stub":
        return True
    u = urllib.parse.urlparse(value)
    return u.scheme in ("http", "https") and bool(u.netloc)


def request_key(endpoint_kind: str, request: dict) -> str:
    blob = json.dumps({"kind": endpoint_kind, "request": request}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class ResponseCache:
    """One JSON file per request hash under ``root``."""

    def __init__(self, root):
        self.root = Path(root)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str):
        p = self._path(key)
        if not p.is_file():
            return None
        return json.loads(p.read_text())["response"]

    def put(self, key: str, endpoint: str, request: dict, response) -> None:
        p = self._path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_suffix(".tmp")
        tmp.write_text(json.dumps({"endpoint": endpoint, "request": request, "response": response}, sort_keys=True))
        tmp.replace(p)


def http_transport(url: str, payload: dict, timeout: float):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode())


@dataclass
class ServiceClient:
    """Shared call machinery: endpoint, cache, policy and replay mode."""

    endpoint: str
    kind: str
    stub: Callable[[dict], object] | None = None
    cache: ResponseCache | None = None
    policy: CallPolicy = field(default_factory=CallPolicy)
    offline: bool = False
    transport: Callable = http_transport
    sleep: Callable[[float], None] = time.sleep
    network_calls: int = 0

    def call(self, request: dict):
        return service_call(self, request)


def service_call(client: ServiceClient, request: dict):
    """Cached, retried request/response exchange with one endpoint."""
    key = request_key(client.kind, request)
    if client.cache is not None:
        hit = client.cache.get(key)
        if hit is not None:
            return hit
    if client.endpoint == "stub":
        if client.stub is None:
            raise ServiceError(client.endpoint, "no stub handler configured")
        response = client.stub(request)
    elif client.offline:
        raise ServiceError(client.endpoint, f"offline and no cached response for request {key[:12]}")
    else:
        last = None
        response = None
        for attempt in range(client.policy.attempts):
            try:
                client.network_calls += 1
                response = client.transport(client.endpoint, request, client.policy.timeout)
                break
            except (urllib.error.URLError, OSError, TimeoutError, ValueError) as exc:
                last = exc
                logger.warning("call to %s failed (attempt %d): %s", client.endpoint, attempt + 1, exc)
                if attempt + 1 < client.policy.attempts:
                    client.sleep(client.policy.base_delay * 2**attempt)
        else:
            raise ServiceError(client.endpoint, f"{client.policy.attempts} attempts failed; last error: {last}")
    if client.cache is not None:
        client.cache.put(key, client.endpoint, request, response)
    return response


class ServiceEmbeddingProvider:
    """Embedding provider speaking ``{"image": base64} -> {"embedding": [...]}``."""

    def __init__(self, client: ServiceClient, model_tag: str = "remote"):
        self.client = client
        self.model_tag = model_tag

    def embed(self, image: bytes) -> np.ndarray:
        request = {"model": self.model_tag, "image": base64.b64encode(bytes(image)).decode()}
        response = self.client.call(request)
        if not isinstance(response, dict) or "embedding" not in response:
            raise ProtocolError(self.client.endpoint, "$.embedding", response)
        try:
            v = np.asarray(response["embedding"], dtype=float).ravel()
        except (TypeError, ValueError):
            raise ProtocolError(self.client.endpoint, "$.embedding", response["embedding"]) from None
        norm = float(np.linalg.norm(v))
        if v.size == 0 or not np.all(np.isfinite(v)) or norm == 0.0:
            raise ProtocolError(self.client.endpoint, "$.embedding", response["embedding"])
        return v / norm


class ServiceOracle:
    """Selection oracle forwarding the task dict verbatim; the response must be an object."""

    def __init__(self, client: ServiceClient):
        self.client = client

    def choose(self, request: dict) -> dict:
        response = self.client.call(request)
        if not isinstance(response, dict):
            raise ProtocolError(self.client.endpoint, "$", response)
        return response


def make_provider(endpoint: str, cache: ResponseCache | None, offline: bool, dim: int, seed: int,
                  policy: CallPolicy = CallPolicy()) -> ServiceEmbeddingProvider:
    stub = StubEmbeddingProvider(dim=dim, seed=seed)

    def handle(req):
        return {"embedding": stub.embed(base64.b64decode(req["image"])).tolist()}

    tag = stub.model_tag if endpoint == "stub" else "remote"
    client = ServiceClient(endpoint, "embed", stub=handle, cache=cache, policy=policy, offline=offline)
    return ServiceEmbeddingProvider(client, model_tag=tag)


def make_oracle(endpoint: str, cache: ResponseCache | None, offline: bool, densities: dict | None = None,
                default_density: float = 150.0, policy: CallPolicy = CallPolicy()) -> ServiceOracle:
    stub = StubOracle(densities, default_density)
    client = ServiceClient(endpoint, "oracle", stub=stub.choose, cache=cache, policy=policy, offline=offline)
    return ServiceOracle(client)
