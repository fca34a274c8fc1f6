"""Pluggable text generators with record/replay for deterministic audit.

A generator maps a request document plus a seed to a response document.
Live exchanges are recorded one file per exchange, keyed by the request
hash, so any run can be replayed byte-deterministically later. Endpoint
and credential come from environment configuration (AGENTLINE_GENERATOR_URL,
AGENTLINE_GENERATOR_API_KEY); values are never logged.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .canonical import canonical_json, sha256_hex

logger = logging.getLogger(__name__)

GENERATOR_URL_ENV = "AGENTLINE_GENERATOR_URL"
GENERATOR_KEY_ENV = "AGENTLINE_GENERATOR_API_KEY"


class GeneratorError(RuntimeError):
    pass


class ReplayMiss(GeneratorError):
    """Replay store has no recording for the requested exchange."""


class Generator(Protocol):
    def generate(self, request: str, seed: int) -> str: ...


def exchange_key(request: str, seed: int) -> str:
    return sha256_hex(canonical_json({"request": request, "seed": seed}))


@dataclass
class ReplayGenerator:
    """Byte-deterministic playback of previously recorded exchanges."""

    store: Path

    def generate(self, request: str, seed: int) -> str:
        path = Path(self.store) / f"{exchange_key(request, seed)}.json"
        if not path.exists():
            raise ReplayMiss(f"no recorded exchange at {path.name}")
        data = json.loads(path.read_text(encoding="utf-8"))
        return data["response"]


class RecordingGenerator:
    """Wraps a live generator and archives every exchange for audit/replay."""

    def __init__(self, inner: Generator, store: Path):
        self.inner = inner
        self.store = Path(store)
        self.store.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def generate(self, request: str, seed: int) -> str:
        response = self.inner.generate(request, seed)
        path = self.store / f"{exchange_key(request, seed)}.json"
        with self._lock:
            path.write_text(
                canonical_json({"request": request, "seed": seed, "response": response}),
                encoding="utf-8",
            )
        return response


@dataclass
class HttpGenerator:
    """Minimal live client: POST {prompt, seed} to the configured endpoint.

    The endpoint must answer ``{"text": ...}``. Construction fails fast when
    the environment is not configured; the credential is read lazily per
    request and never logged.
    """

    url: str | None = None
    timeout: float = 120.0
    transport: httpx.BaseTransport | None = None

    def generate(self, request: str, seed: int) -> str:
        url = self.url or os.environ.get(GENERATOR_URL_ENV)
        if not url:
            raise GeneratorError(f"live generator requires {GENERATOR_URL_ENV}")
        headers = {}
        api_key = os.environ.get(GENERATOR_KEY_ENV)
        if api_key:
            headers["authorization"] = f"Bearer {api_key}"
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            response = client.post(url, json={"prompt": request, "seed": seed}, headers=headers)
            response.raise_for_status()
            return response.json()["text"]


@dataclass
class StaticGenerator:
    """Test double returning a fixed response for every request."""

    response: str

    def generate(self, request: str, seed: int) -> str:
        return self.response


class CallableGenerator:
    """Test double delegating to a plain function."""

    def __init__(self, fn):
        self.fn = fn

    def generate(self, request: str, seed: int) -> str:
        return self.fn(request, seed)


__all__ = [
    "Generator",
    "GeneratorError",
    "ReplayMiss",
    "ReplayGenerator",
    "RecordingGenerator",
    "HttpGenerator",
    "StaticGenerator",
    "CallableGenerator",
    "exchange_key",
]
