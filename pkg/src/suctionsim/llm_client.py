"""Multi-modal chat-completion client with deterministic record/replay.

The wire format follows the widely deployed chat-completions JSON schema
with image content parts, so any compatible hosted or local server works.
Cassettes are versioned JSON files keyed by a stable request fingerprint;
replay misses are hard errors so offline runs can never silently go live.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CassetteError, RateLimited, ReplayMiss, TransportError

CASSETTE_VERSION = 1
MAX_IMAGE_BYTES = 20 * 1024 * 1024


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system: str
    user: str
    image_b64: str | None = None
    image_media_type: str = "image/png"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 30.0  # volatile: excluded from the fingerprint

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.image_b64 is not None and len(self.image_b64) * 3 // 4 > MAX_IMAGE_BYTES:
            raise ValueError("inline image exceeds the configured byte cap")


def fingerprint(request: ChatRequest) -> str:
    """Stable across platforms: canonical UTF-8 JSON, fixed field order,
    image reduced to its own digest."""
    image_digest = None
    if request.image_b64 is not None:
        image_digest = hashlib.sha256(request.image_b64.encode("ascii")).hexdigest()
    canon = json.dumps(
        {
            "model": request.model,
            "system": request.system,
            "user": request.user,
            "image_sha256": image_digest,
            "image_media_type": request.image_media_type,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class Cassette:
    entries: dict = field(default_factory=dict)  # fingerprint -> {response, latency}
    order: list = field(default_factory=list)

    def add(self, fp: str, response: str, latency: float = 0.0) -> None:
        if fp in self.entries:
            raise CassetteError(f"duplicate fingerprint {fp}")
        self.entries[fp] = {"response": response, "latency": latency}
        self.order.append(fp)

    def lookup(self, fp: str) -> str:
        if fp not in self.entries:
            raise ReplayMiss(fp)
        return self.entries[fp]["response"]

    def save(self, path: str | Path) -> None:
        doc = {
            "version": CASSETTE_VERSION,
            "entries": [
                {"fingerprint": fp, **self.entries[fp]} for fp in self.order
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def __eq__(self, other) -> bool:
        return isinstance(other, Cassette) and self.entries == other.entries and self.order == other.order


def load_cassette(path: str | Path) -> Cassette:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CassetteError(f"unreadable cassette {path}: {exc}") from exc
    if doc.get("version") != CASSETTE_VERSION:
        raise CassetteError(f"cassette schema version {doc.get('version')} unsupported")
    cassette = Cassette()
    for entry in doc.get("entries", []):
        cassette.add(entry["fingerprint"], entry["response"], entry.get("latency", 0.0))
    return cassette


class TokenBucket:
    def __init__(self, rate_per_sec: float = 1.0, burst: int = 2):
        self.rate = rate_per_sec
        self.capacity = burst
        self.tokens = float(burst)
        self.stamp = time.monotonic()

    def acquire(self) -> None:
        while True:
            now = time.monotonic()
            self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
            self.stamp = now
            if self.tokens >= 1.0:
                self.tokens -= 1.0
                return
            time.sleep((1.0 - self.tokens) / self.rate)


class ChatClient:
    """`replay` mode serves a loaded cassette; `live` posts to the endpoint
    (and records into the active cassette when recording is enabled)."""

    def __init__(
        self,
        mode: str = "replay",
        cassette: Cassette | None = None,
        base_url: str | None = None,
        api_key_env: str = "SUCTIONSIM_API_KEY",
        record: bool = False,
        rate_per_sec: float = 1.0,
    ):
        if mode not in ("replay", "live"):
            raise ValueError(f"unknown client mode {mode!r}")
        self.mode = mode
        self.cassette = cassette if cassette is not None else Cassette()
        self.base_url = base_url
        self.api_key_env = api_key_env
        self.record = record
        self.bucket = TokenBucket(rate_per_sec)

    def complete(self, request: ChatRequest) -> str:
        fp = fingerprint(request)
        if self.mode == "replay":
            return self.cassette.lookup(fp)
        return self._complete_live(request, fp)

    def _complete_live(self, request: ChatRequest, fp: str) -> str:
        import requests

        if not self.base_url:
            raise TransportError("live mode requires a base URL")
        self.bucket.acquire()
        content: list[dict] = [{"type": "text", "text": request.user}]
        if request.image_b64 is not None:
            content.append(
                {
                    "type": "image_url",
                    "image_url": {
                        "url": f"data:{request.image_media_type};base64,{request.image_b64}"
                    },
                }
            )
        payload = {
            "model": request.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": content},
            ],
        }
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        start = time.monotonic()
        try:
            resp = requests.post(
                f"{self.base_url.rstrip('/')}/chat/completions",
                json=payload,
                headers=headers,
                timeout=request.timeout,
            )
        except requests.Timeout as exc:
            raise TransportError(f"request timed out after {request.timeout}s") from exc
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429:
            retry_after = resp.headers.get("Retry-After")
            raise RateLimited(float(retry_after) if retry_after else None)
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed response body: {exc}") from exc
        if self.record:
            if fp not in self.cassette.entries:
                self.cassette.add(fp, text, time.monotonic() - start)
        return text
