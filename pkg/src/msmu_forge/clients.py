"""HTTP clients for the relabel, CoT and judge models.

All endpoints speak the chat-completions wire format::

    POST {base_url}/chat/completions
    {"model": ..., "temperature": 0, "messages": [{"role": "user", "content": [
        {"type": "text", "text": <prompt>},
        {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}]}]}
    -> {"choices": [{"message": {"content": <text>}}]}

``CassetteTransport`` records request/response pairs to a JSON file and
replays them, so tests and offline reruns never need the network.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import ClientError, ClientOffline
from .prompts import DISAMBIGUATION_PROMPT

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model: str = "default"
    token_env: str = "MSMU_API_TOKEN"
    timeout: float = 60.0
    max_in_flight: int = 4
    min_interval: float = 0.0  # seconds between request starts
    cassette: str | None = None
    cassette_mode: str = "replay"  # replay | record


def request_key(method: str, url: str, body: bytes) -> str:
    """Stable hash of a request, ignoring headers (auth must not leak into fixtures)."""
    h = hashlib.sha256()
    h.update(method.upper().encode())
    h.update(b" ")
    h.update(httpx.URL(url).path.encode())
    h.update(b"\n")
    try:
        h.update(json.dumps(json.loads(body), sort_keys=True, separators=(",", ":")).encode())
    except (ValueError, UnicodeDecodeError):
        h.update(body)
    return h.hexdigest()


class CassetteTransport(httpx.BaseTransport):
    def __init__(self, path: str | os.PathLike, mode: str = "replay", inner: httpx.BaseTransport | None = None):
        if mode not in ("replay", "record"):
            raise ValueError(f"cassette mode must be replay or record, got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self.inner = inner
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path.is_file():
            for e in json.loads(self.path.read_text()).get("interactions", []):
                self._entries[e["key"]] = e
        elif mode == "replay":
            raise ClientError(f"cassette not found: {self.path}")

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        body = request.read()
        key = request_key(request.method, str(request.url), body)
        with self._lock:
            hit = self._entries.get(key)
        if hit is not None:
            r = hit["response"]
            return httpx.Response(r["status"], json=r["body"], request=request)
        if self.mode == "replay":
            raise ClientError(f"no recorded response for request {key[:12]} in {self.path}")
        inner = self.inner or httpx.HTTPTransport()
        resp = inner.handle_request(request)
        resp.read()
        try:
            payload = resp.json()
        except ValueError:
            payload = {"raw": resp.text}
        try:
            req_json = json.loads(body)
        except ValueError:
            req_json = body.decode(errors="replace")
        with self._lock:
            self._entries[key] = {
                "key": key,
                "request": {"method": request.method, "path": request.url.path, "body": req_json},
                "response": {"status": resp.status_code, "body": payload},
            }
            self._save()
        return httpx.Response(resp.status_code, json=payload, request=request)

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        data = {"interactions": [self._entries[k] for k in sorted(self._entries)]}
        self.path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


class ChatClient:
    """Minimal chat-completions client with one retry on transport failures."""

    def __init__(self, cfg: EndpointConfig | None = None, offline: bool = False, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg or EndpointConfig()
        self.offline = offline
        self._rate_lock = threading.Lock()
        self._last_start = 0.0
        self._sem = threading.BoundedSemaphore(max(1, self.cfg.max_in_flight))
        self._http: httpx.Client | None = None
        if not offline:
            if transport is None and self.cfg.cassette:
                transport = CassetteTransport(self.cfg.cassette, self.cfg.cassette_mode)
            headers = {}
            token = os.environ.get(self.cfg.token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
            self._http = httpx.Client(
                base_url=self.cfg.base_url.rstrip("/") + "/",
                headers=headers,
                timeout=self.cfg.timeout,
                transport=transport,
            )

    def close(self) -> None:
        if self._http is not None:
            self._http.close()

    def __enter__(self) -> "ChatClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _throttle(self) -> None:
        if self.cfg.min_interval <= 0:
            return
        with self._rate_lock:
            wait = self._last_start + self.cfg.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_start = time.monotonic()

    def _payload(self, prompt: str, image: bytes | None, system: str | None) -> dict:
        content: list[dict] = [{"type": "text", "text": prompt}]
        if image is not None:
            url = "data:image/png;base64," + base64.b64encode(image).decode()
            content.append({"type": "image_url", "image_url": {"url": url}})
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": content})
        return {"model": self.cfg.model, "temperature": 0, "messages": messages}

    def complete(self, prompt: str, image: bytes | None = None, system: str | None = None) -> str:
        if self.offline or self._http is None:
            raise ClientOffline("client is offline")
        payload = self._payload(prompt, image, system)
        last_exc: Exception | None = None
        for attempt in range(2):
            with self._sem:
                self._throttle()
                try:
                    resp = self._http.post("chat/completions", json=payload)
                except httpx.TransportError as exc:
                    last_exc = exc
                    log.warning("transport failure (attempt %d): %s", attempt + 1, exc)
                    continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_exc = ClientError(f"HTTP {resp.status_code}")
                log.warning("server error %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise ClientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return str(resp.json()["choices"][0]["message"]["content"])
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ClientError(f"malformed completion response: {resp.text[:200]}") from exc
        raise ClientError(f"request failed after retry: {last_exc}")


def clean_term(text: str) -> str:
    """First line of a short answer, stripped of quotes and trailing punctuation."""
    line = text.strip().splitlines()[0] if text.strip() else ""
    if line.lower().startswith("output:"):
        line = line[len("output:") :]
    return line.strip().strip("\"'`").rstrip(".!;,").strip()


class RelabelClient:
    """Asks a vision model for a short distinguishing term for one object crop."""

    def __init__(self, chat: ChatClient):
        self.chat = chat

    @property
    def offline(self) -> bool:
        return self.chat.offline

    def relabel(self, crop_png: bytes) -> str:
        term = clean_term(self.chat.complete(DISAMBIGUATION_PROMPT, image=crop_png))
        if not term:
            raise ClientError("empty relabel term")
        return term
