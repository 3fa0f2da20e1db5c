"""Batch driver for chat-completion endpoints: bounded concurrency, retries
with exponential backoff, crash-safe checkpointing, deterministic result order.

Requests use the chat-completions JSON schema with multimodal content parts
(text plus image entries). Images ship base64-inline by default; URL mode
passes frame references through untouched. The API key is read from the
configured environment variable and never logged.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import requests

from .prompts import IMAGE_MARKER, PromptBundle

log = logging.getLogger(__name__)

IMAGE_TRANSPORTS = ("base64_inline", "url")

#: Test hook: crash the process (as if killed) after N checkpoint writes.
CRASH_AFTER_ENV = "PROGRESSKIT_EVAL_CRASH_AFTER"

_MIME_BY_SUFFIX = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".gif": "image/gif",
    ".webp": "image/webp",
}


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    """Connection and sampling settings for one chat-completion endpoint."""

    base_url: str
    model_name: str
    api_key_env_var: str = ""
    temperature: float = 0.6
    top_p: float = 0.9
    max_tokens: int = 4096
    request_timeout: float = 120.0
    max_retries: int = 3
    max_in_flight: int = 4
    image_transport: str = "base64_inline"
    retry_base_delay: float = 1.0

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigInvalid("base_url is required")
        if self.temperature < 0:
            raise ConfigInvalid("temperature must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigInvalid("max_in_flight must be >= 1")
        if self.image_transport not in IMAGE_TRANSPORTS:
            raise ConfigInvalid(
                f"image_transport must be one of {IMAGE_TRANSPORTS}, "
                f"got {self.image_transport!r}"
            )


@dataclass(frozen=True)
class RawResponse:
    """One endpoint result: exactly one of response_text / error is populated."""

    instance_id: str
    request_fingerprint: str
    response_text: str | None = None
    error: str | None = None
    latency_ms: float = 0.0
    attempt_count: int = 1
    template_id: str = ""

    def __post_init__(self) -> None:
        if (self.response_text is None) == (self.error is None):
            raise ValueError("exactly one of response_text / error must be set")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "instance_id": self.instance_id,
            "request_fingerprint": self.request_fingerprint,
            "latency_ms": self.latency_ms,
            "attempt_count": self.attempt_count,
            "template_id": self.template_id,
        }
        if self.response_text is not None:
            d["response_text"] = self.response_text
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RawResponse":
        return cls(
            instance_id=d["instance_id"],
            request_fingerprint=d["request_fingerprint"],
            response_text=d.get("response_text"),
            error=d.get("error"),
            latency_ms=float(d.get("latency_ms", 0.0)),
            attempt_count=int(d.get("attempt_count", 1)),
            template_id=d.get("template_id", ""),
        )


def request_fingerprint(template_id: str, model_name: str, instance_id: str) -> str:
    payload = "\x1f".join((template_id, model_name, instance_id))
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=16).hexdigest()


def encode_image_ref(ref: str, transport: str) -> str:
    """Frame reference to an image URL: data URI (base64) or pass-through."""
    if transport == "url":
        return ref
    path = Path(ref)
    mime = _MIME_BY_SUFFIX.get(path.suffix.lower(), "image/png")
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:{mime};base64,{data}"


def build_payload(bundle: PromptBundle, cfg: EndpointConfig) -> dict[str, Any]:
    """Chat-completions payload with text and image parts interleaved in slot order."""
    parts: list[dict[str, Any]] = []
    segments = bundle.text.split(IMAGE_MARKER)
    for i, segment in enumerate(segments):
        if segment:
            parts.append({"type": "text", "text": segment})
        if i < len(bundle.image_slots):
            _, ref = bundle.image_slots[i]
            parts.append(
                {
                    "type": "image_url",
                    "image_url": {"url": encode_image_ref(ref, cfg.image_transport)},
                }
            )
    return {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": parts}],
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "max_tokens": cfg.max_tokens,
    }


def _extract_text(response_json: dict[str, Any]) -> str:
    choices = response_json.get("choices") or []
    if not choices:
        return ""
    message = choices[0].get("message") or {}
    content = message.get("content")
    if isinstance(content, list):  # some servers return content parts
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return content or ""


def _request_one(
    bundle: PromptBundle,
    cfg: EndpointConfig,
    headers: dict[str, str],
    session: requests.Session,
) -> RawResponse:
    fingerprint = request_fingerprint(bundle.template_id, cfg.model_name, bundle.instance_id)
    start = time.monotonic()
    try:
        payload = build_payload(bundle, cfg)
    except OSError as exc:
        return RawResponse(
            instance_id=bundle.instance_id,
            request_fingerprint=fingerprint,
            error=f"image_unreadable: {exc}",
            latency_ms=0.0,
            attempt_count=0,
            template_id=bundle.template_id,
        )
    last_error = ""
    attempts = 0
    for attempt in range(cfg.max_retries + 1):
        attempts = attempt + 1
        try:
            resp = session.post(
                cfg.base_url.rstrip("/") + "/chat/completions",
                json=payload,
                headers=headers,
                timeout=cfg.request_timeout,
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_error = f"network: {exc}"
        else:
            if resp.status_code == 200:
                text = _extract_text(resp.json())
                return RawResponse(
                    instance_id=bundle.instance_id,
                    request_fingerprint=fingerprint,
                    response_text=text,
                    latency_ms=1000.0 * (time.monotonic() - start),
                    attempt_count=attempts,
                    template_id=bundle.template_id,
                )
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"http_{resp.status_code}"
            else:
                # Terminal: auth failures and other 4xx never resolve by retrying.
                return RawResponse(
                    instance_id=bundle.instance_id,
                    request_fingerprint=fingerprint,
                    error=f"http_{resp.status_code}",
                    latency_ms=1000.0 * (time.monotonic() - start),
                    attempt_count=attempts,
                    template_id=bundle.template_id,
                )
        if attempt < cfg.max_retries:
            time.sleep(cfg.retry_base_delay * (2**attempt))
    return RawResponse(
        instance_id=bundle.instance_id,
        request_fingerprint=fingerprint,
        error=f"exhausted_retries: {last_error}",
        latency_ms=1000.0 * (time.monotonic() - start),
        attempt_count=attempts,
        template_id=bundle.template_id,
    )


def load_checkpoint(path: str | Path) -> dict[str, RawResponse]:
    """Completed fingerprints from a checkpoint log (latest entry wins).

    Entries holding a terminal error are not treated as completed; a re-run
    attempts them again.
    """
    done: dict[str, RawResponse] = {}
    path = Path(path)
    if not path.exists():
        return done
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                r = RawResponse.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError):
                continue  # torn tail write from a crash
            if r.response_text is not None:
                done[r.request_fingerprint] = r
    return done


def run_batch(
    bundles: Sequence[PromptBundle],
    cfg: EndpointConfig,
    checkpoint_path: str | Path | None = None,
) -> list[RawResponse]:
    """Drive all bundles against the endpoint; results come back in input order.

    At most ``max_in_flight`` requests run concurrently. Every completed
    request is appended to the checkpoint log (flushed and fsynced) before the
    batch can finish, so a killed run resumes by skipping fingerprints that
    already hold a response. Per-sample terminal errors never abort the batch.
    """
    done = load_checkpoint(checkpoint_path) if checkpoint_path else {}
    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env_var:
        key = os.environ.get(cfg.api_key_env_var, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"

    fingerprints = [
        request_fingerprint(b.template_id, cfg.model_name, b.instance_id) for b in bundles
    ]
    todo = [b for b, fp in zip(bundles, fingerprints) if fp not in done]
    log.info("running %d requests (%d cached)", len(todo), len(bundles) - len(todo))

    crash_after = int(os.environ.get(CRASH_AFTER_ENV, "0") or "0")
    results: dict[str, RawResponse] = dict(done)
    write_lock = threading.Lock()
    writes = 0

    checkpoint_file = None
    if checkpoint_path:
        checkpoint_file = open(checkpoint_path, "a", encoding="utf-8")

    session = requests.Session()
    try:
        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            futures = [pool.submit(_request_one, b, cfg, headers, session) for b in todo]
            for future in as_completed(futures):
                r = future.result()
                with write_lock:
                    results[r.request_fingerprint] = r
                    if checkpoint_file is not None:
                        checkpoint_file.write(json.dumps(r.to_dict(), ensure_ascii=False))
                        checkpoint_file.write("\n")
                        checkpoint_file.flush()
                        os.fsync(checkpoint_file.fileno())
                    writes += 1
                    if crash_after and writes >= crash_after:
                        log.warning("crash hook: exiting after %d writes", writes)
                        os._exit(137)
    finally:
        if checkpoint_file is not None:
            checkpoint_file.close()
        session.close()
    return [results[fp] for fp in fingerprints]


def write_responses(path: str | Path, responses: Iterable[RawResponse]) -> int:
    from .model import write_jsonl

    return write_jsonl(path, (r.to_dict() for r in responses))


def read_responses(path: str | Path) -> list[RawResponse]:
    from .model import read_jsonl

    return [RawResponse.from_dict(d) for d in read_jsonl(path)]
