"""Local chat-completions endpoint for offline pipeline runs and tests.

Responses are a pure function of the request content (a stable hash drives
the reference index, the score, and occasional abstentions), so repeated runs
produce byte-identical evaluation outputs. The responder honors the prompt's
schema: prompts without reasoning tags get a score-only reply.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from collections import defaultdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

_STEP_LINE_RE = re.compile(r"^Step \d+\.", re.MULTILINE)


def scripted_response(text: str, n_images: int) -> str:
    """Deterministic response text for one prompt."""
    h = int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")
    wants_reasoning = "<ref_think>" in text
    if n_images > 1:
        n_steps = max(2, n_images - 1)  # demo frames plus one observation
    else:
        n_steps = max(2, len(_STEP_LINE_RE.findall(text)))
    if h % 10 == 0:
        if wants_reasoning:
            return (
                "<ref_think>The current state does not match any demonstration step."
                "</ref_think>\n<ref>n/a</ref>\n<score_think>n/a</score_think>\n"
                "<score>n/a</score>"
            )
        return "<score>n/a</score>"
    ref = 1 + (h // 11) % n_steps
    score = (h // 7) % 101
    if wants_reasoning:
        return (
            f"<ref_think>The current state is closest to demonstration step {ref}."
            f"</ref_think>\n<ref>{ref}</ref>\n"
            f"<score_think>Comparing against step {ref}, the task looks {score}% done."
            f"</score_think>\n<score>{score}%</score>"
        )
    return f"<score>{score}%</score>"


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        if not self.path.endswith("/chat/completions"):
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        endpoint: MockChatEndpoint = self.server.endpoint  # type: ignore[attr-defined]
        with endpoint.lock:
            endpoint.request_log.append(body)
        try:
            payload = json.loads(body)
            text, n_images = _flatten_content(payload)
        except (json.JSONDecodeError, KeyError):
            self._send_json(400, {"error": "bad request"})
            return
        key = hashlib.blake2b(body, digest_size=8).hexdigest()
        with endpoint.lock:
            endpoint.seen[key] += 1
            attempt = endpoint.seen[key]
        if attempt <= endpoint.fail_per_request:
            self._send_json(500, {"error": "injected failure"})
            return
        content = endpoint.fixed_text or scripted_response(text, n_images)
        self._send_json(
            200,
            {"choices": [{"message": {"role": "assistant", "content": content}}]},
        )

    def _send_json(self, status: int, obj: dict[str, Any]) -> None:
        data = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt: str, *args: Any) -> None:  # silence per-request noise
        pass


def _flatten_content(payload: dict[str, Any]) -> tuple[str, int]:
    """Prompt text plus image URLs (so distinct images yield distinct hashes)."""
    texts: list[str] = []
    n_images = 0
    for message in payload["messages"]:
        content = message.get("content", "")
        if isinstance(content, str):
            texts.append(content)
            continue
        for part in content:
            if part.get("type") == "text":
                texts.append(part.get("text", ""))
            elif part.get("type") == "image_url":
                n_images += 1
                texts.append(part.get("image_url", {}).get("url", ""))
    return "".join(texts), n_images


class MockChatEndpoint:
    """Threaded local server speaking just enough of the chat-completions protocol."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        fixed_text: str | None = None,
        fail_per_request: int = 0,
    ) -> None:
        self.fixed_text = fixed_text
        self.fail_per_request = fail_per_request
        self.request_log: list[bytes] = []
        self.seen: dict[str, int] = defaultdict(int)
        self.lock = threading.Lock()
        self._server = ThreadingHTTPServer((host, port), _Handler)
        # Hand the handler a back-reference through the server object.
        self._server.endpoint = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "MockChatEndpoint":
        self.start()
        return self

    def __exit__(self, *exc: Any) -> None:
        self.stop()

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
