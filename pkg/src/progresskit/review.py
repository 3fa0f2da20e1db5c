"""HTTP review service for the human filtering stage.

Serves pending unanswerable-vision candidates to annotators, persists
keep/discard verdicts as an append-only JSONL event log (fsynced before the
request is acknowledged), and optionally serves the static review UI. On
restart, already-decided candidates are never re-served; a repeated verdict
for the same candidate supersedes the earlier one (last write wins).
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from .model import ReviewCandidate, read_candidates

log = logging.getLogger(__name__)

VERDICTS = ("keep", "discard")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class ReviewState:
    """Candidate queue plus the durable decision log."""

    def __init__(self, candidates: list[ReviewCandidate], decisions_path: str | Path) -> None:
        self.candidates = candidates
        self.by_id = {c.candidate_id: c for c in candidates}
        self.decisions_path = Path(decisions_path)
        self.decided: dict[str, str] = {}
        self.lock = threading.Lock()
        self._replay()

    def _replay(self) -> None:
        if not self.decisions_path.exists():
            return
        with open(self.decisions_path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail write
                if event.get("verdict") in VERDICTS and "candidate_id" in event:
                    self.decided[event["candidate_id"]] = event["verdict"]

    def next_candidate(self) -> ReviewCandidate | None:
        with self.lock:
            for c in self.candidates:
                if c.candidate_id not in self.decided:
                    return c
        return None

    def record(self, candidate_id: str, verdict: str, annotator: str) -> None:
        """Append the decision durably, then update in-memory state."""
        event = {
            "candidate_id": candidate_id,
            "verdict": verdict,
            "annotator": annotator,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        with self.lock:
            with open(self.decisions_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(event, ensure_ascii=False))
                f.write("\n")
                f.flush()
                os.fsync(f.fileno())
            self.decided[candidate_id] = verdict

    def progress(self) -> dict[str, Any]:
        with self.lock:
            decided = len(self.decided)
            keeps = sum(1 for v in self.decided.values() if v == "keep")
            return {
                "decided": decided,
                "remaining": len(self.candidates) - decided,
                "keep_rate": (keeps / decided) if decided else 0.0,
            }


def load_decisions(path: str | Path) -> dict[str, str]:
    """Latest verdict per candidate from a decision log."""
    state_path = Path(path)
    decided: dict[str, str] = {}
    if not state_path.exists():
        return decided
    with open(state_path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                continue
            if event.get("verdict") in VERDICTS and "candidate_id" in event:
                decided[event["candidate_id"]] = event["verdict"]
    return decided


class _ReviewHandler(BaseHTTPRequestHandler):
    def _state(self) -> ReviewState:
        return self.server.state  # type: ignore[attr-defined]

    def _ui_dir(self) -> Path | None:
        return self.server.ui_dir  # type: ignore[attr-defined]

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        path = self.path.split("?", 1)[0]
        if path == "/api/candidates/next":
            candidate = self._state().next_candidate()
            if candidate is None:
                self.send_response(204)
                self.end_headers()
                return
            payload = candidate.to_dict()
            payload["id"] = payload.pop("candidate_id")
            self._send_json(200, payload)
            return
        if path == "/api/progress":
            self._send_json(200, self._state().progress())
            return
        parts = [p for p in path.split("/") if p]
        if len(parts) == 5 and parts[:2] == ["api", "candidates"] and parts[3] == "image":
            self._serve_candidate_image(parts[2], parts[4])
            return
        self._serve_static(path)

    def do_POST(self) -> None:  # noqa: N802
        parts = [p for p in self.path.split("?", 1)[0].split("/") if p]
        if len(parts) != 4 or parts[:2] != ["api", "candidates"] or parts[3] != "decision":
            self.send_error(404)
            return
        candidate_id = parts[2]
        state = self._state()
        if candidate_id not in state.by_id:
            self._send_json(400, {"error": f"unknown candidate {candidate_id!r}"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            self._send_json(400, {"error": "body must be JSON"})
            return
        verdict = body.get("verdict")
        if verdict not in VERDICTS:
            self._send_json(400, {"error": f"verdict must be one of {list(VERDICTS)}"})
            return
        annotator = str(body.get("annotator", "anonymous"))
        state.record(candidate_id, verdict, annotator)
        self._send_json(200, {"ok": True, "candidate_id": candidate_id, "verdict": verdict})

    def _serve_candidate_image(self, candidate_id: str, which: str) -> None:
        state = self._state()
        candidate = state.by_id.get(candidate_id)
        if candidate is None or which not in ("original", "edited"):
            self.send_error(404)
            return
        ref = candidate.original_image_ref if which == "original" else candidate.edited_image_ref
        path = Path(ref)
        if not path.is_file():
            self.send_error(404, "image not found")
            return
        data = path.read_bytes()
        self.send_response(200)
        self.send_header(
            "Content-Type", _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        )
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _serve_static(self, path: str) -> None:
        ui_dir = self._ui_dir()
        if ui_dir is None:
            self.send_error(404, "no UI directory configured")
            return
        rel = path.lstrip("/") or "index.html"
        target = (ui_dir / rel).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            self.send_error(404)
            return
        data = target.read_bytes()
        self.send_response(200)
        self.send_header(
            "Content-Type", _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        )
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_json(self, status: int, obj: dict[str, Any]) -> None:
        data = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("review: " + fmt, *args)


class ReviewServer:
    """Threaded review API server; start()/stop() for tests, serve() for the CLI."""

    def __init__(
        self,
        pending_path: str | Path,
        decisions_path: str | Path,
        host: str = "127.0.0.1",
        port: int = 8765,
        ui_dir: str | Path | None = None,
    ) -> None:
        candidates = read_candidates(pending_path)
        self.state = ReviewState(candidates, decisions_path)
        self._server = ThreadingHTTPServer((host, port), _ReviewHandler)
        self._server.state = self.state  # type: ignore[attr-defined]
        self._server.ui_dir = Path(ui_dir) if ui_dir else None  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve(self) -> None:
        self._server.serve_forever()
