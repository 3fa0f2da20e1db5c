import json
from pathlib import Path

import pytest
import requests

from progresskit.model import ReviewCandidate, write_candidates
from progresskit.review import ReviewServer, load_decisions


def make_candidates(tmp_path: Path, n: int = 5) -> Path:
    frames = tmp_path / "frames"
    frames.mkdir(exist_ok=True)
    candidates = []
    for i in range(n):
        orig = frames / f"orig_{i}.png"
        edit = frames / f"edit_{i}.png"
        orig.write_bytes(b"\x89PNG-original-%d" % i)
        edit.write_bytes(b"\x89PNG-edited-%d" % i)
        candidates.append(
            ReviewCandidate(
                candidate_id=f"cand-{i}",
                source_instance_id=f"inst-{i}",
                trajectory_id="t1",
                original_image_ref=str(orig),
                edited_image_ref=str(edit),
                task_goal="stack the cubes",
                steps=(f"step one {i}", "step two"),
                strategy="Object Replacement",
                edit_prompt="replace the cube with a sphere",
            )
        )
    pending = tmp_path / "pending.jsonl"
    write_candidates(pending, candidates)
    return pending


@pytest.fixture
def server(tmp_path):
    pending = make_candidates(tmp_path)
    srv = ReviewServer(pending, tmp_path / "decisions.jsonl", port=0)
    srv.start()
    yield srv
    srv.stop()


class TestReviewApi:
    def test_next_candidate_on_fresh_queue(self, server):
        r = requests.get(f"{server.url}/api/candidates/next", timeout=5)
        assert r.status_code == 200
        body = r.json()
        assert body["id"] == "cand-0"
        assert body["task_goal"] == "stack the cubes"
        assert body["steps"] == ["step one 0", "step two"]
        assert body["strategy"] == "Object Replacement"

    def test_decide_then_next_advances(self, server):
        first = requests.get(f"{server.url}/api/candidates/next", timeout=5).json()
        r = requests.post(
            f"{server.url}/api/candidates/{first['id']}/decision",
            json={"verdict": "keep", "annotator": "alice"},
            timeout=5,
        )
        assert r.status_code == 200
        nxt = requests.get(f"{server.url}/api/candidates/next", timeout=5).json()
        assert nxt["id"] != first["id"]

    def test_unknown_candidate_rejected(self, server):
        r = requests.post(
            f"{server.url}/api/candidates/ghost/decision",
            json={"verdict": "keep", "annotator": "alice"},
            timeout=5,
        )
        assert r.status_code == 400

    def test_bad_verdict_rejected(self, server):
        r = requests.post(
            f"{server.url}/api/candidates/cand-0/decision",
            json={"verdict": "maybe", "annotator": "alice"},
            timeout=5,
        )
        assert r.status_code == 400
        assert "verdict" in r.json()["error"]

    def test_malformed_body_rejected(self, server):
        r = requests.post(
            f"{server.url}/api/candidates/cand-0/decision",
            data="not json",
            timeout=5,
        )
        assert r.status_code == 400

    def test_progress_endpoint(self, server):
        requests.post(
            f"{server.url}/api/candidates/cand-0/decision",
            json={"verdict": "keep", "annotator": "a"},
            timeout=5,
        )
        requests.post(
            f"{server.url}/api/candidates/cand-1/decision",
            json={"verdict": "discard", "annotator": "a"},
            timeout=5,
        )
        body = requests.get(f"{server.url}/api/progress", timeout=5).json()
        assert body == {"decided": 2, "remaining": 3, "keep_rate": 0.5}

    def test_image_endpoints(self, server):
        orig = requests.get(f"{server.url}/api/candidates/cand-2/image/original", timeout=5)
        edit = requests.get(f"{server.url}/api/candidates/cand-2/image/edited", timeout=5)
        assert orig.status_code == 200 and orig.content == b"\x89PNG-original-2"
        assert edit.status_code == 200 and edit.content == b"\x89PNG-edited-2"
        assert orig.headers["Content-Type"] == "image/png"

    def test_queue_drains_to_204(self, server):
        for i in range(5):
            requests.post(
                f"{server.url}/api/candidates/cand-{i}/decision",
                json={"verdict": "discard", "annotator": "a"},
                timeout=5,
            )
        r = requests.get(f"{server.url}/api/candidates/next", timeout=5)
        assert r.status_code == 204

    def test_superseding_decision_last_write_wins(self, server, tmp_path):
        url = f"{server.url}/api/candidates/cand-0/decision"
        requests.post(url, json={"verdict": "keep", "annotator": "a"}, timeout=5)
        requests.post(url, json={"verdict": "discard", "annotator": "a"}, timeout=5)
        progress = requests.get(f"{server.url}/api/progress", timeout=5).json()
        assert progress["decided"] == 1 and progress["keep_rate"] == 0.0
        events = [json.loads(l) for l in (tmp_path / "decisions.jsonl").read_text().splitlines()]
        assert [e["verdict"] for e in events] == ["keep", "discard"]  # history retained
        assert load_decisions(tmp_path / "decisions.jsonl") == {"cand-0": "discard"}


class TestRestart:
    def test_decided_candidates_not_reserved_after_restart(self, tmp_path):
        pending = make_candidates(tmp_path)
        decisions = tmp_path / "decisions.jsonl"
        srv = ReviewServer(pending, decisions, port=0)
        srv.start()
        try:
            for i in range(2):
                requests.post(
                    f"{srv.url}/api/candidates/cand-{i}/decision",
                    json={"verdict": "keep", "annotator": "a"},
                    timeout=5,
                )
        finally:
            srv.stop()

        srv2 = ReviewServer(pending, decisions, port=0)
        srv2.start()
        try:
            nxt = requests.get(f"{srv2.url}/api/candidates/next", timeout=5).json()
            assert nxt["id"] == "cand-2"
            progress = requests.get(f"{srv2.url}/api/progress", timeout=5).json()
            assert progress["decided"] == 2 and progress["remaining"] == 3
        finally:
            srv2.stop()

    def test_torn_decision_line_ignored(self, tmp_path):
        pending = make_candidates(tmp_path)
        decisions = tmp_path / "decisions.jsonl"
        decisions.write_text(
            json.dumps({"candidate_id": "cand-0", "verdict": "keep", "annotator": "a",
                        "timestamp": "2026-01-01T00:00:00"}) + "\n" + '{"candidate_id": "cand'
        )
        srv = ReviewServer(pending, decisions, port=0)
        srv.start()
        try:
            nxt = requests.get(f"{srv.url}/api/candidates/next", timeout=5).json()
            assert nxt["id"] == "cand-1"
        finally:
            srv.stop()


class TestStaticUi:
    def test_serves_ui_directory(self, tmp_path):
        pending = make_candidates(tmp_path)
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<html>review</html>")
        srv = ReviewServer(pending, tmp_path / "d.jsonl", port=0, ui_dir=ui)
        srv.start()
        try:
            r = requests.get(f"{srv.url}/", timeout=5)
            assert r.status_code == 200 and "review" in r.text
            assert requests.get(f"{srv.url}/../secrets", timeout=5).status_code == 404
        finally:
            srv.stop()

    def test_404_without_ui_dir(self, server):
        assert requests.get(f"{server.url}/", timeout=5).status_code == 404
