"""Core data model: trajectories, benchmark instances, predictions, scored samples, reports.

All types are frozen dataclasses and safe to share across concurrent workers.
Dataset files are JSON Lines with snake_case field names matching the dataclass
fields; the abstention sentinel serializes as the JSON string "n/a".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence


class Sentinel:
    """Named singleton for non-numeric field states (ABSTAIN, MALFORMED)."""

    __slots__ = ("name",)

    def __init__(self, name: str) -> None:
        self.name = name

    def __repr__(self) -> str:
        return self.name


#: The model declined (or should decline) to answer; serializes as "n/a".
ABSTAIN = Sentinel("ABSTAIN")
#: A value that could not be parsed from raw model output; serializes as "malformed".
MALFORMED = Sentinel("MALFORMED")

_ABSTAIN_JSON = "n/a"
_MALFORMED_JSON = "malformed"


class Embodiment(str, Enum):
    FRANKA = "franka"
    UR5E = "ur5e"
    AGILEX = "agilex"
    HUMANOID = "humanoid"
    HUMAN = "human"
    OTHER = "other"


class Modality(str, Enum):
    VISION = "vision"
    TEXT = "text"


class View(str, Enum):
    SAME = "same"
    CROSS = "cross"
    NOT_APPLICABLE = "not_applicable"


def _as_tuple(value: Sequence | None) -> tuple:
    return tuple(value) if value is not None else ()


@dataclass(frozen=True)
class KeyStep:
    """One annotated waypoint of a demonstration.

    ``progress`` is a percent in [0, 100]. At least one of ``text`` /
    ``frame_ref`` must be present; ``frame_ref`` is an opaque path or URI.
    """

    index: int
    progress: float
    text: str | None = None
    frame_ref: str | None = None
    viewpoint: str = ""

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"index": self.index, "progress": self.progress}
        if self.text is not None:
            d["text"] = self.text
        if self.frame_ref is not None:
            d["frame_ref"] = self.frame_ref
        d["viewpoint"] = self.viewpoint
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "KeyStep":
        return cls(
            index=int(d["index"]),
            progress=float(d["progress"]),
            text=d.get("text"),
            frame_ref=d.get("frame_ref"),
            viewpoint=d.get("viewpoint", ""),
        )


@dataclass(frozen=True)
class VideoFrame:
    """One raw-video frame reference, ordered in time within its viewpoint."""

    viewpoint: str
    ref: str

    def to_dict(self) -> dict[str, Any]:
        return {"viewpoint": self.viewpoint, "ref": self.ref}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VideoFrame":
        return cls(viewpoint=d["viewpoint"], ref=d["ref"])


@dataclass(frozen=True)
class Trajectory:
    """A task execution: goal text, embodiment, ordered key steps, raw frames."""

    id: str
    goal: str
    embodiment: Embodiment
    steps: tuple[KeyStep, ...]
    video_frames: tuple[VideoFrame, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", _as_tuple(self.steps))
        object.__setattr__(self, "video_frames", _as_tuple(self.video_frames))
        if isinstance(self.embodiment, str) and not isinstance(self.embodiment, Embodiment):
            object.__setattr__(self, "embodiment", Embodiment(self.embodiment))

    @property
    def viewpoints(self) -> tuple[str, ...]:
        """Declared viewpoint set, in first-seen order of the frame list."""
        seen: dict[str, None] = {}
        for f in self.video_frames:
            seen.setdefault(f.viewpoint, None)
        return tuple(seen)

    def frames_for(self, viewpoint: str) -> list[str]:
        return [f.ref for f in self.video_frames if f.viewpoint == viewpoint]

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id,
            "goal": self.goal,
            "embodiment": self.embodiment.value,
            "steps": [s.to_dict() for s in self.steps],
        }
        if self.video_frames:
            d["video_frames"] = [f.to_dict() for f in self.video_frames]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Trajectory":
        return cls(
            id=d["id"],
            goal=d["goal"],
            embodiment=Embodiment(d["embodiment"]),
            steps=tuple(KeyStep.from_dict(s) for s in d["steps"]),
            video_frames=tuple(VideoFrame.from_dict(f) for f in d.get("video_frames", [])),
        )


def validate_trajectory(t: Trajectory) -> list[str]:
    """Check every trajectory invariant; return violation codes (empty means valid).

    Validation never raises: each code names the failing rule and, where
    applicable, the 1-based step index (e.g. ``NonIncreasingProgress@3``).
    """
    violations: list[str] = []
    n = len(t.steps)
    if n < 2:
        violations.append("TooFewSteps")
    declared = set(t.viewpoints)
    for pos, step in enumerate(t.steps, start=1):
        if step.index != pos:
            violations.append(f"NonContiguousIndex@{pos}")
        if not (0.0 <= step.progress <= 100.0):
            violations.append(f"ProgressOutOfRange@{pos}")
        if step.text is None and step.frame_ref is None:
            violations.append(f"MissingContent@{pos}")
        if step.viewpoint and declared and step.viewpoint not in declared:
            violations.append(f"UnknownViewpoint@{pos}")
        if pos > 1 and step.progress <= t.steps[pos - 2].progress:
            violations.append(f"NonIncreasingProgress@{pos}")
    if n >= 1 and t.steps[0].progress != 0.0:
        violations.append("FirstStepNotZero")
    if n >= 2 and t.steps[-1].progress != 100.0:
        violations.append("LastStepNotHundred")
    return violations


@dataclass(frozen=True)
class Segment:
    """Provenance of a sampled observation: segment index j and relative position delta."""

    j: int
    delta: float

    def to_dict(self) -> dict[str, Any]:
        return {"j": self.j, "delta": self.delta}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Segment":
        return cls(j=int(d["j"]), delta=float(d["delta"]))


def _progress_to_json(v: float | Sentinel) -> Any:
    return _ABSTAIN_JSON if v is ABSTAIN else v


def _progress_from_json(v: Any) -> float | Sentinel:
    return ABSTAIN if v == _ABSTAIN_JSON else float(v)


def _ref_from_json(v: Any) -> int | Sentinel:
    return ABSTAIN if v == _ABSTAIN_JSON else int(v)


@dataclass(frozen=True)
class EvalInstance:
    """One benchmark question: demonstration payload, observation, setting tags, ground truth.

    ``demo_payload`` holds (content, progress) pairs where content is a step
    text (text modality) or frame reference (vision modality). Unanswerable
    instances carry ABSTAIN ground truth; the two always go together.
    ``goal`` and ``step_texts`` make an instance self-contained for prompt
    rendering and negative generation (unanswerable variants carry edited
    goals that no longer match their source trajectory).
    """

    instance_id: str
    trajectory_id: str
    modality: Modality
    view: View
    answerable: bool
    demo_payload: tuple[tuple[str, float], ...]
    observation_ref: str
    gt_progress: float | Sentinel
    gt_ref_index: int | Sentinel
    segment: Segment
    goal: str = ""
    step_texts: tuple[str, ...] | None = None
    source_instance_id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "demo_payload", tuple((c, float(p)) for c, p in self.demo_payload)
        )
        if self.step_texts is not None:
            object.__setattr__(self, "step_texts", tuple(self.step_texts))
        if isinstance(self.modality, str) and not isinstance(self.modality, Modality):
            object.__setattr__(self, "modality", Modality(self.modality))
        if isinstance(self.view, str) and not isinstance(self.view, View):
            object.__setattr__(self, "view", View(self.view))

    @property
    def n_steps(self) -> int:
        return len(self.demo_payload)

    def setting_key(self) -> str:
        kind = "answerable" if self.answerable else "unanswerable"
        return f"{self.modality.value}:{self.view.value}:{kind}"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "instance_id": self.instance_id,
            "trajectory_id": self.trajectory_id,
            "modality": self.modality.value,
            "view": self.view.value,
            "answerable": self.answerable,
            "demo_payload": [[c, p] for c, p in self.demo_payload],
            "observation_ref": self.observation_ref,
            "gt_progress": _progress_to_json(self.gt_progress),
            "gt_ref_index": _progress_to_json(self.gt_ref_index),
            "segment": self.segment.to_dict(),
            "goal": self.goal,
        }
        if self.step_texts is not None:
            d["step_texts"] = list(self.step_texts)
        if self.source_instance_id is not None:
            d["source_instance_id"] = self.source_instance_id
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalInstance":
        step_texts = d.get("step_texts")
        return cls(
            instance_id=d["instance_id"],
            trajectory_id=d["trajectory_id"],
            modality=Modality(d["modality"]),
            view=View(d["view"]),
            answerable=bool(d["answerable"]),
            demo_payload=tuple((c, float(p)) for c, p in d["demo_payload"]),
            observation_ref=d["observation_ref"],
            gt_progress=_progress_from_json(d["gt_progress"]),
            gt_ref_index=_ref_from_json(d["gt_ref_index"]),
            segment=Segment.from_dict(d["segment"]),
            goal=d.get("goal", ""),
            step_texts=tuple(step_texts) if step_texts is not None else None,
            source_instance_id=d.get("source_instance_id"),
        )


def validate_instance(inst: EvalInstance) -> list[str]:
    """Check EvalInstance invariants; return violation codes."""
    violations: list[str] = []
    gt_p_abstain = inst.gt_progress is ABSTAIN
    gt_r_abstain = inst.gt_ref_index is ABSTAIN
    if inst.answerable == gt_p_abstain or inst.answerable == gt_r_abstain:
        violations.append("AnswerabilityMismatch")
    if inst.modality is Modality.TEXT and inst.view is not View.NOT_APPLICABLE:
        violations.append("TextViewNotApplicable")
    if not (0.0 < inst.segment.delta < 1.0):
        violations.append("DeltaOutOfRange")
    if not (1 <= inst.segment.j < max(inst.n_steps, 2)):
        violations.append("SegmentIndexOutOfRange")
    if not gt_p_abstain and not (0.0 <= inst.gt_progress <= 100.0):
        violations.append("GtProgressOutOfRange")
    if not gt_r_abstain and not (1 <= inst.gt_ref_index <= inst.n_steps):
        violations.append("GtRefOutOfRange")
    return violations


@dataclass(frozen=True)
class ParsedPrediction:
    """The four-field structured output extracted from raw model text.

    ``format_violations`` holds schema violations (missing, duplicated,
    misordered, unclosed, or unparseable tags); ``format_ok`` is true exactly
    when the list is empty. ``notes`` records lossless normalizations that do
    not affect schema compliance (fraction reinterpretation, inconsistent
    abstention).
    """

    ref_think: str = ""
    ref: int | Sentinel = MALFORMED
    score_think: str = ""
    score: float | Sentinel = MALFORMED
    format_ok: bool = False
    format_violations: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()
    raw_text: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "format_violations", _as_tuple(self.format_violations))
        object.__setattr__(self, "notes", _as_tuple(self.notes))
        if isinstance(self.score, int) and not isinstance(self.score, bool):
            object.__setattr__(self, "score", float(self.score))

    def to_dict(self) -> dict[str, Any]:
        def enc(v: Any) -> Any:
            if v is ABSTAIN:
                return _ABSTAIN_JSON
            if v is MALFORMED:
                return _MALFORMED_JSON
            return v

        return {
            "ref_think": self.ref_think,
            "ref": enc(self.ref),
            "score_think": self.score_think,
            "score": enc(self.score),
            "format_ok": self.format_ok,
            "format_violations": list(self.format_violations),
            "notes": list(self.notes),
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ParsedPrediction":
        def dec_ref(v: Any) -> int | Sentinel:
            if v == _ABSTAIN_JSON:
                return ABSTAIN
            if v == _MALFORMED_JSON:
                return MALFORMED
            return int(v)

        def dec_score(v: Any) -> float | Sentinel:
            if v == _ABSTAIN_JSON:
                return ABSTAIN
            if v == _MALFORMED_JSON:
                return MALFORMED
            return float(v)

        return cls(
            ref_think=d.get("ref_think", ""),
            ref=dec_ref(d.get("ref", _MALFORMED_JSON)),
            score_think=d.get("score_think", ""),
            score=dec_score(d.get("score", _MALFORMED_JSON)),
            format_ok=bool(d.get("format_ok", False)),
            format_violations=tuple(d.get("format_violations", [])),
            notes=tuple(d.get("notes", [])),
            raw_text=d.get("raw_text", ""),
        )


@dataclass(frozen=True)
class ScoredSample:
    """Ground truth joined with a parsed prediction plus per-sample metrics.

    ``nse`` is defined only for answerable, non-abstained samples with a
    numeric score (None otherwise). ``abstained`` is true when either the
    predicted score or the predicted reference is the abstention literal.
    """

    instance_id: str
    trajectory_id: str
    modality: Modality
    view: View
    answerable: bool
    gt_progress: float | Sentinel
    gt_ref_index: int | Sentinel
    predicted: ParsedPrediction
    nse: float | None
    abstained: bool
    reward_components: tuple[float, float, float]
    reward_total: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "reward_components", tuple(self.reward_components))
        if isinstance(self.modality, str) and not isinstance(self.modality, Modality):
            object.__setattr__(self, "modality", Modality(self.modality))
        if isinstance(self.view, str) and not isinstance(self.view, View):
            object.__setattr__(self, "view", View(self.view))

    def setting_key(self) -> str:
        kind = "answerable" if self.answerable else "unanswerable"
        return f"{self.modality.value}:{self.view.value}:{kind}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "trajectory_id": self.trajectory_id,
            "modality": self.modality.value,
            "view": self.view.value,
            "answerable": self.answerable,
            "gt_progress": _progress_to_json(self.gt_progress),
            "gt_ref_index": _progress_to_json(self.gt_ref_index),
            "predicted": self.predicted.to_dict(),
            "nse": self.nse,
            "abstained": self.abstained,
            "reward_components": list(self.reward_components),
            "reward_total": self.reward_total,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScoredSample":
        return cls(
            instance_id=d["instance_id"],
            trajectory_id=d["trajectory_id"],
            modality=Modality(d["modality"]),
            view=View(d["view"]),
            answerable=bool(d["answerable"]),
            gt_progress=_progress_from_json(d["gt_progress"]),
            gt_ref_index=_ref_from_json(d["gt_ref_index"]),
            predicted=ParsedPrediction.from_dict(d["predicted"]),
            nse=d.get("nse"),
            abstained=bool(d["abstained"]),
            reward_components=tuple(d["reward_components"]),
            reward_total=float(d["reward_total"]),
        )


@dataclass(frozen=True)
class SettingMetrics:
    """Aggregates for one setting group (or the micro/macro roll-up)."""

    nse_mean: float | None = None
    prc_mean: float | None = None
    afrr: float | None = None
    uda: float | None = None
    n_samples: int = 0
    n_nse: int = 0
    n_trajectories: int = 0
    n_nan_trajectories: int = 0
    n_excluded_trajectories: int = 0

    def to_dict(self) -> dict[str, Any]:
        def clean(v: float | None) -> float | None:
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return None
            return v

        return {
            "nse_mean": clean(self.nse_mean),
            "prc_mean": clean(self.prc_mean),
            "afrr": clean(self.afrr),
            "uda": clean(self.uda),
            "n_samples": self.n_samples,
            "n_nse": self.n_nse,
            "n_trajectories": self.n_trajectories,
            "n_nan_trajectories": self.n_nan_trajectories,
            "n_excluded_trajectories": self.n_excluded_trajectories,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SettingMetrics":
        return cls(
            nse_mean=d.get("nse_mean"),
            prc_mean=d.get("prc_mean"),
            afrr=d.get("afrr"),
            uda=d.get("uda"),
            n_samples=int(d.get("n_samples", 0)),
            n_nse=int(d.get("n_nse", 0)),
            n_trajectories=int(d.get("n_trajectories", 0)),
            n_nan_trajectories=int(d.get("n_nan_trajectories", 0)),
            n_excluded_trajectories=int(d.get("n_excluded_trajectories", 0)),
        )


@dataclass(frozen=True)
class MetricsReport:
    """Per-setting and micro/macro aggregates of NSE, PRC, AFRR, UDA."""

    per_setting: dict[str, SettingMetrics]
    micro: SettingMetrics
    macro: SettingMetrics
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "warnings", _as_tuple(self.warnings))

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_setting": {k: v.to_dict() for k, v in sorted(self.per_setting.items())},
            "micro": self.micro.to_dict(),
            "macro": self.macro.to_dict(),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricsReport":
        return cls(
            per_setting={
                k: SettingMetrics.from_dict(v) for k, v in d.get("per_setting", {}).items()
            },
            micro=SettingMetrics.from_dict(d["micro"]),
            macro=SettingMetrics.from_dict(d["macro"]),
            warnings=tuple(d.get("warnings", [])),
        )


@dataclass(frozen=True)
class ReviewCandidate:
    """A review-pending unanswerable-vision candidate (not yet a benchmark instance)."""

    candidate_id: str
    source_instance_id: str
    trajectory_id: str
    original_image_ref: str
    edited_image_ref: str
    task_goal: str
    steps: tuple[str, ...]
    strategy: str
    edit_prompt: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", _as_tuple(self.steps))

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate_id": self.candidate_id,
            "source_instance_id": self.source_instance_id,
            "trajectory_id": self.trajectory_id,
            "original_image_ref": self.original_image_ref,
            "edited_image_ref": self.edited_image_ref,
            "task_goal": self.task_goal,
            "steps": list(self.steps),
            "strategy": self.strategy,
            "edit_prompt": self.edit_prompt,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ReviewCandidate":
        return cls(
            candidate_id=d["candidate_id"],
            source_instance_id=d["source_instance_id"],
            trajectory_id=d["trajectory_id"],
            original_image_ref=d["original_image_ref"],
            edited_image_ref=d["edited_image_ref"],
            task_goal=d["task_goal"],
            steps=tuple(d.get("steps", [])),
            strategy=d["strategy"],
            edit_prompt=d["edit_prompt"],
        )


# ---------------------------------------------------------------------------
# JSON Lines I/O
# ---------------------------------------------------------------------------


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> int:
    """Write one JSON object per line; returns the number of rows written."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False))
            f.write("\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_trajectories(path: str | Path) -> list[Trajectory]:
    return [Trajectory.from_dict(d) for d in read_jsonl(path)]


def read_instances(path: str | Path) -> list[EvalInstance]:
    return [EvalInstance.from_dict(d) for d in read_jsonl(path)]


def read_candidates(path: str | Path) -> list[ReviewCandidate]:
    return [ReviewCandidate.from_dict(d) for d in read_jsonl(path)]


def write_instances(path: str | Path, instances: Iterable[EvalInstance]) -> int:
    return write_jsonl(path, (i.to_dict() for i in instances))


def write_candidates(path: str | Path, candidates: Iterable[ReviewCandidate]) -> int:
    return write_jsonl(path, (c.to_dict() for c in candidates))
