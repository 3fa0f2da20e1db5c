"""Observation sampling: interpolated ground truth, interval/boundary deltas,
same/cross-view pairing, and assembly of unanswerable variants from externally
produced rewrites and image edits.

Instance generation is a pure function of (trajectory, config): the RNG is
derived per trajectory from ``rng_seed ^ hash64(trajectory_id)`` so parallel
order cannot change outputs.
"""

from __future__ import annotations

import hashlib
import math
import random
import re
from dataclasses import dataclass, replace
from typing import Sequence

from .model import (
    ABSTAIN,
    EvalInstance,
    Modality,
    ReviewCandidate,
    Segment,
    Trajectory,
    View,
    validate_trajectory,
)


class DeltaOutOfRange(ValueError):
    pass


class NonMonotoneSegment(ValueError):
    pass


class KTooSmall(ValueError):
    pass


class EpsilonOutOfRange(ValueError):
    pass


class MissingFrame(ValueError):
    pass


class MissingStepText(ValueError):
    pass


class InsufficientViewpoints(ValueError):
    pass


class MarkerLost(ValueError):
    pass


class StepCountMismatch(ValueError):
    pass


class UnknownStrategy(ValueError):
    pass


class WrongModality(ValueError):
    pass


class InvalidTrajectory(ValueError):
    def __init__(self, trajectory_id: str, violations: list[str]) -> None:
        super().__init__(f"{trajectory_id}: {', '.join(violations)}")
        self.trajectory_id = trajectory_id
        self.violations = violations


SAMPLING_MODES = ("interval", "boundary", "mixed")

#: The three predefined visual-negative editing strategies.
EDIT_STRATEGIES = ("Color Change", "Object Replacement", "Occlusion/Removal")

_MARKER_RE = re.compile(r"\[[^\[\]]*\]")


@dataclass(frozen=True)
class SamplerConfig:
    """Controls delta selection, view pairing, and negative-sample volume."""

    k: int = 4
    epsilon: float = 0.1
    mode: str = "interval"
    cross_view_fraction: float = 0.0
    unanswerable_fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise KTooSmall(f"k must be >= 2, got {self.k}")
        if not (0.0 < self.epsilon < 0.5):
            raise EpsilonOutOfRange(f"epsilon must be in (0, 0.5), got {self.epsilon}")
        if self.mode not in SAMPLING_MODES:
            raise ValueError(f"mode must be one of {SAMPLING_MODES}, got {self.mode!r}")
        if not (0.0 <= self.cross_view_fraction <= 1.0):
            raise ValueError("cross_view_fraction must be in [0, 1]")
        if not (0.0 <= self.unanswerable_fraction <= 1.0):
            raise ValueError("unanswerable_fraction must be in [0, 1]")


def hash64(text: str) -> int:
    """Stable 64-bit hash (Python's str hash is salted per process)."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")


def interpolate_progress(p_j: float, p_next: float, delta: float) -> float:
    """Ground-truth progress at relative position delta within a segment."""
    if not (0.0 < delta < 1.0):
        raise DeltaOutOfRange(f"delta must be in (0, 1), got {delta}")
    if p_j >= p_next:
        raise NonMonotoneSegment(f"segment progress must increase, got {p_j} >= {p_next}")
    return p_j + delta * (p_next - p_j)


def interval_deltas(k: int) -> list[float]:
    """Evenly spaced relative positions {1/k, ..., (k-1)/k}."""
    if k < 2:
        raise KTooSmall(f"k must be >= 2, got {k}")
    return [i / k for i in range(1, k)]


def boundary_delta(epsilon: float, rng: random.Random) -> float:
    """One draw uniform over (1 - epsilon, 1): a near-completion position."""
    if not (0.0 < epsilon < 0.5):
        raise EpsilonOutOfRange(f"epsilon must be in (0, 0.5), got {epsilon}")
    u = rng.random()
    while u == 0.0:  # keep the interval open on the left
        u = rng.random()
    return 1.0 - epsilon + epsilon * u


def nearest_ref_index(j: int, delta: float) -> int:
    """Ground-truth reference step for a sample at (j, delta): nearest step, ties earlier."""
    return j if delta <= 0.5 else j + 1


def _round_half_toward_start(x: float) -> int:
    base = math.floor(x)
    frac = x - base
    return base if frac <= 0.5 else base + 1


def _step_anchors(t: Trajectory) -> list[float]:
    """Normalized temporal position in [0, 1] of each key step within the raw video.

    A step whose frame_ref appears in its viewpoint's frame stream anchors at
    that frame's position; otherwise steps are assumed evenly spaced in time.
    """
    n = len(t.steps)
    anchors: list[float] = []
    positions: dict[str, dict[str, int]] = {}
    for vp in t.viewpoints:
        refs = t.frames_for(vp)
        positions[vp] = {ref: i for i, ref in enumerate(refs)}
    for pos, step in enumerate(t.steps):
        uniform = pos / (n - 1) if n > 1 else 0.0
        stream = positions.get(step.viewpoint, {})
        if step.frame_ref is not None and step.frame_ref in stream and len(stream) > 1:
            anchors.append(stream[step.frame_ref] / (len(stream) - 1))
        else:
            anchors.append(uniform)
    return anchors


def lookup_observation_frame(
    t: Trajectory, viewpoint: str, j: int, delta: float, anchors: list[float] | None = None
) -> str:
    """Nearest raw-video frame for a sample at (j, delta), half-ties toward the segment start."""
    refs = t.frames_for(viewpoint)
    if not refs:
        raise MissingFrame(f"trajectory {t.id}: no frames for viewpoint {viewpoint!r}")
    if anchors is None:
        anchors = _step_anchors(t)
    a = anchors[j - 1] + delta * (anchors[j] - anchors[j - 1])
    idx = _round_half_toward_start(a * (len(refs) - 1))
    idx = min(max(idx, 0), len(refs) - 1)
    return refs[idx]


def _vision_payload(t: Trajectory) -> tuple[tuple[str, float], ...]:
    payload = []
    for step in t.steps:
        if step.frame_ref is None:
            raise MissingFrame(f"trajectory {t.id}: step {step.index} has no frame_ref")
        payload.append((step.frame_ref, step.progress))
    return tuple(payload)


def _text_payload(t: Trajectory) -> tuple[tuple[str, float], ...]:
    payload = []
    for step in t.steps:
        if step.text is None:
            raise MissingStepText(f"trajectory {t.id}: step {step.index} has no text")
        payload.append((step.text, step.progress))
    return tuple(payload)


def _segment_deltas(cfg: SamplerConfig, rng: random.Random, n_segments: int) -> list[list[float]]:
    """Delta list per segment; boundary draws happen in segment order for determinism."""
    per_segment: list[list[float]] = []
    for _ in range(n_segments):
        deltas: list[float] = []
        if cfg.mode in ("interval", "mixed"):
            deltas.extend(interval_deltas(cfg.k))
        if cfg.mode in ("boundary", "mixed"):
            deltas.append(boundary_delta(cfg.epsilon, rng))
        per_segment.append(deltas)
    return per_segment


def build_instances(
    t: Trajectory,
    cfg: SamplerConfig,
    modalities: Sequence[Modality | str] = (Modality.VISION,),
) -> list[EvalInstance]:
    """Sample observations from every segment of one trajectory.

    Interval mode yields (N-1)(K-1) answerable instances per modality; boundary
    mode yields N-1. Observation positions are shared across modalities so the
    vision and text settings ask about the same moments.
    """
    violations = validate_trajectory(t)
    if violations:
        raise InvalidTrajectory(t.id, violations)
    mods = [Modality(m) for m in modalities]
    rng = random.Random(cfg.rng_seed ^ hash64(t.id))
    n_segments = len(t.steps) - 1
    per_segment = _segment_deltas(cfg, rng, n_segments)
    anchors = _step_anchors(t)
    demo_viewpoint = t.steps[0].viewpoint
    if Modality.VISION in mods and cfg.cross_view_fraction > 0 and len(t.viewpoints) < 2:
        raise InsufficientViewpoints(
            f"trajectory {t.id}: cross-view sampling needs >= 2 viewpoints"
        )

    step_texts = tuple(s.text for s in t.steps) if all(s.text for s in t.steps) else None
    payloads: dict[Modality, tuple[tuple[str, float], ...]] = {}
    for m in mods:
        payloads[m] = _vision_payload(t) if m is Modality.VISION else _text_payload(t)

    instances: list[EvalInstance] = []
    for j in range(1, n_segments + 1):
        p_j = t.steps[j - 1].progress
        p_next = t.steps[j].progress
        for delta in per_segment[j - 1]:
            gt = interpolate_progress(p_j, p_next, delta)
            gt_ref = nearest_ref_index(j, delta)
            for m in mods:
                if m is Modality.VISION:
                    cross = cfg.cross_view_fraction > 0 and rng.random() < cfg.cross_view_fraction
                    if cross:
                        others = [v for v in t.viewpoints if v != demo_viewpoint]
                        obs_vp = rng.choice(others)
                        view = View.CROSS
                    else:
                        obs_vp = demo_viewpoint
                        view = View.SAME
                else:
                    obs_vp = demo_viewpoint or (t.viewpoints[0] if t.viewpoints else "")
                    view = View.NOT_APPLICABLE
                obs_ref = lookup_observation_frame(t, obs_vp, j, delta, anchors)
                instances.append(
                    EvalInstance(
                        instance_id=f"{t.id}:{m.value}:{view.value}:j{j}:d{delta:.6f}",
                        trajectory_id=t.id,
                        modality=m,
                        view=view,
                        answerable=True,
                        demo_payload=payloads[m],
                        observation_ref=obs_ref,
                        gt_progress=gt,
                        gt_ref_index=gt_ref,
                        segment=Segment(j=j, delta=delta),
                        goal=t.goal,
                        step_texts=step_texts,
                    )
                )
    return instances


@dataclass(frozen=True)
class TextRewrite:
    """An externally produced object-replacement rewrite of a text demonstration."""

    goal: str
    steps: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))


def make_unanswerable_text(inst: EvalInstance, rewrite: TextRewrite) -> EvalInstance:
    """Turn an answerable text instance into an unanswerable variant.

    The rewrite must keep the step count and every bracketed marker (e.g.
    ``[left]``) of the original steps; the variant links back to its source.
    """
    if inst.modality is not Modality.TEXT:
        raise WrongModality(f"{inst.instance_id}: text rewrite on {inst.modality.value} instance")
    if not inst.answerable:
        raise ValueError(f"{inst.instance_id}: source instance must be answerable")
    if len(rewrite.steps) != len(inst.demo_payload):
        raise StepCountMismatch(
            f"{inst.instance_id}: rewrite has {len(rewrite.steps)} steps, "
            f"demo has {len(inst.demo_payload)}"
        )
    for i, ((orig, _), new) in enumerate(zip(inst.demo_payload, rewrite.steps), start=1):
        needed = _MARKER_RE.findall(orig)
        have = _MARKER_RE.findall(new)
        for marker in needed:
            if marker in have:
                have.remove(marker)
            else:
                raise MarkerLost(f"step {i}: marker {marker} missing from rewrite")
    new_payload = tuple(
        (new, progress) for new, (_, progress) in zip(rewrite.steps, inst.demo_payload)
    )
    return replace(
        inst,
        instance_id=f"{inst.instance_id}:neg-text",
        answerable=False,
        demo_payload=new_payload,
        gt_progress=ABSTAIN,
        gt_ref_index=ABSTAIN,
        goal=rewrite.goal,
        step_texts=rewrite.steps,
        source_instance_id=inst.instance_id,
    )


def canonical_strategy(strategy: str) -> str:
    """Map a strategy spelling onto one of the three predefined options."""
    squashed = re.sub(r"[^a-z]", "", strategy.lower())
    for known in EDIT_STRATEGIES:
        if squashed == re.sub(r"[^a-z]", "", known.lower()):
            return known
    raise UnknownStrategy(f"unknown editing strategy {strategy!r}")


def make_unanswerable_vision(
    inst: EvalInstance, edited_frame_ref: str, strategy: str, edit_prompt: str
) -> ReviewCandidate:
    """Wrap an externally edited observation as a review-pending candidate.

    The candidate becomes a benchmark instance only after a keep verdict
    (see ``kept_candidate_to_instance``).
    """
    if inst.modality is not Modality.VISION:
        raise WrongModality(f"{inst.instance_id}: image edit on {inst.modality.value} instance")
    if not inst.answerable:
        raise ValueError(f"{inst.instance_id}: source instance must be answerable")
    return ReviewCandidate(
        candidate_id=f"{inst.instance_id}:edit",
        source_instance_id=inst.instance_id,
        trajectory_id=inst.trajectory_id,
        original_image_ref=inst.observation_ref,
        edited_image_ref=edited_frame_ref,
        task_goal=inst.goal,
        steps=inst.step_texts or (),
        strategy=canonical_strategy(strategy),
        edit_prompt=edit_prompt,
    )


def kept_candidate_to_instance(candidate: ReviewCandidate, source: EvalInstance) -> EvalInstance:
    """Promote a kept candidate to an unanswerable vision instance."""
    if source.instance_id != candidate.source_instance_id:
        raise ValueError(
            f"candidate {candidate.candidate_id} does not derive from {source.instance_id}"
        )
    return replace(
        source,
        instance_id=f"{source.instance_id}:neg-vision",
        answerable=False,
        observation_ref=candidate.edited_image_ref,
        gt_progress=ABSTAIN,
        gt_ref_index=ABSTAIN,
        source_instance_id=source.instance_id,
    )
