"""Render prompt bundles from templates stored as external text files.

Templates live in ``templates/<template_id>.txt`` with ``{placeholder}``
slots; an alternate directory can be supplied for ablations. Rendered text
carries ``<image>`` markers wherever an image attaches; the bundle's ordered
image slots map those markers to frame references. Ground truth never enters
a prompt except through the CoT-construction templates, which require it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .model import ABSTAIN, EvalInstance, Modality, Sentinel
from .sampler import MissingStepText, WrongModality

IMAGE_MARKER = "<image>"

TEMPLATE_IDS = (
    "vision_infer",
    "text_infer",
    "direct",
    "vision_cot",
    "text_cot",
    "visual_nega",
    "text_nega",
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


def format_progress(value: float) -> str:
    """Progress for prompt text: integer when whole, else one decimal place."""
    if float(value).is_integer():
        return str(int(value))
    return f"{value:.1f}"


@dataclass(frozen=True)
class PromptBundle:
    """Rendered prompt text plus the ordered images it attaches."""

    text: str
    image_slots: tuple[tuple[str, str], ...]
    template_id: str
    instance_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "image_slots", tuple(tuple(s) for s in self.image_slots))
        if self.text.count(IMAGE_MARKER) != len(self.image_slots):
            raise ValueError(
                f"{self.instance_id}: {self.text.count(IMAGE_MARKER)} image markers "
                f"but {len(self.image_slots)} slots"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "template_id": self.template_id,
            "text": self.text,
            "image_slots": [list(s) for s in self.image_slots],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PromptBundle":
        return cls(
            text=d["text"],
            image_slots=tuple((m, r) for m, r in d["image_slots"]),
            template_id=d["template_id"],
            instance_id=d["instance_id"],
        )


class TemplateStore:
    """Loads and renders templates, from the packaged set or an override directory."""

    def __init__(self, template_dir: str | Path | None = None) -> None:
        self._dir = Path(template_dir) if template_dir is not None else None
        self._cache: dict[str, str] = {}

    def load(self, template_id: str) -> str:
        if template_id not in TEMPLATE_IDS:
            raise ValueError(f"unknown template id {template_id!r}")
        if template_id not in self._cache:
            if self._dir is not None:
                text = (self._dir / f"{template_id}.txt").read_text(encoding="utf-8")
            else:
                text = (
                    resources.files("progresskit")
                    .joinpath("templates", f"{template_id}.txt")
                    .read_text(encoding="utf-8")
                )
            self._cache[template_id] = text
        return self._cache[template_id]

    def render(self, template_id: str, slots: dict[str, str]) -> str:
        template = self.load(template_id)
        names = set(_PLACEHOLDER_RE.findall(template))
        missing = names - slots.keys()
        if missing:
            raise KeyError(f"template {template_id}: unresolved slots {sorted(missing)}")
        text = template
        for name in names:
            text = text.replace("{" + name + "}", slots[name])
        return text.rstrip("\n")


_DEFAULT_STORE = TemplateStore()


def _vision_demo_block(inst: EvalInstance) -> tuple[str, list[tuple[str, str]]]:
    lines = []
    slots = []
    for ref, progress in inst.demo_payload:
        lines.append(f"{IMAGE_MARKER} {format_progress(progress)}%")
        slots.append((IMAGE_MARKER, ref))
    return "\n".join(lines), slots


def _text_demo_block(inst: EvalInstance) -> str:
    lines = [f"Task goal: {inst.goal}"]
    for i, (text, progress) in enumerate(inst.demo_payload, start=1):
        lines.append(f"Step {i}. {text} — {format_progress(progress)}%")
    return "\n".join(lines)


def _instruction_block(steps: tuple[str, ...]) -> str:
    return "\n".join(f"Step {i}. {text}" for i, text in enumerate(steps, start=1))


def _observation_block() -> tuple[str, tuple[str, str]]:
    return IMAGE_MARKER, (IMAGE_MARKER, "")


def render_vision_infer(inst: EvalInstance, store: TemplateStore | None = None) -> PromptBundle:
    """Vision inference prompt: demo frames with progress labels, then the observation."""
    if inst.modality is not Modality.VISION:
        raise WrongModality(f"{inst.instance_id}: vision template on text instance")
    store = store or _DEFAULT_STORE
    demo_block, slots = _vision_demo_block(inst)
    text = store.render(
        "vision_infer", {"demo_block": demo_block, "observation_block": IMAGE_MARKER}
    )
    slots.append((IMAGE_MARKER, inst.observation_ref))
    return PromptBundle(
        text=text,
        image_slots=tuple(slots),
        template_id="vision_infer",
        instance_id=inst.instance_id,
    )


def render_text_infer(inst: EvalInstance, store: TemplateStore | None = None) -> PromptBundle:
    """Text inference prompt: goal and numbered steps with progress, one observation image."""
    if inst.modality is not Modality.TEXT:
        raise WrongModality(f"{inst.instance_id}: text template on vision instance")
    store = store or _DEFAULT_STORE
    text = store.render(
        "text_infer",
        {"demo_block": _text_demo_block(inst), "observation_block": IMAGE_MARKER},
    )
    return PromptBundle(
        text=text,
        image_slots=((IMAGE_MARKER, inst.observation_ref),),
        template_id="text_infer",
        instance_id=inst.instance_id,
    )


def render_direct(inst: EvalInstance, store: TemplateStore | None = None) -> PromptBundle:
    """Direct-prediction prompt: same demonstration layout, score-only response block."""
    store = store or _DEFAULT_STORE
    if inst.modality is Modality.VISION:
        demo_block, slots = _vision_demo_block(inst)
    else:
        demo_block = _text_demo_block(inst)
        slots = []
    text = store.render(
        "direct", {"demo_block": demo_block, "observation_block": IMAGE_MARKER}
    )
    slots.append((IMAGE_MARKER, inst.observation_ref))
    return PromptBundle(
        text=text,
        image_slots=tuple(slots),
        template_id="direct",
        instance_id=inst.instance_id,
    )


def render_cot_gen(
    inst: EvalInstance,
    gt_ref: int | Sentinel,
    gt_score: float | Sentinel,
    store: TemplateStore | None = None,
) -> PromptBundle:
    """Guided reasoning-completion prompt: carries the ground-truth block.

    Abnormal-case generation passes ABSTAIN for both ground-truth fields,
    which renders "n/a" values; the abnormal-handling paragraph is always
    part of the template.
    """
    store = store or _DEFAULT_STORE
    closest = "n/a" if gt_ref is ABSTAIN else str(gt_ref)
    score = "n/a" if gt_score is ABSTAIN else format_progress(gt_score)
    if inst.modality is Modality.VISION:
        template_id = "vision_cot"
        demo_block, slots = _vision_demo_block(inst)
    else:
        template_id = "text_cot"
        demo_block = _text_demo_block(inst)
        slots = []
    text = store.render(
        template_id,
        {
            "demo_block": demo_block,
            "observation_block": IMAGE_MARKER,
            "closest_ref": closest,
            "gt_score": score,
        },
    )
    slots.append((IMAGE_MARKER, inst.observation_ref))
    return PromptBundle(
        text=text,
        image_slots=tuple(slots),
        template_id=template_id,
        instance_id=inst.instance_id,
    )


def render_negative_gen(
    inst: EvalInstance, kind: str, store: TemplateStore | None = None
) -> PromptBundle:
    """Negative-generation prompt: visual editing instructions or text rewrite request."""
    if kind not in ("visual", "text"):
        raise ValueError(f"kind must be 'visual' or 'text', got {kind!r}")
    if not inst.answerable:
        raise ValueError(f"{inst.instance_id}: negatives derive from answerable instances")
    store = store or _DEFAULT_STORE
    if kind == "visual":
        if inst.modality is not Modality.VISION:
            raise WrongModality(f"{inst.instance_id}: visual negative on text instance")
        if not inst.step_texts:
            raise MissingStepText(f"{inst.instance_id}: no step instructions available")
        step_number = inst.gt_ref_index if isinstance(inst.gt_ref_index, int) else inst.segment.j
        text = store.render(
            "visual_nega",
            {
                "task_goal": inst.goal,
                "text_demo": _instruction_block(inst.step_texts),
                "observation_block": IMAGE_MARKER,
                "step_number": str(step_number),
                "step_instruction": inst.step_texts[step_number - 1],
            },
        )
        template_id = "visual_nega"
    else:
        if inst.modality is not Modality.TEXT:
            raise WrongModality(f"{inst.instance_id}: text negative on vision instance")
        steps = tuple(content for content, _ in inst.demo_payload)
        text = store.render(
            "text_nega",
            {
                "task_goal": inst.goal,
                "text_demo": _instruction_block(steps),
                "observation_block": IMAGE_MARKER,
            },
        )
        template_id = "text_nega"
    return PromptBundle(
        text=text,
        image_slots=((IMAGE_MARKER, inst.observation_ref),),
        template_id=template_id,
        instance_id=inst.instance_id,
    )


def render_for_template(
    inst: EvalInstance, template: str, store: TemplateStore | None = None
) -> PromptBundle:
    """Dispatch an instance to its inference template ("auto" follows modality)."""
    if template == "auto":
        template = "vision_infer" if inst.modality is Modality.VISION else "text_infer"
    if template == "vision_infer":
        return render_vision_infer(inst, store)
    if template == "text_infer":
        return render_text_infer(inst, store)
    if template == "direct":
        return render_direct(inst, store)
    raise ValueError(f"unsupported inference template {template!r}")
