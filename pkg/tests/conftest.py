from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from progresskit.model import (  # noqa: E402
    EvalInstance,
    KeyStep,
    Modality,
    Segment,
    Trajectory,
    VideoFrame,
    View,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
TOY_DIR = REPO_ROOT / "data" / "toy"


def make_trajectory(
    traj_id: str = "traj-1",
    progresses: tuple[float, ...] = (0.0, 25.0, 50.0, 75.0, 100.0),
    viewpoints: tuple[str, ...] = ("cam_front", "cam_side"),
    n_frames: int = 13,
    with_text: bool = True,
) -> Trajectory:
    n = len(progresses)
    key_positions = [round(i * (n_frames - 1) / (n - 1)) for i in range(n)]
    steps = tuple(
        KeyStep(
            index=i + 1,
            progress=progresses[i],
            text=f"step {i + 1} of {traj_id}" if with_text else None,
            frame_ref=f"{traj_id}/cam_front/{key_positions[i]:02d}.png",
            viewpoint="cam_front",
        )
        for i in range(n)
    )
    frames = tuple(
        VideoFrame(viewpoint=vp, ref=f"{traj_id}/{vp}/{k:02d}.png")
        for vp in viewpoints
        for k in range(n_frames)
    )
    return Trajectory(
        id=traj_id, goal=f"do the {traj_id} task", embodiment="franka",
        steps=steps, video_frames=frames,
    )


def make_instance(
    instance_id: str = "inst-1",
    trajectory_id: str = "traj-1",
    modality: Modality = Modality.VISION,
    view: View = View.SAME,
    gt_progress: float = 37.5,
    gt_ref_index: int = 2,
    j: int = 2,
    delta: float = 0.5,
    n_steps: int = 5,
    goal: str = "put the pumpkin on the plate",
) -> EvalInstance:
    grid = [100.0 * i / (n_steps - 1) for i in range(n_steps)]
    if modality is Modality.VISION:
        payload = tuple((f"demo/{i}.png", grid[i]) for i in range(n_steps))
        texts = tuple(f"move part {i + 1} [left]" for i in range(n_steps))
    else:
        payload = tuple((f"pick up piece {i + 1} [left]", grid[i]) for i in range(n_steps))
        texts = tuple(c for c, _ in payload)
        view = View.NOT_APPLICABLE
    return EvalInstance(
        instance_id=instance_id,
        trajectory_id=trajectory_id,
        modality=modality,
        view=view,
        answerable=True,
        demo_payload=payload,
        observation_ref="obs/frame.png",
        gt_progress=gt_progress,
        gt_ref_index=gt_ref_index,
        segment=Segment(j=j, delta=delta),
        goal=goal,
        step_texts=texts,
    )


@pytest.fixture
def trajectory() -> Trajectory:
    return make_trajectory()


@pytest.fixture
def vision_instance() -> EvalInstance:
    return make_instance()


@pytest.fixture
def text_instance() -> EvalInstance:
    return make_instance(instance_id="inst-2", modality=Modality.TEXT)
