#!/usr/bin/env python3
"""Regenerate the bundled toy dataset under data/toy/.

Five synthetic manipulation trajectories with two camera viewpoints, plus the
sidecar files an external negative-generation pipeline would produce:
object-replacement rewrites for text demos and "edited" observation images
for vision demos. Frame files are 1x1 PNGs; refs are paths relative to the
repository root.
"""

from __future__ import annotations

import json
import struct
import sys
import zlib
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from progresskit.model import Trajectory  # noqa: E402
from progresskit.sampler import Modality, SamplerConfig, build_instances  # noqa: E402

OUT = ROOT / "data" / "toy"
FRAMES = OUT / "frames"


def tiny_png(shade: int) -> bytes:
    """A valid 1x1 8-bit grayscale PNG with the given pixel value.

    Frame files get distinct bytes so content-addressed consumers (the mock
    endpoint hashes request bodies) see each frame as a different image.
    """

    def chunk(kind: bytes, data: bytes) -> bytes:
        body = kind + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0)
    idat = zlib.compress(bytes([0, shade & 0xFF]))
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )


def write_frame(rel_ref: str) -> None:
    (ROOT / rel_ref).write_bytes(tiny_png(zlib.crc32(rel_ref.encode()) & 0xFF))

N_FRAMES = 13
VIEWPOINTS = ("cam_front", "cam_side")

TASKS = [
    {
        "id": "toy-pumpkin",
        "goal": "put the pumpkin on the plate",
        "embodiment": "franka",
        "steps": [
            "reach for the pot lid [left]",
            "lift the pot lid and set it aside",
            "grasp the pumpkin inside the pot",
            "move the pumpkin [towards] the plate",
            "place the pumpkin on the plate",
        ],
        "rewrite_object": ("pumpkin", "bowl"),
    },
    {
        "id": "toy-cubes",
        "goal": "stack the blue cube on the pink cube",
        "embodiment": "ur5e",
        "steps": [
            "move the gripper above the blue cube",
            "grasp the blue cube",
            "lift the blue cube [towards] the pink cube",
            "align the blue cube over the pink cube",
            "release the blue cube on the pink cube",
        ],
        "rewrite_object": ("cube", "sphere"),
    },
    {
        "id": "toy-plate",
        "goal": "place the plate on the rack",
        "embodiment": "agilex",
        "steps": [
            "reach for the plate [right]",
            "grasp the plate edge",
            "lift the plate above the rack",
            "tilt the plate into the slot",
            "release the plate on the rack",
        ],
        "rewrite_object": ("plate", "cutting board"),
    },
    {
        "id": "toy-bowl",
        "goal": "put the bowl into the basket",
        "embodiment": "humanoid",
        "steps": [
            "reach for the bowl on the table",
            "grasp the bowl rim [left]",
            "lift the bowl over the basket",
            "lower the bowl into the basket",
            "release the bowl inside the basket",
        ],
        "rewrite_object": ("bowl", "mug"),
    },
    {
        "id": "toy-jar",
        "goal": "open the jar and pour the contents",
        "embodiment": "human",
        "steps": [
            "grasp the jar with both hands",
            "twist the lid off the jar",
            "set the lid aside [right]",
            "tilt the jar over the tray",
            "pour the contents onto the tray",
        ],
        "rewrite_object": ("jar", "bottle"),
    },
]

CONFIG = {
    "sampler": {
        "k": 3,
        "epsilon": 0.1,
        "mode": "interval",
        "cross_view_fraction": 0.5,
        "unanswerable_fraction": 0.25,
        "rng_seed": 42,
    },
    "modalities": ["vision", "text"],
    "endpoint": {
        "model_name": "mock-model",
        "temperature": 0.6,
        "top_p": 0.9,
        "max_tokens": 4096,
        "max_in_flight": 4,
        "max_retries": 2,
        "request_timeout": 30,
        "image_transport": "base64_inline",
    },
    "rewards": {"alpha": 1, "beta": 6, "gamma": 3, "ref_mode": "exact"},
}


def frame_ref(task_id: str, viewpoint: str, k: int) -> str:
    return f"data/toy/frames/{task_id}_{viewpoint}_{k:02d}.png"


def main() -> None:
    FRAMES.mkdir(parents=True, exist_ok=True)
    progress = [0.0, 25.0, 50.0, 75.0, 100.0]
    key_positions = [0, 3, 6, 9, 12]

    trajectories = []
    rewrites = []
    for task in TASKS:
        for vp in VIEWPOINTS:
            for k in range(N_FRAMES):
                write_frame(frame_ref(task["id"], vp, k))
        steps = [
            {
                "index": i + 1,
                "progress": progress[i],
                "text": task["steps"][i],
                "frame_ref": frame_ref(task["id"], "cam_front", key_positions[i]),
                "viewpoint": "cam_front",
            }
            for i in range(5)
        ]
        video_frames = [
            {"viewpoint": vp, "ref": frame_ref(task["id"], vp, k)}
            for vp in VIEWPOINTS
            for k in range(N_FRAMES)
        ]
        trajectories.append(
            {
                "id": task["id"],
                "goal": task["goal"],
                "embodiment": task["embodiment"],
                "steps": steps,
                "video_frames": video_frames,
            }
        )
        old, new = task["rewrite_object"]
        rewrites.append(
            {
                "trajectory_id": task["id"],
                "goal": task["goal"].replace(old, new),
                "steps": [s.replace(old, new) for s in task["steps"]],
            }
        )

    with open(OUT / "trajectories.jsonl", "w", encoding="utf-8") as f:
        for t in trajectories:
            f.write(json.dumps(t, ensure_ascii=False) + "\n")
    with open(OUT / "rewrites.jsonl", "w", encoding="utf-8") as f:
        for r in rewrites:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    with open(OUT / "config.json", "w", encoding="utf-8") as f:
        json.dump(CONFIG, f, indent=2)
        f.write("\n")

    # Edits sidecar: one pre-"edited" observation per vision instance, so the
    # build's per-group negative quota always finds an eligible edit.
    cfg = SamplerConfig(**CONFIG["sampler"])
    edits = []
    for t in trajectories:
        traj = Trajectory.from_dict(t)
        for inst in build_instances(traj, cfg, [Modality.VISION]):
            edited = f"data/toy/frames/{traj.id}_edited_{inst.segment.j}_{inst.segment.delta:.2f}.png"
            write_frame(edited)
            edits.append(
                {
                    "instance_id": inst.instance_id,
                    "edited_frame_ref": edited,
                    "strategy": "Object Replacement",
                    "edit_prompt": f"replace the {t['goal'].split()[2]} with a rubber duck",
                }
            )
    with open(OUT / "edits.jsonl", "w", encoding="utf-8") as f:
        for e in edits:
            f.write(json.dumps(e, ensure_ascii=False) + "\n")

    print(f"toy dataset written to {OUT}")


if __name__ == "__main__":
    main()
