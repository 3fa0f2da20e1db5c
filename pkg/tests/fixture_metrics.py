"""Hand-constructed 40-sample scoring fixture with oracle-computed expectations.

Two settings (vision/same and text/not_applicable), four trajectories,
answerable and unanswerable samples, three abstentions, and exactly one
malformed score. T2's valid predictions are constant, producing a NaN
trajectory for PRC.
"""

from __future__ import annotations

from progresskit.model import ABSTAIN, EvalInstance, Modality, Segment, View

# Demo annotation grid chosen so every fixture ground truth falls strictly
# inside a segment (segments carry sampling provenance, not metric inputs).
GRID = (0.0, 33.0, 52.5, 77.0, 100.0)


def _segment_for(gt: float) -> tuple[int, float]:
    for j in range(1, len(GRID)):
        if GRID[j - 1] < gt < GRID[j]:
            return j, (gt - GRID[j - 1]) / (GRID[j] - GRID[j - 1])
    raise ValueError(f"gt {gt} must be strictly inside a grid segment")


def _instance(
    iid: str, traj: str, modality: Modality, view: View, gt: float | None
) -> EvalInstance:
    if modality is Modality.VISION:
        payload = tuple((f"{traj}/demo{i}.png", GRID[i]) for i in range(5))
    else:
        payload = tuple((f"{traj} action {i + 1}", GRID[i]) for i in range(5))
    answerable = gt is not None
    if answerable:
        j, delta = _segment_for(gt)
        gt_ref = j if delta <= 0.5 else j + 1
    else:
        j, delta = 1, 0.5
        gt_ref = None
    return EvalInstance(
        instance_id=iid,
        trajectory_id=traj,
        modality=modality,
        view=view,
        answerable=answerable,
        demo_payload=payload,
        observation_ref=f"{traj}/obs/{iid}.png",
        gt_progress=gt if answerable else ABSTAIN,
        gt_ref_index=gt_ref if answerable else ABSTAIN,
        segment=Segment(j=j, delta=delta),
        goal=f"goal of {traj}",
    )


def _response(score: str, ref: str = "3") -> str:
    return (
        f"<ref_think>recall</ref_think>\n<ref>{ref}</ref>\n"
        f"<score_think>compare</score_think>\n<score>{score}</score>"
    )


def build_fixture() -> list[tuple[EvalInstance, str]]:
    """(instance, raw response text) pairs, 40 total."""
    rows: list[tuple[EvalInstance, str]] = []

    # T1 (vision/same): 8 answerable, predictions track ground truth.
    t1 = [(10, 12), (20, 18), (30, 35), (40, 40), (55, 50), (65, 70), (80, 76), (90, 95)]
    for i, (gt, pred) in enumerate(t1):
        inst = _instance(f"A-T1-{i}", "T1", Modality.VISION, View.SAME, float(gt))
        rows.append((inst, _response(f"{pred}%")))

    # T2 (vision/same): 5 constant predictions (NaN trajectory), 2 abstentions,
    # 1 malformed score.
    for i, gt in enumerate((10, 20, 30, 40, 50)):
        inst = _instance(f"A-T2-{i}", "T2", Modality.VISION, View.SAME, float(gt))
        rows.append((inst, _response("50%")))
    for i, gt in enumerate((60, 70)):
        inst = _instance(f"A-T2-abst-{i}", "T2", Modality.VISION, View.SAME, float(gt))
        rows.append((inst, _response("n/a", ref="n/a")))
    inst = _instance("A-T2-bad", "T2", Modality.VISION, View.SAME, 80.0)
    rows.append((inst, _response("unsure")))

    # T1 unanswerable (vision/same): 3 of 4 correctly abstain.
    for i in range(3):
        inst = _instance(f"A-T1-neg-{i}", "T1", Modality.VISION, View.SAME, None)
        rows.append((inst, _response("n/a", ref="n/a")))
    inst = _instance("A-T1-neg-3", "T1", Modality.VISION, View.SAME, None)
    rows.append((inst, _response("40%")))

    # T3 (text): 7 valid predictions with one rank swap, 1 abstention.
    t3 = [(10, 15), (20, 25), (30, 20), (40, 45), (60, 55), (70, 75), (80, 85)]
    for i, (gt, pred) in enumerate(t3):
        inst = _instance(f"B-T3-{i}", "T3", Modality.TEXT, View.NOT_APPLICABLE, float(gt))
        rows.append((inst, _response(f"{pred}%")))
    inst = _instance("B-T3-abst", "T3", Modality.TEXT, View.NOT_APPLICABLE, 50.0)
    rows.append((inst, _response("n/a", ref="n/a")))

    # T4 (text): tied predictions in three plateaus.
    t4 = [(10, 30), (20, 30), (30, 30), (40, 60), (50, 60), (60, 60), (70, 90), (80, 90)]
    for i, (gt, pred) in enumerate(t4):
        inst = _instance(f"B-T4-{i}", "T4", Modality.TEXT, View.NOT_APPLICABLE, float(gt))
        rows.append((inst, _response(f"{pred}%")))

    # T3 unanswerable (text): 1 of 4 correctly abstains.
    inst = _instance("B-T3-neg-0", "T3", Modality.TEXT, View.NOT_APPLICABLE, None)
    rows.append((inst, _response("n/a", ref="n/a")))
    for i, pred in enumerate((50, 60, 70)):
        inst = _instance(f"B-T3-neg-{i + 1}", "T3", Modality.TEXT, View.NOT_APPLICABLE, None)
        rows.append((inst, _response(f"{pred}%")))

    assert len(rows) == 40
    return rows


# Raw (gt, pred) pairs backing the oracle recomputation in tests.
T1_PAIRS = ((10, 12), (20, 18), (30, 35), (40, 40), (55, 50), (65, 70), (80, 76), (90, 95))
T2_PAIRS = ((10, 50), (20, 50), (30, 50), (40, 50), (50, 50))
T3_PAIRS = ((10, 15), (20, 25), (30, 20), (40, 45), (60, 55), (70, 75), (80, 85))
T4_PAIRS = ((10, 30), (20, 30), (30, 30), (40, 60), (50, 60), (60, 60), (70, 90), (80, 90))
