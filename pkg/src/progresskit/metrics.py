"""Evaluation metrics: NSE, tie-aware Spearman, per-trajectory PRC, AFRR, UDA,
and micro/macro aggregation into a MetricsReport.

Rates and correlations are reported in percent, matching the result tables
this toolkit emits. Trajectories whose valid predictions have zero rank
variance produce NaN correlations; they are counted separately and excluded
from PRC means rather than imputed.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence

from .model import (
    ABSTAIN,
    EvalInstance,
    MetricsReport,
    ParsedPrediction,
    ScoredSample,
    Sentinel,
    SettingMetrics,
)
from .rewards import RewardConfig, reward_breakdown


class LengthMismatch(ValueError):
    pass


class TooFewSamples(ValueError):
    pass


class EmptyInput(ValueError):
    pass


#: Trajectory had fewer than two valid samples; no correlation is defined.
EXCLUDED = Sentinel("EXCLUDED")


def nse(pred: float, gt: float) -> float:
    """Normalized score error |pred - gt| / max(gt, 100 - gt), in [0, 1].

    The denominator is the worst possible absolute error at this ground
    truth, so it is always >= 50 and the ratio is always defined.
    """
    if not (0.0 <= pred <= 100.0) or not (0.0 <= gt <= 100.0):
        raise ValueError(f"scores must be in [0, 100], got pred={pred} gt={gt}")
    return abs(pred - gt) / max(gt, 100.0 - gt)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks, ties assigned the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        run_end = i
        while run_end + 1 < len(order) and values[order[run_end + 1]] == values[order[i]]:
            run_end += 1
        mean_rank = (i + run_end) / 2 + 1
        for pos in range(i, run_end + 1):
            ranks[order[pos]] = mean_rank
        i = run_end + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Tie-aware Spearman rank correlation in percent; NaN on zero rank variance."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(xs)}")
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    dx = [r - mx for r in rx]
    dy = [r - my for r in ry]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        return math.nan
    cov = sum(a * b for a, b in zip(dx, dy))
    return 100.0 * cov / math.sqrt(var_x * var_y)


def _valid_for_nse(s: ScoredSample) -> bool:
    return s.answerable and not s.abstained and isinstance(s.predicted.score, float)


def prc_trajectory(samples: Sequence[ScoredSample]) -> float | Sentinel:
    """Spearman over one trajectory's valid samples; EXCLUDED below 2, NaN on collapse."""
    valid = [s for s in samples if _valid_for_nse(s)]
    if len(valid) < 2:
        return EXCLUDED
    preds = [s.predicted.score for s in valid]
    gts = [s.gt_progress for s in valid]
    return spearman(preds, gts)


def afrr(samples: Sequence[ScoredSample]) -> float:
    """Answerable false rejection rate: percent of answerable samples abstained.

    Malformed scores are neither abstentions nor valid predictions but stay
    in the denominator.
    """
    if not samples:
        raise EmptyInput("afrr needs at least one answerable sample")
    if any(not s.answerable for s in samples):
        raise ValueError("afrr is defined over answerable samples only")
    return 100.0 * sum(1 for s in samples if s.abstained) / len(samples)


def uda(samples: Sequence[ScoredSample]) -> float:
    """Unanswerable detection accuracy: percent of unanswerable samples abstained."""
    if not samples:
        raise EmptyInput("uda needs at least one unanswerable sample")
    if any(s.answerable for s in samples):
        raise ValueError("uda is defined over unanswerable samples only")
    return 100.0 * sum(1 for s in samples if s.abstained) / len(samples)


def answerable_breakdown(samples: Sequence[ScoredSample]) -> tuple[float, float, float]:
    """(abstained, valid, malformed) percentages of an answerable set; sums to 100."""
    if not samples:
        raise EmptyInput("breakdown needs at least one sample")
    n = len(samples)
    n_abst = sum(1 for s in samples if s.abstained)
    n_valid = sum(1 for s in samples if _valid_for_nse(s))
    n_malformed = n - n_abst - n_valid
    return 100.0 * n_abst / n, 100.0 * n_valid / n, 100.0 * n_malformed / n


def score_sample(
    inst: EvalInstance, predicted: ParsedPrediction, reward_cfg: RewardConfig | None = None
) -> ScoredSample:
    """Join one instance with its parsed prediction: NSE, abstention, rewards."""
    cfg = reward_cfg or RewardConfig()
    abstained = predicted.score is ABSTAIN or predicted.ref is ABSTAIN
    sample_nse: float | None = None
    if inst.answerable and not abstained and isinstance(predicted.score, float):
        sample_nse = nse(predicted.score, inst.gt_progress)
    components, total = reward_breakdown(
        predicted, inst.gt_ref_index, inst.gt_progress, inst.n_steps, cfg
    )
    return ScoredSample(
        instance_id=inst.instance_id,
        trajectory_id=inst.trajectory_id,
        modality=inst.modality,
        view=inst.view,
        answerable=inst.answerable,
        gt_progress=inst.gt_progress,
        gt_ref_index=inst.gt_ref_index,
        predicted=predicted,
        nse=sample_nse,
        abstained=abstained,
        reward_components=components,
        reward_total=total,
    )


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def _prc_group(samples: Sequence[ScoredSample]) -> tuple[float | None, int, int, int]:
    """(mean over valid trajectories, n_trajectories, n_nan, n_excluded) for one group."""
    by_traj: dict[str, list[ScoredSample]] = defaultdict(list)
    for s in samples:
        by_traj[s.trajectory_id].append(s)
    values: list[float] = []
    n_nan = 0
    n_excluded = 0
    for traj_id in sorted(by_traj):
        rho = prc_trajectory(by_traj[traj_id])
        if rho is EXCLUDED:
            n_excluded += 1
        elif isinstance(rho, float) and math.isnan(rho):
            n_nan += 1
        else:
            values.append(rho)
    return _mean(values), len(by_traj), n_nan, n_excluded


def aggregate(samples: Sequence[ScoredSample]) -> MetricsReport:
    """Per-setting, micro (sample-weighted), and macro (unweighted) aggregates.

    Setting groups are modality x view x answerability. NSE/PRC/AFRR are
    defined on answerable groups, UDA on unanswerable ones; groups missing a
    metric are omitted from the macro mean with a recorded warning.
    """
    groups: dict[str, list[ScoredSample]] = defaultdict(list)
    for s in samples:
        groups[s.setting_key()].append(s)

    warnings: list[str] = []
    per_setting: dict[str, SettingMetrics] = {}
    for key in sorted(groups):
        group = groups[key]
        answerable = group[0].answerable
        if answerable:
            nse_values = [s.nse for s in group if s.nse is not None]
            prc_mean, n_traj, n_nan, n_excl = _prc_group(group)
            per_setting[key] = SettingMetrics(
                nse_mean=_mean(nse_values),
                prc_mean=prc_mean,
                afrr=afrr(group),
                uda=None,
                n_samples=len(group),
                n_nse=len(nse_values),
                n_trajectories=n_traj,
                n_nan_trajectories=n_nan,
                n_excluded_trajectories=n_excl,
            )
            if not nse_values:
                warnings.append(f"{key}: no valid samples for NSE")
            if prc_mean is None:
                warnings.append(f"{key}: no valid trajectories for PRC")
        else:
            per_setting[key] = SettingMetrics(
                uda=uda(group),
                n_samples=len(group),
            )

    answerable_samples = [s for s in samples if s.answerable]
    unanswerable_samples = [s for s in samples if not s.answerable]
    all_nse = [s.nse for s in samples if s.nse is not None]

    micro_prc_values: list[float] = []
    micro_n_traj = micro_n_nan = micro_n_excl = 0
    for key, sm in per_setting.items():
        micro_n_traj += sm.n_trajectories
        micro_n_nan += sm.n_nan_trajectories
        micro_n_excl += sm.n_excluded_trajectories
    for key in sorted(groups):
        group = groups[key]
        if not group[0].answerable:
            continue
        by_traj: dict[str, list[ScoredSample]] = defaultdict(list)
        for s in group:
            by_traj[s.trajectory_id].append(s)
        for traj_id in sorted(by_traj):
            rho = prc_trajectory(by_traj[traj_id])
            if isinstance(rho, float) and not math.isnan(rho):
                micro_prc_values.append(rho)

    micro = SettingMetrics(
        nse_mean=_mean(all_nse),
        prc_mean=_mean(micro_prc_values),
        afrr=afrr(answerable_samples) if answerable_samples else None,
        uda=uda(unanswerable_samples) if unanswerable_samples else None,
        n_samples=len(samples),
        n_nse=len(all_nse),
        n_trajectories=micro_n_traj,
        n_nan_trajectories=micro_n_nan,
        n_excluded_trajectories=micro_n_excl,
    )

    def macro_mean(metric: str) -> float | None:
        values = [
            getattr(sm, metric)
            for sm in per_setting.values()
            if getattr(sm, metric) is not None
        ]
        return _mean(values)

    macro = SettingMetrics(
        nse_mean=macro_mean("nse_mean"),
        prc_mean=macro_mean("prc_mean"),
        afrr=macro_mean("afrr"),
        uda=macro_mean("uda"),
        n_samples=len(samples),
        n_nse=len(all_nse),
        n_trajectories=micro_n_traj,
        n_nan_trajectories=micro_n_nan,
        n_excluded_trajectories=micro_n_excl,
    )
    return MetricsReport(
        per_setting=per_setting, micro=micro, macro=macro, warnings=tuple(warnings)
    )
