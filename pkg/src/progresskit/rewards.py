"""Reward triple for RL refinement: format compliance, reference retrieval,
and score accuracy, combined with configurable weights (default 1:6:3).

Only the reward oracle lives here; rollout generation and the policy update
belong to an external trainer that consumes the exported per-sample columns.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import ABSTAIN, ParsedPrediction, Sentinel

REF_MODES = ("exact", "distance_decay")
SCORE_MODES = ("linear", "nse")


@dataclass(frozen=True)
class RewardConfig:
    """Weights and component shapes for the combined reward.

    ``normalize_total`` divides the weighted sum by the weight sum so totals
    stay in [0, 1] across weight ablations. ``format_gating`` zeroes the other
    components when the output is malformed.
    """

    alpha: float = 1.0
    beta: float = 6.0
    gamma: float = 3.0
    ref_mode: str = "exact"
    score_mode: str = "linear"
    normalize_total: bool = True
    format_gating: bool = False

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("reward weights must be nonnegative")
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("at least one reward weight must be positive")
        if self.ref_mode not in REF_MODES:
            raise ValueError(f"ref_mode must be one of {REF_MODES}, got {self.ref_mode!r}")
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score_mode must be one of {SCORE_MODES}, got {self.score_mode!r}")


def reward_format(pred: ParsedPrediction) -> float:
    """1.0 for schema-compliant output, else 0.0."""
    return 1.0 if pred.format_ok else 0.0


def reward_ref(
    pred: ParsedPrediction,
    gt_ref: int | Sentinel,
    n_steps: int,
    cfg: RewardConfig | None = None,
) -> float:
    """Reference-retrieval reward.

    Matched abstention earns full credit; mixed abstention or a malformed
    reference earns none. Numeric pairs score 1.0 on exact match, or decay
    linearly with step distance in distance_decay mode.
    """
    cfg = cfg or RewardConfig()
    if n_steps < 2:
        raise ValueError(f"n_steps must be >= 2, got {n_steps}")
    predicted = pred.ref
    if predicted is ABSTAIN and gt_ref is ABSTAIN:
        return 1.0
    if isinstance(predicted, Sentinel) or isinstance(gt_ref, Sentinel):
        return 0.0
    if cfg.ref_mode == "exact":
        return 1.0 if predicted == gt_ref else 0.0
    return max(0.0, 1.0 - abs(predicted - gt_ref) / (n_steps - 1))


def reward_score(
    pred: ParsedPrediction,
    gt: float | Sentinel,
    cfg: RewardConfig | None = None,
) -> float:
    """Score-accuracy reward: 1 - |error|/100 (linear) or the NSE-shaped variant."""
    cfg = cfg or RewardConfig()
    predicted = pred.score
    if predicted is ABSTAIN and gt is ABSTAIN:
        return 1.0
    if isinstance(predicted, Sentinel) or isinstance(gt, Sentinel):
        return 0.0
    if cfg.score_mode == "linear":
        return 1.0 - abs(predicted - gt) / 100.0
    return max(0.0, 1.0 - abs(predicted - gt) / max(gt, 100.0 - gt))


def reward_breakdown(
    pred: ParsedPrediction,
    gt_ref: int | Sentinel,
    gt_score: float | Sentinel,
    n_steps: int,
    cfg: RewardConfig | None = None,
) -> tuple[tuple[float, float, float], float]:
    """((r_format, r_ref, r_score), total) for one prediction."""
    cfg = cfg or RewardConfig()
    r_format = reward_format(pred)
    r_ref = reward_ref(pred, gt_ref, n_steps, cfg)
    r_score = reward_score(pred, gt_score, cfg)
    if cfg.format_gating and r_format == 0.0:
        r_ref = 0.0
        r_score = 0.0
    total = cfg.alpha * r_format + cfg.beta * r_ref + cfg.gamma * r_score
    if cfg.normalize_total:
        total /= cfg.alpha + cfg.beta + cfg.gamma
    return (r_format, r_ref, r_score), total


def reward_total(
    pred: ParsedPrediction,
    gt_ref: int | Sentinel,
    gt_score: float | Sentinel,
    n_steps: int,
    cfg: RewardConfig | None = None,
) -> float:
    """Weighted combination of the three components (normalized by default)."""
    _, total = reward_breakdown(pred, gt_ref, gt_score, n_steps, cfg)
    return total
