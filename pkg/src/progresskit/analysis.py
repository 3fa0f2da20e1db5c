"""Diagnostics over scored samples: predicted-score histograms with pattern
classification, per-sample error summaries, and the retrieval-score coupling
matrix.

Outputs are plain data (JSON/CSV-friendly); plotting is left to external
tools. Coupling matrices for mixed-length trajectories normalize step indices
onto a fixed decile grid, recorded in the result metadata.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from .model import EvalInstance, ScoredSample


class InsufficientSamples(ValueError):
    pass


class EmptyInput(ValueError):
    pass


PATTERNS = (
    "single_peak_collapse",
    "multi_peak_clustering",
    "central_peaked",
    "smooth_continuous",
)


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin histogram over [0, 100] of numeric predicted scores.

    Abstentions and malformed scores are tallied separately and never enter
    the bin counts.
    """

    edges: tuple[float, ...]
    counts: tuple[int, ...]
    n_abstained: int
    n_malformed: int

    @property
    def n_numeric(self) -> int:
        return sum(self.counts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "edges": list(self.edges),
            "counts": list(self.counts),
            "n_abstained": self.n_abstained,
            "n_malformed": self.n_malformed,
        }


def score_histogram(samples: Sequence[ScoredSample], bins: int = 10) -> Histogram:
    """Histogram of numeric predicted scores over [0, 100]."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    counts = [0] * bins
    n_abstained = 0
    n_malformed = 0
    for s in samples:
        if s.abstained:
            n_abstained += 1
            continue
        score = s.predicted.score
        if not isinstance(score, float):
            n_malformed += 1
            continue
        idx = min(bins - 1, int(score * bins / 100.0))
        counts[idx] += 1
    edges = tuple(i * 100.0 / bins for i in range(bins + 1))
    return Histogram(
        edges=edges, counts=tuple(counts), n_abstained=n_abstained, n_malformed=n_malformed
    )


@dataclass(frozen=True)
class PatternThresholds:
    """Deterministic rules separating the four distribution patterns."""

    collapse_top_mass: float = 0.60
    extreme_decile: float = 10.0
    central_band: tuple[float, float] = (40.0, 60.0)
    central_window: float = 10.0
    central_mass: float = 0.50
    peak_mass: float = 0.20
    min_samples: int = 20


def classify_distribution(hist: Histogram, thresholds: PatternThresholds | None = None) -> str:
    """Label a predicted-score distribution: collapse, clustering, central peak, or smooth."""
    th = thresholds or PatternThresholds()
    n = hist.n_numeric
    if n < th.min_samples:
        raise InsufficientSamples(f"need >= {th.min_samples} numeric samples, got {n}")
    fractions = [c / n for c in hist.counts]
    centers = [(lo + hi) / 2 for lo, hi in zip(hist.edges, hist.edges[1:])]
    top_idx = max(range(len(fractions)), key=lambda i: fractions[i])

    if fractions[top_idx] >= th.collapse_top_mass and (
        centers[top_idx] <= th.extreme_decile or centers[top_idx] >= 100.0 - th.extreme_decile
    ):
        return "single_peak_collapse"

    lo, hi = th.central_band
    if lo <= centers[top_idx] <= hi:
        window_mass = sum(
            f
            for f, c in zip(fractions, centers)
            if abs(c - centers[top_idx]) <= th.central_window
        )
        if window_mass >= th.central_mass:
            return "central_peaked"

    n_bins = len(fractions)
    peaks = 0
    for i, f in enumerate(fractions):
        left = fractions[i - 1] if i > 0 else -1.0
        right = fractions[i + 1] if i < n_bins - 1 else -1.0
        if f > left and f > right and f >= th.peak_mass:
            peaks += 1
    if peaks >= 2:
        return "multi_peak_clustering"
    return "smooth_continuous"


def quantile_nearest_rank(sorted_values: Sequence[float], p: float) -> float:
    """Nearest-rank quantile: the value at 0-based index floor(p * n), clamped."""
    n = len(sorted_values)
    if n == 0:
        raise EmptyInput("quantile of empty sequence")
    return sorted_values[min(n - 1, int(p * n))]


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    median: float
    p90: float
    p99: float
    max: float
    histogram_edges: tuple[float, ...] = ()
    histogram_counts: tuple[int, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "median": self.median,
            "p90": self.p90,
            "p99": self.p99,
            "max": self.max,
            "histogram_edges": list(self.histogram_edges),
            "histogram_counts": list(self.histogram_counts),
        }


def error_summary(samples: Sequence[ScoredSample], bins: int = 20) -> ErrorSummary:
    """Order statistics and a histogram of per-sample NSE values."""
    values = sorted(s.nse for s in samples if s.nse is not None)
    if not values:
        raise EmptyInput("no valid NSE samples")
    counts = [0] * bins
    for v in values:
        counts[min(bins - 1, int(v * bins))] += 1
    return ErrorSummary(
        mean=sum(values) / len(values),
        median=quantile_nearest_rank(values, 0.5),
        p90=quantile_nearest_rank(values, 0.9),
        p99=quantile_nearest_rank(values, 0.99),
        max=values[-1],
        histogram_edges=tuple(i / bins for i in range(bins + 1)),
        histogram_counts=tuple(counts),
    )


def score_aligned_index(pred_score: float, demo: Sequence[tuple[int, float]]) -> int:
    """Demonstration step whose annotated progress is nearest the predicted score.

    Ties break toward the earlier index.
    """
    if not demo:
        raise EmptyInput("demo must be nonempty")
    best_index, _ = min(demo, key=lambda item: (abs(item[1] - pred_score), item[0]))
    return best_index


@dataclass(frozen=True)
class CouplingResult:
    """2-D counts of (retrieval anchor index, score-aligned index) pairs."""

    matrix: tuple[tuple[int, ...], ...]
    normalized: bool  # True when mixed step counts were mapped onto the decile grid
    n_samples: int

    @property
    def diagonal_fraction(self) -> float:
        total = sum(sum(row) for row in self.matrix)
        if total == 0:
            return 0.0
        return sum(self.matrix[i][i] for i in range(len(self.matrix))) / total

    def to_dict(self) -> dict[str, Any]:
        return {
            "matrix": [list(row) for row in self.matrix],
            "normalized": self.normalized,
            "index_grid": "decile" if self.normalized else "raw",
            "n_samples": self.n_samples,
            "diagonal_fraction": self.diagonal_fraction,
        }


def _decile_cell(index: int, n_steps: int) -> int:
    # index/n mapped onto ten cells; index == n lands in the last cell.
    return (10 * index + n_steps - 1) // n_steps - 1


def coupling_matrix(entries: Sequence[tuple[int, int, int]]) -> CouplingResult:
    """Count matrix over (anchor index, score-aligned index, n_steps) triples.

    When all trajectories share one step count the matrix is raw n x n;
    otherwise indices are normalized onto a 10-cell grid so different lengths
    aggregate coherently.
    """
    if not entries:
        return CouplingResult(matrix=(), normalized=False, n_samples=0)
    step_counts = {n for _, _, n in entries}
    if len(step_counts) == 1:
        n = step_counts.pop()
        grid = [[0] * n for _ in range(n)]
        for anchor, aligned, _ in entries:
            grid[anchor - 1][aligned - 1] += 1
        normalized = False
    else:
        grid = [[0] * 10 for _ in range(10)]
        for anchor, aligned, n_steps in entries:
            grid[_decile_cell(anchor, n_steps)][_decile_cell(aligned, n_steps)] += 1
        normalized = True
    return CouplingResult(
        matrix=tuple(tuple(row) for row in grid),
        normalized=normalized,
        n_samples=len(entries),
    )


def build_coupling_entries(
    samples: Sequence[ScoredSample], instances: dict[str, EvalInstance]
) -> list[tuple[int, int, int]]:
    """Jointly valid (numeric ref and score) samples as coupling-matrix entries."""
    entries: list[tuple[int, int, int]] = []
    for s in samples:
        ref = s.predicted.ref
        score = s.predicted.score
        if not isinstance(ref, int) or not isinstance(score, float):
            continue
        inst = instances.get(s.instance_id)
        if inst is None:
            continue
        demo = [(i, p) for i, (_, p) in enumerate(inst.demo_payload, start=1)]
        aligned = score_aligned_index(score, demo)
        entries.append((ref, aligned, inst.n_steps))
    return entries
