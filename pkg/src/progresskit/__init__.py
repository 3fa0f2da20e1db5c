"""Toolkit for building single-observation task-progress benchmarks,
evaluating chat-completion models against them, and scoring the results."""

from .model import (
    ABSTAIN,
    MALFORMED,
    Embodiment,
    EvalInstance,
    KeyStep,
    MetricsReport,
    Modality,
    ParsedPrediction,
    ReviewCandidate,
    ScoredSample,
    Trajectory,
    View,
)

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "MALFORMED",
    "Embodiment",
    "EvalInstance",
    "KeyStep",
    "MetricsReport",
    "Modality",
    "ParsedPrediction",
    "ReviewCandidate",
    "ScoredSample",
    "Trajectory",
    "View",
    "__version__",
]
