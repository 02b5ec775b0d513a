"""PAD appraisal of state changes and nearest-centroid emotion labels."""

from __future__ import annotations

import bisect
import math
from collections.abc import Iterable, Sequence

from .domain import EMOTION_ORDER, AgentState, EmotionConfig, EmotionLabel, PadVector

__all__ = [
    "EmotionConfig",
    "clamp_unit",
    "dominance_for_rank",
    "compute_pad",
    "classify_emotion",
    "happiness_fraction",
]


def clamp_unit(x: float) -> float:
    return -1.0 if x < -1.0 else 1.0 if x > 1.0 else x


def dominance_for_rank(rank: float, cfg: EmotionConfig) -> float:
    """Dominance of the highest criteria tier whose threshold is <= rank."""
    thresholds = [t for t, _ in cfg.dominance_criteria]
    i = bisect.bisect_right(thresholds, rank) - 1
    if i < 0:
        return clamp_unit(cfg.dominance_criteria[0][1])
    return clamp_unit(cfg.dominance_criteria[i][1])


def compute_pad(prev: AgentState, cur: AgentState, cfg: EmotionConfig) -> PadVector:
    """Pleasure tracks the income change, arousal the health change, dominance the rank tier."""
    return PadVector(
        pleasure=clamp_unit(cfg.k_p * (cur.income - prev.income)),
        arousal=clamp_unit(cfg.k_a * (cur.health - prev.health)),
        dominance=dominance_for_rank(cur.social_rank, cfg),
    )


def classify_emotion(pad: PadVector, cfg: EmotionConfig) -> EmotionLabel:
    """Nearest centroid in Euclidean PAD space; ties go to the earlier label in EMOTION_ORDER."""
    p = pad.as_tuple()
    best = EmotionLabel.NEUTRAL
    best_d = math.inf
    for label in EMOTION_ORDER:
        c = cfg.centroids[label.value]
        d = (p[0] - c[0]) ** 2 + (p[1] - c[1]) ** 2 + (p[2] - c[2]) ** 2
        if d < best_d:
            best, best_d = label, d
    return best


def happiness_fraction(labels: Sequence[EmotionLabel | str] | Iterable[EmotionLabel | str]) -> float:
    labels = list(labels)
    if not labels:
        raise ValueError("happiness_fraction of an empty sequence")
    happy = sum(1 for lab in labels if EmotionLabel(lab) is EmotionLabel.HAPPINESS)
    return happy / len(labels)
