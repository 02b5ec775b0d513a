"""Desire update, objective selection, reward-tilted action distribution and prompt rendering."""

from __future__ import annotations

import math
import string
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .domain import DIMENSIONS, AgentState, DesireConfig, DesireVector, EmotionLabel, Order

TEMPLATE_IDS: dict[str, str] = {
    "income": "focus_income",
    "health": "focus_health",
    "rank": "focus_rank",
}


@dataclass(frozen=True)
class StateDelta:
    d_income: float = 0.0
    d_health: float = 0.0
    d_rank: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(x) for x in self.as_tuple()):
            raise ValueError(f"state delta must be finite, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.d_income, self.d_health, self.d_rank)

    def __sub__(self, other: "StateDelta") -> "StateDelta":
        return StateDelta(*(a - b for a, b in zip(self.as_tuple(), other.as_tuple())))


@dataclass(frozen=True)
class RewardSpec:
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    normalizers: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        if len(self.weights) != 3 or len(self.normalizers) != 3:
            raise ValueError("reward spec needs three weights and three normalizers")
        if not all(s > 0 for s in self.normalizers):
            raise ValueError("reward normalizers must be positive")
        if not all(math.isfinite(w) for w in self.weights):
            raise ValueError("reward weights must be finite")


@dataclass(frozen=True)
class ObjectivePlan:
    desire: DesireVector
    focus_dimension: str
    reward_weights: tuple[float, float, float]
    prompt_template_id: str
    delta: StateDelta = field(default_factory=StateDelta)


@dataclass(frozen=True)
class ActionDistribution:
    actions: tuple[str, ...]
    base_probs: tuple[float, ...]
    rewards: tuple[float, ...]
    beta: float = 1.0

    def __post_init__(self) -> None:
        n = len(self.actions)
        if n == 0 or len(self.base_probs) != n or len(self.rewards) != n:
            raise ValueError("actions, base_probs and rewards must be non-empty and equally long")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if any(p < 0 for p in self.base_probs):
            raise ValueError("base probabilities must be non-negative")
        total = math.fsum(self.base_probs)
        if total == 0:
            raise ValueError("all base probabilities are zero")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"base probabilities must sum to 1, got {total!r}")

    @classmethod
    def uniform(cls, actions: Sequence[str], rewards: Sequence[float], beta: float = 1.0) -> "ActionDistribution":
        n = len(actions)
        return cls(tuple(actions), tuple([1.0 / n] * n), tuple(float(r) for r in rewards), beta)


def anomalous_dimension(delta: StateDelta, cfg: DesireConfig) -> str | None:
    """The dimension that fell abnormally while the other two held steady or improved."""
    raw = delta.as_tuple()
    for i, dim in enumerate(DIMENSIONS):
        z = raw[i] / cfg.anomaly_scales[i]
        if z < -cfg.anomaly_threshold and all(raw[j] >= 0 for j in range(3) if j != i):
            return dim
    return None


def update_desire(
    prev_emotion: EmotionLabel,
    cur_emotion: EmotionLabel,
    delta: StateDelta,
    prev_desire: DesireVector,
    cfg: DesireConfig,
) -> DesireVector:
    # emotion change is the only trigger
    if EmotionLabel(cur_emotion) is EmotionLabel(prev_emotion):
        return prev_desire
    dim = anomalous_dimension(delta, cfg)
    if dim is None:
        return prev_desire
    weights = list(prev_desire.as_tuple())
    weights[DIMENSIONS.index(dim)] = max(weights) + cfg.boost
    return DesireVector.normalized(*weights)


def reward(delta: StateDelta, spec: RewardSpec) -> float:
    return sum(w * d / s for w, d, s in zip(spec.weights, delta.as_tuple(), spec.normalizers))


def focus_of(desire: DesireVector) -> str:
    ws = desire.as_tuple()
    # max() keeps the first maximum, giving the income < health < rank tie order
    return DIMENSIONS[max(range(3), key=lambda i: ws[i])]


def optimize_objective(desire: DesireVector, delta: StateDelta | None = None, cfg: DesireConfig | None = None) -> ObjectivePlan:
    focus = focus_of(desire)
    return ObjectivePlan(
        desire=desire,
        focus_dimension=focus,
        reward_weights=desire.as_tuple(),
        prompt_template_id=TEMPLATE_IDS[focus],
        delta=delta or StateDelta(),
    )


def tilt_distribution(dist: ActionDistribution) -> np.ndarray:
    """pi*(a) proportional to pi_F(a) * exp(reward(a) / beta), normalised over the actions."""
    p = np.asarray(dist.base_probs, dtype=float)
    support = p > 0
    if not support.any():
        raise ValueError("all base probabilities are zero")
    logits = np.asarray(dist.rewards, dtype=float) / dist.beta
    logits = logits - logits[support].max()
    w = np.zeros_like(p)
    w[support] = p[support] * np.exp(logits[support])
    return w / w.sum()


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------


class TemplateRegistry:
    """Text templates keyed by id, loaded from ``<id>.txt`` files."""

    def __init__(self, templates: Mapping[str, str]):
        self._templates = {k: string.Template(v) for k, v in templates.items()}

    @classmethod
    def from_directory(cls, path: str | Path) -> "TemplateRegistry":
        path = Path(path)
        return cls({p.stem: p.read_text(encoding="utf-8") for p in sorted(path.glob("*.txt"))})

    @classmethod
    def default(cls) -> "TemplateRegistry":
        root = resources.files("emocog") / "templates"
        return cls({p.name[:-4]: p.read_text(encoding="utf-8") for p in root.iterdir() if p.name.endswith(".txt")})

    def __contains__(self, template_id: str) -> bool:
        return template_id in self._templates

    def ids(self) -> list[str]:
        return sorted(self._templates)

    def render(self, template_id: str, **fields: str) -> str:
        try:
            tpl = self._templates[template_id]
        except KeyError:
            raise KeyError(f"no prompt template {template_id!r}") from None
        return tpl.substitute(fields)


_DEFAULT_REGISTRY: TemplateRegistry | None = None


def default_registry() -> TemplateRegistry:
    global _DEFAULT_REGISTRY
    if _DEFAULT_REGISTRY is None:
        _DEFAULT_REGISTRY = TemplateRegistry.default()
    return _DEFAULT_REGISTRY


def _clock(tick: int, ticks_per_day: int) -> str:
    day, tod = divmod(tick, ticks_per_day)
    minutes = tod * 1440 // ticks_per_day
    return f"day {day + 1}, {minutes // 60:02d}:{minutes % 60:02d}"


def describe_situation(
    pending_order: Order | None,
    held_count: int,
    max_held: int,
    pickup_distance: float | None = None,
    tick: int | None = None,
) -> str:
    lines = [f"Orders currently held: {held_count}/{max_held}."]
    if pending_order is None:
        lines.append("No order is being offered right now.")
    else:
        o = pending_order
        lines.append(f"The platform offers order #{o.id}: payout {o.payout:.2f}.")
        if pickup_distance is not None:
            lines.append(f"Distance to the restaurant: {pickup_distance:.1f}; restaurant to customer: {o.route_length:.1f}.")
        else:
            lines.append(f"Restaurant to customer distance: {o.route_length:.1f}.")
        if tick is not None:
            lines.append(f"Deadline in {o.deadline_tick - tick} minutes.")
    return "\n".join(lines)


def format_memory(snippets: Sequence[str]) -> str:
    if not snippets:
        return "(no relevant memories)"
    return "\n".join(f"{i + 1}. {s}" for i, s in enumerate(snippets))


def state_fields(state: AgentState, h_max: float, ticks_per_day: int) -> dict[str, str]:
    return {
        "clock": _clock(state.tick, ticks_per_day),
        "income": f"{state.income:.2f}",
        "health": f"{state.health:.1f}",
        "h_max": f"{h_max:.0f}",
        "rank": f"{state.social_rank:.2f}",
        "emotion": EmotionLabel(state.emotion).value,
    }


def render_prompt(
    plan: ObjectivePlan,
    state: AgentState,
    memory_snippets: Sequence[str],
    pending_order: Order | None,
    actions: Sequence[str],
    *,
    held_count: int = 0,
    max_held: int = 3,
    pickup_distance: float | None = None,
    h_max: float = 100.0,
    ticks_per_day: int = 1440,
    registry: TemplateRegistry | None = None,
) -> str:
    registry = registry or default_registry()
    d = plan.delta
    w = plan.desire
    return registry.render(
        plan.prompt_template_id,
        **state_fields(state, h_max, ticks_per_day),
        d_income=f"{d.d_income:+.2f}",
        d_health=f"{d.d_health:+.1f}",
        d_rank=f"{d.d_rank:+.2f}",
        w_income=f"{w.w_income:.2f}",
        w_health=f"{w.w_health:.2f}",
        w_rank=f"{w.w_rank:.2f}",
        memory=format_memory(memory_snippets),
        situation=describe_situation(pending_order, held_count, max_held, pickup_distance, state.tick),
        actions=", ".join(actions),
    )
