from __future__ import annotations

import bisect
import random
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol

from ..desire import StateDelta
from ..domain import AgentState, EmotionLabel, Order

ACTION_ORDER: tuple[str, ...] = ("accept", "reject", "wait", "wander", "continue_delivery", "go_sleep")
OFFER_ACTIONS: tuple[str, ...] = ("accept", "reject")
IDLE_ACTIONS: tuple[str, ...] = ("wait", "wander", "go_sleep")

POLICY_TYPES: tuple[str, ...] = ("rule", "imitation", "rl", "llm", "framework")


def in_action_order(actions: Sequence[str]) -> tuple[str, ...]:
    return tuple(sorted(actions, key=ACTION_ORDER.index))


@dataclass(frozen=True)
class DecisionContext:
    """Everything a rider policy may look at when choosing an action."""

    agent_id: int
    tick: int
    state: AgentState
    candidates: tuple[str, ...]
    pending_order: Order | None = None
    held_orders: tuple[Order, ...] = ()
    effects: Mapping[str, StateDelta] = field(default_factory=dict)
    pickup_distance: float | None = None
    prev_state: AgentState | None = None
    prev_emotion: EmotionLabel = EmotionLabel.NEUTRAL
    window_delta: StateDelta = field(default_factory=StateDelta)
    max_held: int = 3
    h_max: float = 100.0
    ticks_per_day: int = 1440

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("decision context needs at least one candidate action")
        unknown = set(self.candidates) - set(ACTION_ORDER)
        if unknown:
            raise ValueError(f"unknown actions {sorted(unknown)}")
        if len(self.held_orders) > self.max_held:
            raise ValueError("more held orders than max_held")

    @property
    def held_count(self) -> int:
        return len(self.held_orders)

    @property
    def expected_distance(self) -> float | None:
        if self.pending_order is None:
            return None
        return (self.pickup_distance or 0.0) + self.pending_order.route_length


@dataclass
class Decision:
    action: str
    rationale: str = ""
    latency_ms: float = 0.0
    info: dict[str, Any] = field(default_factory=dict)


class Policy(Protocol):
    kind: str

    def decide(self, ctx: DecisionContext) -> Decision: ...


def policy_rng(seed: int, agent_id: int, tick: int, stream: str = "policy") -> random.Random:
    """Independent stream per (seed, agent, tick) so riders never perturb each other."""
    return random.Random(f"{seed}:{stream}:{agent_id}:{tick}")


def first_in_order(actions: Sequence[str]) -> str:
    return min(actions, key=ACTION_ORDER.index)


_ACTION_LINE = re.compile(r"^\s*ACTION\s*:\s*([A-Za-z_]+)", re.MULTILINE | re.IGNORECASE)
_REASON_LINE = re.compile(r"^\s*REASON\s*:\s*(.+)$", re.MULTILINE | re.IGNORECASE)


def parse_action(reply: str, candidates: Sequence[str]) -> str | None:
    """The first ``ACTION: <token>`` line, or None when absent or not a candidate."""
    m = _ACTION_LINE.search(reply or "")
    if m is None:
        return None
    token = m.group(1).lower()
    return token if token in candidates else None


def parse_reason(reply: str) -> str:
    m = _REASON_LINE.search(reply or "")
    if m is not None:
        return m.group(1).strip()
    return " ".join((reply or "").split())[:200]


StateKey = tuple[int, int, int, int]


def state_key(ctx: DecisionContext, payout_buckets: Sequence[float]) -> StateKey:
    """Discretised (health x5, held x4, payout x5, rank tier x3) state."""
    health = min(4, max(0, int(5 * ctx.state.health / ctx.h_max)))
    held = min(3, ctx.held_count)
    if ctx.pending_order is None:
        payout = 0
    else:
        payout = min(4, bisect.bisect_right(list(payout_buckets), ctx.pending_order.payout))
    tier = min(2, max(0, int(3 * ctx.state.social_rank)))
    return (health, held, payout, tier)
