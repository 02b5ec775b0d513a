"""Non-LLM rider policies: threshold rules, tabular Q-learning, and trace imitation."""

from __future__ import annotations

import random
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from ..desire import RewardSpec, StateDelta, reward
from ..domain import AgentState, RLConfig, RuleConfig
from .base import Decision, DecisionContext, StateKey, first_in_order, in_action_order, policy_rng, state_key


def decide_rule(ctx: DecisionContext, params: RuleConfig) -> Decision:
    """Accept when rested, the order pays enough per unit distance, and there is room."""
    if ctx.pending_order is not None:
        dist = max(ctx.expected_distance or 0.0, 1e-9)
        ok = (
            ctx.state.health > params.health_floor
            and ctx.pending_order.payout / dist >= params.yield_floor
            and ctx.held_count < ctx.max_held
        )
        action = "accept" if ok else "reject"
    elif ctx.held_count:
        action = "continue_delivery"
    elif ctx.state.health < params.health_floor:
        action = "go_sleep"
    else:
        action = "wait"
    if action not in ctx.candidates:
        action = first_in_order(ctx.candidates)
    return Decision(action)


class RulePolicy:
    kind = "rule"

    def __init__(self, params: RuleConfig):
        self.params = params

    def decide(self, ctx: DecisionContext) -> Decision:
        return decide_rule(ctx, self.params)


# ---------------------------------------------------------------------------
# Q-learning
# ---------------------------------------------------------------------------

QTable = dict[tuple[StateKey, str], float]


def greedy_action(qtable: Mapping[tuple[StateKey, str], float], key: StateKey, candidates: Sequence[str]) -> str:
    ordered = in_action_order(candidates)
    return max(ordered, key=lambda a: qtable.get((key, a), 0.0))


def decide_rl(ctx: DecisionContext, qtable: QTable, explore_rate: float, rng: random.Random, payout_buckets: Sequence[float]) -> Decision:
    key = state_key(ctx, payout_buckets)
    if explore_rate > 0 and rng.random() < explore_rate:
        action = rng.choice(in_action_order(ctx.candidates))
        how = "explore"
    else:
        action = greedy_action(qtable, key, ctx.candidates)
        how = "greedy"
    return Decision(action, info={"state_key": list(key), "mode": how})


def q_update(
    qtable: QTable,
    key: StateKey,
    action: str,
    r: float,
    next_key: StateKey | None,
    next_candidates: Sequence[str],
    alpha: float,
    gamma: float,
) -> float:
    """One-step Q-learning: Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))."""
    future = 0.0
    if next_key is not None and next_candidates:
        future = max(qtable.get((next_key, a), 0.0) for a in next_candidates)
    old = qtable.get((key, action), 0.0)
    new = old + alpha * (r + gamma * future - old)
    qtable[(key, action)] = new
    return new


def observed_delta(before: AgentState, after: AgentState) -> StateDelta:
    return StateDelta(after.income - before.income, after.health - before.health, after.social_rank - before.social_rank)


class RLPolicy:
    """Online epsilon-greedy Q-learner; the reward for an action is observed at the next decision."""

    kind = "rl"

    def __init__(self, params: RLConfig, normalizers: Sequence[float], seed: int, agent_id: int):
        self.params = params
        self.spec = RewardSpec((1 / 3, 1 / 3, 1 / 3), tuple(normalizers))
        self.seed = seed
        self.agent_id = agent_id
        self.qtable: QTable = {}
        self._last: tuple[StateKey, str, AgentState] | None = None

    def decide(self, ctx: DecisionContext) -> Decision:
        key = state_key(ctx, self.params.payout_buckets)
        info = {}
        if self._last is not None:
            pkey, paction, pstate = self._last
            r = reward(observed_delta(pstate, ctx.state), self.spec)
            q_update(self.qtable, pkey, paction, r, key, ctx.candidates, self.params.alpha, self.params.gamma)
            info["observed_reward"] = round(r, 6)
        rng = policy_rng(self.seed, self.agent_id, ctx.tick, "rl")
        d = decide_rl(ctx, self.qtable, self.params.epsilon, rng, self.params.payout_buckets)
        d.info.update(info)
        self._last = (key, d.action, ctx.state)
        return d


# ---------------------------------------------------------------------------
# Imitation of logged rule-agent decisions
# ---------------------------------------------------------------------------

TraceTable = dict[StateKey, Counter]


def build_trace_table(pairs: Iterable[tuple[Sequence[int], str]]) -> TraceTable:
    table: TraceTable = defaultdict(Counter)
    for key, action in pairs:
        table[tuple(key)][action] += 1
    return dict(table)


def trace_pairs_from_events(events: Iterable[Mapping]) -> list[tuple[tuple[int, ...], str]]:
    """(state_key, action) for every logged rule-policy decision."""
    return [
        (tuple(e["state_key"]), e["action"])
        for e in events
        if e.get("kind") == "decision" and e.get("policy") == "rule" and "state_key" in e
    ]


def decide_imitation(ctx: DecisionContext, trace_table: TraceTable, fallback: RuleConfig, payout_buckets: Sequence[float]) -> Decision:
    key = state_key(ctx, payout_buckets)
    counts = trace_table.get(key)
    if counts:
        seen = [a for a in in_action_order(ctx.candidates) if counts.get(a, 0) > 0]
        if seen:
            action = max(seen, key=lambda a: counts[a])
            return Decision(action, info={"state_key": list(key), "source": "trace"})
    d = decide_rule(ctx, fallback)
    d.info.update({"state_key": list(key), "source": "rule-fallback"})
    return d


@dataclass
class ImitationPolicy:
    trace_table: TraceTable
    fallback: RuleConfig
    payout_buckets: Sequence[float]
    kind: str = "imitation"

    def decide(self, ctx: DecisionContext) -> Decision:
        return decide_imitation(ctx, self.trace_table, self.fallback, self.payout_buckets)
