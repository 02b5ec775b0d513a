"""Discrete-time O2O delivery world: bookers, makers, a dispatching platform and rider agents.

One tick is one simulated minute at the default ``ticks_per_day = 1440``.
Every random draw comes from a seeded stream, and all rider decisions taken
within a tick are applied in rider-id order, so a (config, seed, backend
fixture) triple always reproduces the same event log byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import random
from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .desire import StateDelta
from .domain import AgentState, EmotionLabel, Order, OrderState, ScenarioConfig, manhattan
from .emotion import classify_emotion, compute_pad, happiness_fraction
from .policies import (
    IDLE_ACTIONS,
    OFFER_ACTIONS,
    POLICY_TYPES,
    Decision,
    DecisionContext,
    LlmBackend,
    Policy,
    TraceTable,
    build_trace_table,
    make_policy,
    policy_rng,
    state_key,
    trace_pairs_from_events,
)

log = logging.getLogger(__name__)

EVENT_KINDS = frozenset(
    {"offer", "decision", "pickup", "deliver", "expire", "sleep", "wake", "emotion_sample", "desire_update", "backend_error"}
)
PLATFORM = -1

DAILY_COLUMNS = [
    "day",
    "agent",
    "policy",
    "tier",
    "income",
    "cumulative_income",
    "distance",
    "cumulative_distance",
    "deliveries",
    "offers",
    "accepts",
    "acceptance_rate",
    "emotion_samples",
    "happiness_fraction",
    "health_end",
    "social_rank",
    "focus",
    "w_income",
    "w_health",
    "w_rank",
]


def _r(x: float) -> float:
    return round(float(x), 6)


def income_percentiles(incomes: Sequence[float]) -> list[float]:
    """Mid-rank percentile of each income among all riders, in [0, 1]."""
    n = len(incomes)
    if n == 1:
        return [0.5]
    out = []
    for i, x in enumerate(incomes):
        below = sum(1 for j, y in enumerate(incomes) if j != i and y < x)
        ties = sum(1 for j, y in enumerate(incomes) if j != i and y == x)
        out.append((below + 0.5 * ties) / (n - 1))
    return out


@dataclass
class Rider:
    id: int
    policy: Policy
    tier: float
    pos: tuple[float, float]
    spot: tuple[float, float]
    health: float
    income_cents: int = 0  # integer cents keep payout bookkeeping exact
    rank: float = 0.5
    distance: float = 0.0
    mode: str = "asleep"  # asleep | working | napping
    nap_until: int = 0
    next_idle_decision: int = 0
    held: list[Order] = field(default_factory=list)
    emotion: EmotionLabel = EmotionLabel.NEUTRAL
    last_sample: AgentState | None = None
    history: deque = field(default_factory=deque)
    # per-day counters
    day_cents0: int = 0
    day_distance0: float = 0.0
    offers: int = 0
    accepts: int = 0
    deliveries: int = 0
    labels: list[EmotionLabel] = field(default_factory=list)

    @property
    def income(self) -> float:
        return self.income_cents / 100

    @property
    def kind(self) -> str:
        return self.policy.kind

    def state(self, tick: int, emotion: EmotionLabel | None = None) -> AgentState:
        return AgentState(tick, self.income, self.health, self.rank, emotion or self.emotion)


class EventLog:
    """Buffers one tick of events, then releases them ordered by (tick, agent, seq)."""

    def __init__(self, sink: io.TextIOBase | None = None, keep: bool = True):
        self.sink = sink
        self.keep = keep
        self.events: list[dict] = []
        self._buffer: list[dict] = []
        self._seq = 0
        self._hash = hashlib.sha256()

    def emit(self, tick: int, agent: int, kind: str, **payload: Any) -> dict:
        assert kind in EVENT_KINDS, kind
        ev = {"tick": tick, "agent": agent, "seq": self._seq, "kind": kind, **payload}
        self._seq += 1
        self._buffer.append(ev)
        return ev

    def flush(self) -> list[dict]:
        batch = sorted(self._buffer, key=lambda e: (e["tick"], e["agent"], e["seq"]))
        self._buffer = []
        for ev in batch:
            line = json.dumps(ev, separators=(",", ":"), ensure_ascii=False) + "\n"
            self._hash.update(line.encode("utf-8"))
            if self.sink is not None:
                self.sink.write(line)
        if self.keep:
            self.events.extend(batch)
        return batch

    @property
    def digest(self) -> str:
        return self._hash.hexdigest()


@dataclass
class RunLog:
    events: list[dict]
    daily: list[dict]
    digest: str
    assignment: list[str]

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "events.jsonl").open("w", encoding="utf-8") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev, separators=(",", ":"), ensure_ascii=False) + "\n")
        write_daily_csv(self.daily, out / "daily.csv")


def write_daily_csv(rows: Iterable[Mapping], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DAILY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


class World:
    def __init__(
        self,
        cfg: ScenarioConfig,
        policies: Sequence[Policy],
        *,
        events: EventLog | None = None,
        memory_dir: str | Path | None = None,
    ):
        self.cfg = cfg
        self.tick = 0
        self.events = events or EventLog()
        self.memory_dir = Path(memory_dir) if memory_dir else None
        self.rng = random.Random(f"{cfg.seed}:world")
        g = cfg.grid
        self.restaurants: list[tuple[float, float]] = [
            (float(self.rng.randrange(g.width)), float(self.rng.randrange(g.height))) for _ in range(g.n_restaurants)
        ]
        self.orders: dict[int, Order] = {}
        self.pending: list[Order] = []
        self._next_order = 0
        self.daily: list[dict] = []
        self.riders: list[Rider] = []
        tiers = cfg.acceptance_tiers
        for i, pol in enumerate(policies):
            home = (float(self.rng.randrange(g.width)), float(self.rng.randrange(g.height)))
            r = Rider(
                id=i,
                policy=pol,
                tier=tiers[i % len(tiers)],
                pos=home,
                spot=self.restaurants[self.rng.randrange(len(self.restaurants))],
                health=cfg.h_max,
            )
            r.last_sample = r.state(0)
            r.history.append((0, r.income, r.health, r.rank))
            self.riders.append(r)
        self._recompute_ranks()
        self._executor: ThreadPoolExecutor | None = None
        if cfg.backend.fanout > 1 and any(p.kind in ("llm", "framework") for p in policies):
            self._executor = ThreadPoolExecutor(max_workers=cfg.backend.fanout, thread_name_prefix="policy")

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    @property
    def day(self) -> int:
        return self.tick // self.cfg.ticks_per_day

    def _tod(self, tick: int) -> int:
        return tick % self.cfg.ticks_per_day

    def _on_shift(self, tick: int) -> bool:
        return self.cfg.work_start <= self._tod(tick) < self.cfg.work_end

    def _recompute_ranks(self) -> None:
        ranks = income_percentiles([r.income for r in self.riders]) if self.riders else []
        for r, p in zip(self.riders, ranks):
            r.rank = p

    def _order_rate(self, tod: int) -> float:
        o = self.cfg.orders
        peak = o.lunch_peak[0] <= tod < o.lunch_peak[1] or o.dinner_peak[0] <= tod < o.dinner_peak[1]
        return o.base_rate * (o.peak_multiplier if peak else 1.0)

    def add_order(self, order: Order) -> Order:
        self.orders[order.id] = order
        if order.state is OrderState.PENDING:
            self.pending.append(order)
        self._next_order = max(self._next_order, order.id + 1)
        return order

    def assign(self, order: Order, rider: Rider) -> None:
        order.advance(OrderState.ASSIGNED)
        order.rider = rider.id
        rider.held.append(order)
        if order in self.pending:
            self.pending.remove(order)
        assert len(rider.held) <= self.cfg.max_held_orders, "held-order cap violated"

    def _spawn_order(self, t: int) -> None:
        o = self.cfg.orders
        g = self.cfg.grid
        rest = self.restaurants[self.rng.randrange(len(self.restaurants))]
        radius = g.delivery_radius
        while True:
            dx = self.rng.uniform(-radius, radius)
            dy = self.rng.uniform(-radius, radius)
            if abs(dx) + abs(dy) > radius:
                continue
            cx = min(g.width - 1, max(0, round(rest[0] + dx)))
            cy = min(g.height - 1, max(0, round(rest[1] + dy)))
            if (cx, cy) != rest:
                break
        consumer = (float(cx), float(cy))
        route = manhattan(rest, consumer)
        payout = round(o.payout_base + o.payout_per_unit * route + self.rng.uniform(0.0, o.payout_noise), 2)
        prep = self.rng.randint(o.prep_min, o.prep_max)
        travel = math.ceil(route / self.cfg.speed_per_tick)
        day_end = (t // self.cfg.ticks_per_day + 1) * self.cfg.ticks_per_day
        deadline = min(t + prep + travel + o.deadline_slack, day_end - 2)
        order = Order(
            id=self._next_order,
            restaurant_pos=rest,
            consumer_pos=consumer,
            payout=payout,
            created_tick=t,
            deadline_tick=max(deadline, t + 1),
            ready_tick=t + prep,
        )
        self.add_order(order)

    # ------------------------------------------------------------------
    # effect model
    # ------------------------------------------------------------------

    def effect_estimate(self, rider: Rider, action: str, order: Order | None = None) -> StateDelta:
        """Deterministic one-step projection of (income, health, rank) change for an action."""
        s = self.cfg.stamina
        if action == "accept":
            if order is None:
                raise ValueError("accept needs the offered order")
            dist = manhattan(rider.pos, order.restaurant_pos) + order.route_length
            others = [r.income for r in self.riders if r is not rider]
            now = income_percentiles([rider.income] + others)[0]
            after = income_percentiles([rider.income + order.payout] + others)[0]
            return StateDelta(order.payout, -s.cost_per_unit * dist, after - now)
        if action in ("wait", "reject"):
            return StateDelta(0.0, -s.idle_cost_per_tick * self.cfg.policy.decision_interval, 0.0)
        if action == "wander":
            return StateDelta(0.0, -s.cost_per_unit * s.wander_distance, 0.0)
        if action == "go_sleep":
            return StateDelta(0.0, min(s.nap_restore_per_tick * s.nap_ticks, self.cfg.h_max - rider.health), 0.0)
        if action == "continue_delivery":
            return StateDelta(0.0, -s.cost_per_unit * self.cfg.speed_per_tick * self.cfg.policy.decision_interval, 0.0)
        raise ValueError(f"unknown action {action!r}")

    # ------------------------------------------------------------------
    # perception
    # ------------------------------------------------------------------

    def _sample_emotion(self, rider: Rider, t: int, reason: str) -> tuple[AgentState, EmotionLabel]:
        """Appraise the change since the rider's previous sample; returns (previous sample, previous label)."""
        prev = rider.last_sample
        prev_label = rider.emotion
        cur = rider.state(t)
        pad = compute_pad(prev, cur, self.cfg.emotion)
        label = classify_emotion(pad, self.cfg.emotion)
        rider.emotion = label
        rider.last_sample = rider.state(t, label)
        rider.labels.append(label)
        rider.history.append((t, rider.income, rider.health, rider.rank))
        horizon = t - self.cfg.desire.window_ticks
        while len(rider.history) > 1 and rider.history[1][0] <= horizon:
            rider.history.popleft()
        self.events.emit(
            t,
            rider.id,
            "emotion_sample",
            label=label.value,
            prev_label=prev_label.value,
            pad=[_r(x) for x in pad.as_tuple()],
            reason=reason,
        )
        return prev, prev_label

    def _window_delta(self, rider: Rider) -> StateDelta:
        t0, i0, h0, r0 = rider.history[0]
        return StateDelta(rider.income - i0, rider.health - h0, rider.rank - r0)

    # ------------------------------------------------------------------
    # the tick
    # ------------------------------------------------------------------

    def step(self) -> list[dict]:
        t = self.tick
        cfg = self.cfg
        tod = self._tod(t)

        if tod == cfg.work_start:
            for r in self.riders:
                if r.mode == "asleep":
                    r.mode = "working"
                    r.next_idle_decision = t
                    self.events.emit(t, r.id, "wake", reason="shift_start")

        self._expire_orders(t)

        if self._on_shift(t) and self.rng.random() < self._order_rate(tod):
            self._spawn_order(t)

        offers = self._dispatch(t) if self._on_shift(t) else {}
        self._decide(t, offers)
        self._move(t)

        if tod >= cfg.work_end:
            for r in self.riders:
                if r.mode == "working" and not r.held:
                    r.mode = "asleep"
                    self.events.emit(t, r.id, "sleep", reason="shift_end")

        if tod == cfg.ticks_per_day - 1:
            self._rollover(t)

        self.tick += 1
        return self.events.flush()

    def _expire_orders(self, t: int) -> None:
        for order in list(self.orders.values()):
            if order.state in (OrderState.DELIVERED, OrderState.EXPIRED) or order.deadline_tick > t:
                continue
            holder = order.rider if order.rider is not None else PLATFORM
            order.advance(OrderState.EXPIRED)
            if holder != PLATFORM:
                rider = self.riders[holder]
                rider.held.remove(order)
            if order in self.pending:
                self.pending.remove(order)
            self.events.emit(t, holder, "expire", order=order.id)
        # terminal orders are no longer needed for the simulation
        for oid in [oid for oid, o in self.orders.items() if o.state in (OrderState.DELIVERED, OrderState.EXPIRED)]:
            del self.orders[oid]

    def _eligible(self, r: Rider) -> bool:
        return r.mode == "working" and r.health > 0 and len(r.held) < self.cfg.max_held_orders

    def _dispatch(self, t: int) -> dict[int, Order]:
        offers: dict[int, Order] = {}
        for order in self.pending:
            cands = [r for r in self.riders if r.id not in offers and r.id not in order.declined_by and self._eligible(r)]
            if not cands:
                continue
            cands.sort(key=lambda r: (manhattan(r.pos, order.restaurant_pos), r.id))
            for r in cands:
                if self.rng.random() < r.tier:
                    offers[r.id] = order
                    r.offers += 1
                    self.events.emit(
                        t,
                        r.id,
                        "offer",
                        order=order.id,
                        payout=order.payout,
                        pickup_distance=_r(manhattan(r.pos, order.restaurant_pos)),
                        route_distance=_r(order.route_length),
                        deadline=order.deadline_tick,
                    )
                    break
        return offers

    def _context(self, r: Rider, t: int, order: Order | None, candidates: tuple[str, ...]) -> DecisionContext:
        prev_state, prev_label = self._sample_emotion(r, t, "decision")
        effects = {a: self.effect_estimate(r, a, order) for a in candidates}
        return DecisionContext(
            agent_id=r.id,
            tick=t,
            state=r.state(t),
            candidates=candidates,
            pending_order=order,
            held_orders=tuple(r.held),
            effects=effects,
            pickup_distance=manhattan(r.pos, order.restaurant_pos) if order is not None else None,
            prev_state=prev_state,
            prev_emotion=prev_label,
            window_delta=self._window_delta(r),
            max_held=self.cfg.max_held_orders,
            h_max=self.cfg.h_max,
            ticks_per_day=self.cfg.ticks_per_day,
        )

    def _decide(self, t: int, offers: Mapping[int, Order]) -> None:
        jobs: list[tuple[Rider, DecisionContext]] = []
        for r in self.riders:
            if r.id in offers:
                jobs.append((r, self._context(r, t, offers[r.id], OFFER_ACTIONS)))
            elif r.mode == "working" and not r.held and self._on_shift(t) and t >= r.next_idle_decision:
                jobs.append((r, self._context(r, t, None, IDLE_ACTIONS)))
        if not jobs:
            return
        remote = [j for j in jobs if j[0].kind in ("llm", "framework")]
        if self._executor is not None and len(remote) > 1:
            futures = {j[0].id: self._executor.submit(j[0].policy.decide, j[1]) for j in remote}
            decisions = {r.id: (futures[r.id].result() if r.id in futures else r.policy.decide(ctx)) for r, ctx in jobs}
        else:
            decisions = {r.id: r.policy.decide(ctx) for r, ctx in jobs}
        for r, ctx in jobs:
            self._apply(r, ctx, decisions[r.id], t)

    def _apply(self, r: Rider, ctx: DecisionContext, d: Decision, t: int) -> None:
        if d.action not in ctx.candidates:
            raise RuntimeError(f"policy {r.kind} chose {d.action!r} outside {ctx.candidates}")
        payload: dict[str, Any] = {
            "policy": r.kind,
            "action": d.action,
            "candidates": list(ctx.candidates),
            "state_key": list(state_key(ctx, self.cfg.policy.rl.payout_buckets)),
            "rationale": d.rationale,
        }
        order = ctx.pending_order
        if order is not None:
            payload["order"] = order.id
        for key in ("focus", "desire", "llm_action", "prompt_hash", "pi_star", "mode", "source"):
            if key in d.info:
                payload[key] = d.info[key]
        self.events.emit(t, r.id, "decision", **payload)
        if "desire_update" in d.info:
            self.events.emit(t, r.id, "desire_update", **d.info["desire_update"])
        if "backend_error" in d.info:
            self.events.emit(t, r.id, "backend_error", policy=r.kind, error=d.info["backend_error"])

        interval = self.cfg.policy.decision_interval
        if d.action == "accept":
            self.assign(order, r)
            r.accepts += 1
        elif d.action == "reject":
            order.declined_by.add(r.id)
        elif d.action == "wait":
            r.next_idle_decision = t + interval
        elif d.action == "wander":
            rng = policy_rng(self.cfg.seed, r.id, t, "wander")
            choices = [p for p in self.restaurants if p != r.spot] or self.restaurants
            r.spot = choices[rng.randrange(len(choices))]
            r.next_idle_decision = t + interval
        elif d.action == "go_sleep":
            self._nap(r, t, "rest")

    def _nap(self, r: Rider, t: int, reason: str) -> None:
        r.mode = "napping"
        r.nap_until = t + self.cfg.stamina.nap_ticks
        self.events.emit(t, r.id, "sleep", reason=reason)

    def _next_stop(self, r: Rider) -> tuple[float, float]:
        """Nearest outstanding pickup or drop-off; ties by order id, pickups first."""
        stops = []
        for o in r.held:
            if o.state is OrderState.ASSIGNED:
                stops.append((manhattan(r.pos, o.restaurant_pos), o.id, 0, o.restaurant_pos))
            else:
                stops.append((manhattan(r.pos, o.consumer_pos), o.id, 1, o.consumer_pos))
        return min(stops)[3]

    def _move(self, t: int) -> None:
        cfg = self.cfg
        st = cfg.stamina
        for r in self.riders:
            if r.mode == "napping":
                r.health = min(cfg.h_max, r.health + st.nap_restore_per_tick)
                if t + 1 >= r.nap_until:
                    r.mode = "working"
                    r.next_idle_decision = t + 1
                    self.events.emit(t, r.id, "wake", reason="nap_end")
                continue
            if r.mode != "working":
                continue
            target = self._next_stop(r) if r.held else r.spot
            moved = _walk(r, target, cfg.speed_per_tick)
            if moved > 0:
                r.distance += moved
                r.health = max(0.0, r.health - st.cost_per_unit * moved)
            else:
                r.health = max(0.0, r.health - st.idle_cost_per_tick)
            if r.held and r.pos == target:
                self._handle_arrival(r, t)
            if r.health <= 0:
                self._nap(r, t, "exhausted")

    def _handle_arrival(self, r: Rider, t: int) -> None:
        for o in sorted(r.held, key=lambda o: o.id):
            if o.state is OrderState.ASSIGNED and o.restaurant_pos == r.pos and o.ready_tick <= t:
                o.advance(OrderState.PICKED_UP)
                self.events.emit(t, r.id, "pickup", order=o.id)
        for o in sorted(r.held, key=lambda o: o.id):
            if o.state is OrderState.PICKED_UP and o.consumer_pos == r.pos:
                o.advance(OrderState.DELIVERED)
                r.held.remove(o)
                r.income_cents += round(o.payout * 100)
                r.deliveries += 1
                self.events.emit(t, r.id, "deliver", order=o.id, payout=o.payout)

    def _rollover(self, t: int) -> None:
        cfg = self.cfg
        for r in self.riders:
            if r.mode != "asleep":
                r.mode = "asleep"
                self.events.emit(t, r.id, "sleep", reason="day_end")
            r.health = cfg.h_max
        self._recompute_ranks()
        day = t // cfg.ticks_per_day
        for r in self.riders:
            self._sample_emotion(r, t, "rollover")
            self.daily.append(self._summary_row(r, day))
            r.day_cents0 = r.income_cents
            r.day_distance0 = r.distance
            r.offers = r.accepts = r.deliveries = 0
            r.labels = []
            if self.memory_dir is not None and hasattr(r.policy, "memory"):
                r.policy.memory.snapshot(self.memory_dir / f"agent_{r.id}.jsonl")

    def _summary_row(self, r: Rider, day: int) -> dict:
        desire = getattr(r.policy, "desire", None)
        row = {
            "day": day + 1,
            "agent": r.id,
            "policy": r.kind,
            "tier": r.tier,
            "income": (r.income_cents - r.day_cents0) / 100,
            "cumulative_income": r.income,
            "distance": _r(r.distance - r.day_distance0),
            "cumulative_distance": _r(r.distance),
            "deliveries": r.deliveries,
            "offers": r.offers,
            "accepts": r.accepts,
            "acceptance_rate": _r(r.accepts / r.offers) if r.offers else "",
            "emotion_samples": len(r.labels),
            "happiness_fraction": _r(happiness_fraction(r.labels)),
            "health_end": _r(r.health),
            "social_rank": _r(r.rank),
            "focus": "",
            "w_income": "",
            "w_health": "",
            "w_rank": "",
        }
        if desire is not None:
            from .desire import focus_of

            row["focus"] = focus_of(desire)
            row["w_income"], row["w_health"], row["w_rank"] = (_r(w) for w in desire.as_tuple())
        return row


def _walk(r: Rider, target: tuple[float, float], speed: float) -> float:
    """Manhattan step toward target (x first, then y); snaps on arrival. Returns distance moved."""
    x, y = r.pos
    budget = speed
    moved = 0.0
    dx = target[0] - x
    if dx:
        step = min(abs(dx), budget)
        x = target[0] if step == abs(dx) else x + math.copysign(step, dx)
        budget -= step
        moved += step
    dy = target[1] - y
    if dy and budget > 0:
        step = min(abs(dy), budget)
        y = target[1] if step == abs(dy) else y + math.copysign(step, dy)
        moved += step
    r.pos = (x, y)
    return moved


# ---------------------------------------------------------------------------
# whole runs
# ---------------------------------------------------------------------------


def parse_assignment(assignment: str | Sequence[str], n_riders: int) -> list[str]:
    """``all:<type>`` or a comma list of one policy type per rider."""
    if isinstance(assignment, str):
        assignment = assignment.strip()
        if assignment.startswith("all:"):
            kinds = [assignment[4:]] * n_riders
        else:
            kinds = [k.strip() for k in assignment.split(",") if k.strip()]
    else:
        kinds = list(assignment)
    if len(kinds) != n_riders:
        raise ValueError(f"policy list names {len(kinds)} riders, scenario has {n_riders}")
    bad = [k for k in kinds if k not in POLICY_TYPES]
    if bad:
        raise ValueError(f"unknown policy types {bad}; expected {POLICY_TYPES}")
    return kinds


def pilot_trace_table(cfg: ScenarioConfig) -> TraceTable:
    """Trace table from a short all-rule run with the same seed."""
    pilot = cfg.replace(n_days=cfg.policy.imitation_pilot_days)
    log_ = run(pilot, ["rule"] * cfg.n_riders)
    return build_trace_table(trace_pairs_from_events(log_.events))


def run(
    cfg: ScenarioConfig,
    assignment: str | Sequence[str],
    *,
    backend: LlmBackend | None = None,
    out_dir: str | Path | None = None,
    trace_table: TraceTable | None = None,
    progress: bool = False,
) -> RunLog:
    """Simulate ``cfg.n_days`` days. With ``out_dir``, events.jsonl, daily.csv and memory snapshots are written there."""
    kinds = parse_assignment(assignment, cfg.n_riders)
    if "imitation" in kinds and trace_table is None:
        trace_table = pilot_trace_table(cfg)
    policies = [make_policy(k, i, cfg, backend=backend, trace_table=trace_table) for i, k in enumerate(kinds)]
    sink = None
    out = Path(out_dir) if out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        sink = (out / "events.jsonl").open("w", encoding="utf-8")
    try:
        world = World(cfg, policies, events=EventLog(sink), memory_dir=(out / "memory") if out else None)
        try:
            total = cfg.n_days * cfg.ticks_per_day
            for _ in range(total):
                world.step()
                if progress and world.tick % cfg.ticks_per_day == 0:
                    log.info("day %d/%d done", world.day, cfg.n_days)
        finally:
            world.close()
    finally:
        if sink is not None:
            sink.close()
    result = RunLog(world.events.events, world.daily, world.events.digest, kinds)
    if out is not None:
        write_daily_csv(result.daily, out / "daily.csv")
    return result


def read_events(path: str | Path) -> list[dict]:
    events = []
    with Path(path).open(encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: not valid JSON ({exc.msg})") from exc
            if not isinstance(ev, dict) or "kind" not in ev or "tick" not in ev:
                raise ValueError(f"{path}:{n}: not an event record")
            events.append(ev)
    return events


def read_daily(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(DAILY_COLUMNS) - set(rows[0]):
        raise ValueError(f"{path}: missing columns {sorted(set(DAILY_COLUMNS) - set(rows[0]))}")
    return rows
