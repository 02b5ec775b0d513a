"""Independent replays of an event log, used as oracles by the world and acceptance tests."""

from __future__ import annotations

from collections import defaultdict

from emocog.domain import LEGAL_ORDER_TRANSITIONS, OrderState

KIND_TO_STATE = {"pickup": OrderState.PICKED_UP, "deliver": OrderState.DELIVERED, "expire": OrderState.EXPIRED}


def audit_orders(events, max_held: int = 3) -> dict[str, list]:
    """Replay order states and per-rider holdings; return every violation found."""
    state: dict[int, OrderState] = {}
    holder: dict[int, int] = {}
    held = defaultdict(set)
    illegal, cap, orphan = [], [], []

    def move(oid, new, ev):
        old = state.get(oid, OrderState.PENDING)
        if new not in LEGAL_ORDER_TRANSITIONS[old]:
            illegal.append((ev["tick"], oid, old.value, new.value))
        state[oid] = new

    for ev in events:
        kind = ev["kind"]
        if kind == "decision" and ev.get("action") == "accept":
            oid = ev["order"]
            move(oid, OrderState.ASSIGNED, ev)
            holder[oid] = ev["agent"]
            held[ev["agent"]].add(oid)
            if len(held[ev["agent"]]) > max_held:
                cap.append((ev["tick"], ev["agent"], len(held[ev["agent"]])))
        elif kind in KIND_TO_STATE:
            oid = ev["order"]
            move(oid, KIND_TO_STATE[kind], ev)
            if kind in ("pickup", "deliver") and holder.get(oid) != ev["agent"]:
                orphan.append((ev["tick"], oid, ev["agent"]))
            if kind in ("deliver", "expire") and oid in holder:
                held[holder[oid]].discard(oid)
    return {"illegal_transitions": illegal, "held_cap": cap, "wrong_rider": orphan}


def conservation_gaps(events, daily, ticks_per_day: int = 1440) -> list:
    """(day, agent, logged income cents, delivered payout cents) wherever they differ."""
    paid = defaultdict(int)
    for ev in events:
        if ev["kind"] == "deliver":
            paid[(ev["tick"] // ticks_per_day + 1, ev["agent"])] += round(ev["payout"] * 100)
    gaps = []
    for row in daily:
        key = (int(row["day"]), int(row["agent"]))
        logged = round(float(row["income"]) * 100)
        if logged != paid.get(key, 0):
            gaps.append((*key, logged, paid.get(key, 0)))
    return gaps


def sole_trigger_violations(events) -> list:
    """desire_update events not paired with a same-tick emotion label change for that agent."""
    changed = {}
    for ev in events:
        if ev["kind"] == "emotion_sample" and ev.get("reason") == "decision":
            changed[(ev["tick"], ev["agent"])] = ev["label"] != ev["prev_label"]
    return [
        (ev["tick"], ev["agent"])
        for ev in events
        if ev["kind"] == "desire_update" and not changed.get((ev["tick"], ev["agent"]), False)
    ]
