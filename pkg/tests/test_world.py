from __future__ import annotations

import pytest
from audit import audit_orders, conservation_gaps, sole_trigger_violations
from hypothesis import given
from hypothesis import strategies as st

from emocog.desire import StateDelta
from emocog.domain import Order, OrderState, ScenarioConfig, StaminaConfig
from emocog.policies import RulePolicy, ScriptedBackend
from emocog.world import World, income_percentiles, parse_assignment, read_events, run


def rule_world(cfg: ScenarioConfig, n: int | None = None) -> World:
    return World(cfg, [RulePolicy(cfg.policy.rule) for _ in range(cfg.n_riders if n is None else n)])


def brute_percentile(incomes, i):
    others = [x for j, x in enumerate(incomes) if j != i]
    if not others:
        return 0.5
    return (sum(x < incomes[i] for x in others) + 0.5 * sum(x == incomes[i] for x in others)) / len(others)


def test_idle_tick_emits_nothing():
    w = rule_world(ScenarioConfig())
    assert w.step() == []
    assert w.tick == 1


def test_world_without_riders():
    w = rule_world(ScenarioConfig(), n=0)
    for _ in range(3):
        assert w.step() == []


def test_adjacent_rider_picks_up():
    cfg = ScenarioConfig()
    w = rule_world(cfg, n=1)
    w.tick = 600
    r = w.riders[0]
    r.mode = "working"
    rest = w.restaurants[0]
    r.pos = (rest[0] + 1.0, rest[1]) if rest[0] + 1 < cfg.grid.width else (rest[0] - 1.0, rest[1])
    o = w.add_order(Order(999, rest, (rest[0], min(rest[1] + 10.0, 199.0) if rest[1] < 150 else rest[1] - 10.0), 25.0, 590, 700, ready_tick=595))
    w.assign(o, r)
    events = w.step()
    assert any(e["kind"] == "pickup" and e["order"] == 999 and e["agent"] == 0 for e in events)
    assert o.state is OrderState.PICKED_UP


def test_delivery_credits_income():
    w = rule_world(ScenarioConfig(), n=1)
    w.tick = 600
    r = w.riders[0]
    r.mode = "working"
    r.pos = (50.0, 50.0)
    o = w.add_order(Order(5, (50.0, 50.0), (51.0, 50.0), 12.34, 590, 700))
    w.assign(o, r)
    events = w.step() + w.step()
    kinds = [e["kind"] for e in events if e.get("order") == 5]
    assert kinds == ["pickup", "deliver"]
    assert r.income_cents == 1234 and r.held == []


def test_effect_of_wait_and_sleep():
    cfg = ScenarioConfig()
    w = rule_world(cfg)
    r = w.riders[0]
    c_wait = cfg.stamina.idle_cost_per_tick * cfg.policy.decision_interval
    assert w.effect_estimate(r, "wait") == StateDelta(0.0, -c_wait, 0.0)
    assert w.effect_estimate(r, "go_sleep") == StateDelta(0.0, 0.0, 0.0)
    r.health = 40.0
    assert w.effect_estimate(r, "go_sleep").d_health == pytest.approx(30.0)


def test_effect_of_accept():
    cfg = ScenarioConfig(stamina=StaminaConfig(cost_per_unit=0.5))
    w = rule_world(cfg)
    incomes = [20.0, 10.0, 40.0, 15.0, 0.0, 30.0]
    for r, x in zip(w.riders, incomes):
        r.income_cents = round(x * 100)
    r = w.riders[0]
    r.pos = (0.0, 0.0)
    o = Order(1, (0.0, 0.0), (6.0, 4.0), 30.0, 0, 100)
    eff = w.effect_estimate(r, "accept", o)
    after = list(incomes)
    after[0] += 30.0
    expected_rank = brute_percentile(after, 0) - brute_percentile(incomes, 0)
    assert eff.d_income == 30.0 and eff.d_health == pytest.approx(-5.0)
    assert eff.d_rank == pytest.approx(expected_rank)


@given(st.lists(st.integers(0, 50), min_size=1, max_size=8))
def test_percentiles_are_valid(incomes):
    p = income_percentiles(incomes)
    assert all(0 <= x <= 1 for x in p)
    for i in range(len(incomes)):
        assert p[i] == brute_percentile(incomes, i)
        for j in range(len(incomes)):
            if incomes[i] < incomes[j]:
                assert p[i] < p[j]


def test_one_day_rule_run_is_repeatable():
    cfg = ScenarioConfig(n_days=1, seed=4)
    digests = {run(cfg, "all:rule").digest for _ in range(3)}
    assert len(digests) == 1


def test_rule_run_has_daily_rows_per_rider():
    cfg = ScenarioConfig()
    log = run(cfg, "all:rule")
    assert len(log.daily) == cfg.n_days * cfg.n_riders
    for agent in range(cfg.n_riders):
        assert [r["day"] for r in log.daily if r["agent"] == agent] == list(range(1, cfg.n_days + 1))
    assert conservation_gaps(log.events, log.daily) == []
    assert audit_orders(log.events) == {"illegal_transitions": [], "held_cap": [], "wrong_rider": []}


def test_events_are_ordered():
    log = run(ScenarioConfig(n_days=2), "all:rule")
    keys = [(e["tick"], e["agent"], e["seq"]) for e in log.events]
    assert keys == sorted(keys)
    assert len({e["seq"] for e in log.events}) == len(log.events)


def test_tick_level_invariants():
    cfg = ScenarioConfig(n_days=2, seed=9)
    w = rule_world(cfg)
    for _ in range(cfg.n_days * cfg.ticks_per_day):
        w.step()
        for r in w.riders:
            assert 0 <= r.health <= cfg.h_max
            assert 0 <= r.pos[0] <= cfg.grid.width - 1 and 0 <= r.pos[1] <= cfg.grid.height - 1
            assert len(r.held) <= cfg.max_held_orders
            for o in r.held:
                assert o.rider == r.id and o.state in (OrderState.ASSIGNED, OrderState.PICKED_UP)
    by_day = {}
    for row in w.daily:
        by_day.setdefault(row["day"], []).append(row)
    for rows in by_day.values():
        for a in rows:
            for b in rows:
                if a["cumulative_income"] < b["cumulative_income"]:
                    assert a["social_rank"] < b["social_rank"]


def test_exhausted_rider_naps_before_acting_again():
    cfg = ScenarioConfig(n_days=1, stamina=StaminaConfig(cost_per_unit=1.5))
    log = run(cfg, "all:rule")
    naps = [e for e in log.events if e["kind"] == "sleep" and e["reason"] == "exhausted"]
    assert naps
    for nap in naps:
        woke = next(e["tick"] for e in log.events if e["kind"] == "wake" and e["agent"] == nap["agent"] and e["tick"] > nap["tick"])
        acted = [e for e in log.events if e["kind"] == "decision" and e["agent"] == nap["agent"] and nap["tick"] < e["tick"] <= woke]
        assert acted == []


def test_mixed_run_reports_every_type(greedy_backend):
    log = run(ScenarioConfig(n_days=2), "rl,rl,llm,llm,framework,framework", backend=greedy_backend)
    assert {r["policy"] for r in log.daily} == {"rl", "llm", "framework"}
    fw = [r for r in log.daily if r["policy"] == "framework"]
    assert all(r["focus"] in ("income", "health", "rank") for r in fw)
    assert sole_trigger_violations(log.events) == []


def test_backend_outage_is_logged_and_survived():
    log = run(ScenarioConfig(n_days=1), "llm,llm,llm,framework,framework,framework", backend=ScriptedBackend())
    errors = [e for e in log.events if e["kind"] == "backend_error"]
    assert errors and {e["policy"] for e in errors} == {"llm", "framework"}
    rationales = {e["rationale"] for e in log.events if e["kind"] == "decision"}
    assert {"llm-backend-fallback", "backend-fallback"} <= rationales


def test_imitation_uses_pilot_traces():
    cfg = ScenarioConfig(n_days=1)
    cfg.policy.imitation_pilot_days = 1
    log = run(cfg, "all:imitation")
    sources = {e.get("source") for e in log.events if e["kind"] == "decision"}
    assert "trace" in sources


@pytest.mark.parametrize("bad", ["all:robot", "rule,rule", "rule,rule,rule,rule,rule,rule,rule"])
def test_bad_assignments(bad):
    with pytest.raises(ValueError):
        parse_assignment(bad, 6)


def test_run_writes_files(tmp_path, greedy_backend):
    log = run(ScenarioConfig(n_days=1), "rule,rule,rl,rl,framework,framework", backend=greedy_backend, out_dir=tmp_path)
    assert read_events(tmp_path / "events.jsonl") == log.events
    assert (tmp_path / "daily.csv").read_text().count("\n") == 7
    assert sorted(p.name for p in (tmp_path / "memory").iterdir()) == ["agent_4.jsonl", "agent_5.jsonl"]


def test_corrupt_event_line(tmp_path):
    p = tmp_path / "events.jsonl"
    p.write_text('{"tick": 0, "agent": 0, "seq": 0, "kind": "wake"}\n{oops\n')
    with pytest.raises(ValueError, match=":2:"):
        read_events(p)
