from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from emocog.domain import (
    LEGAL_ORDER_TRANSITIONS,
    ConfigError,
    DesireVector,
    IllegalTransition,
    Order,
    OrderState,
    ScenarioConfig,
    dumps_config,
    load_config,
    loads_config,
    save_config,
    validate_config,
)


def make_order(**kw) -> Order:
    base = dict(id=1, restaurant_pos=(0.0, 0.0), consumer_pos=(3.0, 4.0), payout=20.0, created_tick=0, deadline_tick=50)
    base.update(kw)
    return Order(**base)


def test_desire_vector_must_sum_to_one():
    DesireVector(0.6, 0.2, 0.2)
    with pytest.raises(ValueError):
        DesireVector(0.6, 0.3, 0.2)
    with pytest.raises(ValueError):
        DesireVector(1.2, -0.2, 0.0)


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=3, max_size=3).filter(lambda w: sum(w) > 1e-6))
def test_normalized_desire_is_valid(ws):
    d = DesireVector.normalized(*ws)
    assert abs(sum(d.as_tuple()) - 1) <= 1e-9
    assert all(w >= 0 for w in d.as_tuple())


def test_order_happy_path():
    o = make_order()
    assert o.route_length == 7.0
    for s in (OrderState.ASSIGNED, OrderState.PICKED_UP, OrderState.DELIVERED):
        o.advance(s)
    assert o.state is OrderState.DELIVERED


def test_order_rejects_illegal_transitions():
    o = make_order()
    with pytest.raises(IllegalTransition):
        o.advance(OrderState.DELIVERED)
    o.advance(OrderState.EXPIRED)
    with pytest.raises(IllegalTransition):
        o.advance(OrderState.ASSIGNED)


def test_terminal_states_have_no_exits():
    assert not LEGAL_ORDER_TRANSITIONS[OrderState.DELIVERED]
    assert not LEGAL_ORDER_TRANSITIONS[OrderState.EXPIRED]


@pytest.mark.parametrize("kw", [dict(deadline_tick=0), dict(payout=0.0), dict(payout=-3.0)])
def test_order_construction_checks(kw):
    with pytest.raises(ValueError):
        make_order(**kw)


def test_defaults_validate():
    cfg = validate_config(ScenarioConfig())
    assert cfg.n_riders == 6 and cfg.n_days == 30
    assert cfg.acceptance_tiers == [0.3, 0.6, 0.9]
    assert cfg.speed_per_tick == pytest.approx(80 / 60)


def test_toml_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=11, n_days=4)
    path = tmp_path / "s.toml"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert loads_config(dumps_config(cfg)) == cfg


def test_json_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=3)
    path = tmp_path / "s.json"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_every_violation_is_reported():
    with pytest.raises(ConfigError) as exc:
        validate_config({"max_held_orders": 0, "acceptance_tiers": [0.3, 1.5], "bogus": 1})
    errors = exc.value.errors
    assert "max_held_orders: must be ≥ 1" in errors
    assert "acceptance_tiers[1]: probability out of range (0, 1]" in errors
    assert "bogus: unknown field" in errors


def test_nested_type_errors_carry_paths():
    with pytest.raises(ConfigError) as exc:
        validate_config({"grid": {"width": "wide"}, "desire": {"beta": 0}})
    assert "grid.width: expected an integer" in exc.value.errors


def test_bad_toml_is_a_config_error(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("seed = [", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_partial_file_fills_defaults(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"seed": 5, "stamina": {"nap_ticks": 30}}), encoding="utf-8")
    cfg = load_config(path)
    assert cfg.seed == 5 and cfg.stamina.nap_ticks == 30 and cfg.stamina.cost_per_unit == 0.08
