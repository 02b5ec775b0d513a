"""Shared value types and the scenario configuration model.

Everything here is plain data plus validation. Behaviour lives in the
emotion, desire, memory, policies and world modules.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

import tomli_w


class EmotionLabel(str, enum.Enum):
    """The seven discrete emotion categories, in tie-break order."""

    HAPPINESS = "happiness"
    ANGER = "anger"
    DISGUST = "disgust"
    SURPRISE = "surprise"
    FEAR = "fear"
    SADNESS = "sadness"
    NEUTRAL = "neutral"


EMOTION_ORDER: tuple[EmotionLabel, ...] = tuple(EmotionLabel)

DIMENSIONS: tuple[str, ...] = ("income", "health", "rank")


@dataclass(frozen=True)
class PadVector:
    pleasure: float
    arousal: float
    dominance: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.pleasure, self.arousal, self.dominance)


@dataclass(frozen=True)
class AgentState:
    """Snapshot of one rider at a tick: income, health, social rank, emotion."""

    tick: int
    income: float
    health: float
    social_rank: float
    emotion: EmotionLabel = EmotionLabel.NEUTRAL


@dataclass(frozen=True)
class DesireVector:
    """Priority weights over (income, health, rank); always sums to one."""

    w_income: float
    w_health: float
    w_rank: float

    def __post_init__(self) -> None:
        ws = self.as_tuple()
        if any(not math.isfinite(w) or w < 0 for w in ws):
            raise ValueError(f"desire weights must be finite and >= 0, got {ws}")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"desire weights must sum to 1, got {sum(ws)!r}")

    @classmethod
    def normalized(cls, w_income: float, w_health: float, w_rank: float) -> "DesireVector":
        total = w_income + w_health + w_rank
        if total <= 0:
            raise ValueError("cannot normalize an all-zero desire vector")
        # plain division keeps tied weights tied; the sum is within a few ulps of 1
        return cls(w_income / total, w_health / total, w_rank / total)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_income, self.w_health, self.w_rank)

    def weight(self, dimension: str) -> float:
        return self.as_tuple()[DIMENSIONS.index(dimension)]


class OrderState(str, enum.Enum):
    PENDING = "pending"
    ASSIGNED = "assigned"
    PICKED_UP = "picked_up"
    DELIVERED = "delivered"
    EXPIRED = "expired"


LEGAL_ORDER_TRANSITIONS: dict[OrderState, frozenset[OrderState]] = {
    OrderState.PENDING: frozenset({OrderState.ASSIGNED, OrderState.EXPIRED}),
    OrderState.ASSIGNED: frozenset({OrderState.PICKED_UP, OrderState.EXPIRED}),
    OrderState.PICKED_UP: frozenset({OrderState.DELIVERED, OrderState.EXPIRED}),
    OrderState.DELIVERED: frozenset(),
    OrderState.EXPIRED: frozenset(),
}


class IllegalTransition(RuntimeError):
    pass


class BackendError(RuntimeError):
    """A language-model backend failed to produce a reply (transport, timeout, HTTP status)."""


@dataclass
class Order:
    id: int
    restaurant_pos: tuple[float, float]
    consumer_pos: tuple[float, float]
    payout: float
    created_tick: int
    deadline_tick: int
    ready_tick: int = 0
    state: OrderState = OrderState.PENDING
    rider: int | None = None
    declined_by: set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        if self.deadline_tick <= self.created_tick:
            raise ValueError("deadline_tick must be after created_tick")
        if not self.payout > 0:
            raise ValueError("payout must be positive")

    @property
    def route_length(self) -> float:
        return manhattan(self.restaurant_pos, self.consumer_pos)

    def advance(self, new_state: OrderState) -> None:
        if new_state not in LEGAL_ORDER_TRANSITIONS[self.state]:
            raise IllegalTransition(f"order {self.id}: {self.state.value} -> {new_state.value}")
        self.state = new_state


def manhattan(a: tuple[float, float], b: tuple[float, float]) -> float:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

# Conventional PAD placements for the seven categories, on a [-1, 1] scale.
DEFAULT_CENTROIDS: dict[str, list[float]] = {
    "happiness": [0.40, 0.20, 0.15],
    "anger": [-0.51, 0.59, 0.25],
    "disgust": [-0.60, 0.35, 0.11],
    "surprise": [0.20, 0.45, -0.10],
    "fear": [-0.64, 0.60, -0.43],
    "sadness": [-0.40, -0.20, -0.50],
    "neutral": [0.0, 0.0, 0.0],
}


@dataclass
class GridConfig:
    width: int = 200
    height: int = 200
    n_restaurants: int = 12
    delivery_radius: float = 40.0


@dataclass
class OrderConfig:
    base_rate: float = 0.09  # orders per work-window tick, off-peak
    peak_multiplier: float = 2.0
    lunch_peak: list[int] = field(default_factory=lambda: [660, 810])
    dinner_peak: list[int] = field(default_factory=lambda: [1020, 1200])
    payout_base: float = 15.0
    payout_per_unit: float = 0.5
    payout_noise: float = 6.0
    prep_min: int = 5
    prep_max: int = 20
    deadline_slack: int = 150


@dataclass
class StaminaConfig:
    cost_per_unit: float = 0.08
    idle_cost_per_tick: float = 0.01
    nap_ticks: int = 60
    nap_restore_per_tick: float = 0.5
    wander_distance: float = 20.0


@dataclass
class EmotionConfig:
    k_p: float = 0.01
    k_a: float = 0.02
    dominance_criteria: list[list[float]] = field(
        default_factory=lambda: [[0.0, -0.5], [1.0 / 3.0, 0.0], [2.0 / 3.0, 0.5]]
    )
    centroids: dict[str, list[float]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_CENTROIDS.items()})


@dataclass
class DesireConfig:
    beta: float = 1.0
    anomaly_threshold: float = 1.0
    boost: float = 0.2
    window_ticks: int = 1440
    initial: list[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])
    # scale of a typical look-back-window change in (income, health, rank)
    anomaly_scales: list[float] = field(default_factory=lambda: [60.0, 15.0, 0.2])
    # scale of a typical single-action change in (income, health, rank)
    reward_normalizers: list[float] = field(default_factory=lambda: [50.0, 5.0, 0.2])


@dataclass
class MemoryConfig:
    dim: int = 64
    k: int = 3
    min_similarity: float = 0.4
    min_importance: float = 0.3
    ttl_ticks: int = 3 * 1440
    default_importance: float = 0.5
    score_with_backend: bool = True


@dataclass
class RuleConfig:
    health_floor: float = 20.0
    yield_floor: float = 0.3  # payout per unit of route distance


@dataclass
class RLConfig:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.1
    payout_buckets: list[float] = field(default_factory=lambda: [25.0, 35.0, 45.0, 55.0])


@dataclass
class PolicyConfig:
    decision_interval: int = 30
    rule: RuleConfig = field(default_factory=RuleConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    imitation_pilot_days: int = 3


@dataclass
class BackendConfig:
    model: str = "gpt-4o"
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    fanout: int = 4


@dataclass
class ScenarioConfig:
    seed: int = 0
    n_riders: int = 6
    n_days: int = 30
    ticks_per_day: int = 1440
    work_start: int = 480
    work_end: int = 1320
    initial_speed: float = 80.0  # grid units per hour
    acceptance_tiers: list[float] = field(default_factory=lambda: [0.30, 0.60, 0.90])
    max_held_orders: int = 3
    h_max: float = 100.0
    grid: GridConfig = field(default_factory=GridConfig)
    orders: OrderConfig = field(default_factory=OrderConfig)
    stamina: StaminaConfig = field(default_factory=StaminaConfig)
    emotion: EmotionConfig = field(default_factory=EmotionConfig)
    desire: DesireConfig = field(default_factory=DesireConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)

    @property
    def speed_per_tick(self) -> float:
        return self.initial_speed * 24.0 / self.ticks_per_day

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


class ConfigError(ValueError):
    """Raised with every violated constraint, each prefixed by its field path."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario config:\n  " + "\n  ".join(self.errors))


def _build(cls: type, data: Mapping[str, Any], path: str, errors: list[str]) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            errors.append(f"{path}{key}: unknown field")
    kwargs: dict[str, Any] = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            if not isinstance(value, Mapping):
                errors.append(f"{path}{f.name}: expected a table")
                continue
            kwargs[f.name] = _build(hint, value, f"{path}{f.name}.", errors)
        else:
            kwargs[f.name] = _coerce(value, hint, f"{path}{f.name}", errors)
    return cls(**kwargs)


def _coerce(value: Any, hint: Any, path: str, errors: list[str]) -> Any:
    origin = typing.get_origin(hint)
    if hint is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected a boolean")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number")
            return value
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string")
        return value
    if origin is list:
        if not isinstance(value, (list, tuple)):
            errors.append(f"{path}: expected a list")
            return value
        (item,) = typing.get_args(hint)
        return [_coerce(v, item, f"{path}[{i}]", errors) for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, Mapping):
            errors.append(f"{path}: expected a table")
            return value
        _, item = typing.get_args(hint)
        return {k: _coerce(v, item, f"{path}.{k}", errors) for k, v in value.items()}
    return value


def _check(cfg: ScenarioConfig) -> list[str]:
    errs: list[str] = []

    def need(ok: bool, msg: str) -> None:
        if not ok:
            errs.append(msg)

    need(cfg.n_riders >= 1, "n_riders: must be ≥ 1")
    need(cfg.n_days >= 1, "n_days: must be ≥ 1")
    need(cfg.ticks_per_day >= 24, "ticks_per_day: must be ≥ 24")
    need(0 <= cfg.work_start < cfg.work_end <= cfg.ticks_per_day, "work_start/work_end: need 0 ≤ start < end ≤ ticks_per_day")
    need(cfg.initial_speed > 0, "initial_speed: must be > 0")
    need(len(cfg.acceptance_tiers) >= 1, "acceptance_tiers: must not be empty")
    for i, p in enumerate(cfg.acceptance_tiers):
        need(0 < p <= 1, f"acceptance_tiers[{i}]: probability out of range (0, 1]")
    need(cfg.max_held_orders >= 1, "max_held_orders: must be ≥ 1")
    need(cfg.h_max > 0, "h_max: must be > 0")

    g = cfg.grid
    need(g.width >= 2 and g.height >= 2, "grid: width and height must be ≥ 2")
    need(g.n_restaurants >= 1, "grid.n_restaurants: must be ≥ 1")
    need(g.delivery_radius > 0, "grid.delivery_radius: must be > 0")

    o = cfg.orders
    for name in ("base_rate", "peak_multiplier", "payout_per_unit", "payout_noise"):
        need(getattr(o, name) >= 0, f"orders.{name}: must be ≥ 0")
    need(o.base_rate * max(1.0, o.peak_multiplier) <= 1.0, "orders: base_rate × peak_multiplier must be ≤ 1 (per-tick probability)")
    need(o.payout_base > 0, "orders.payout_base: must be > 0")
    need(0 <= o.prep_min <= o.prep_max, "orders: need 0 ≤ prep_min ≤ prep_max")
    need(o.deadline_slack >= 1, "orders.deadline_slack: must be ≥ 1")
    for name in ("lunch_peak", "dinner_peak"):
        win = getattr(o, name)
        need(len(win) == 2 and win[0] <= win[1], f"orders.{name}: must be [start, end] with start ≤ end")

    s = cfg.stamina
    for name in ("cost_per_unit", "idle_cost_per_tick", "nap_restore_per_tick", "wander_distance"):
        need(getattr(s, name) >= 0, f"stamina.{name}: must be ≥ 0")
    need(s.nap_ticks >= 1, "stamina.nap_ticks: must be ≥ 1")

    e = cfg.emotion
    need(e.k_p >= 0 and e.k_a >= 0, "emotion: k_p and k_a must be ≥ 0")
    crit = e.dominance_criteria
    need(len(crit) >= 1, "emotion.dominance_criteria: must not be empty")
    for i, pair in enumerate(crit):
        if len(pair) != 2:
            errs.append(f"emotion.dominance_criteria[{i}]: expected [threshold, value]")
            continue
        need(0 <= pair[0] <= 1, f"emotion.dominance_criteria[{i}]: threshold must be in [0, 1]")
        need(-1 <= pair[1] <= 1, f"emotion.dominance_criteria[{i}]: dominance must be in [-1, 1]")
        if i:
            need(pair[0] > crit[i - 1][0], f"emotion.dominance_criteria[{i}]: thresholds must be strictly increasing")
    labels = {lab.value for lab in EmotionLabel}
    need(set(e.centroids) == labels, f"emotion.centroids: need exactly the labels {sorted(labels)}")
    for k, v in e.centroids.items():
        need(len(v) == 3, f"emotion.centroids.{k}: expected 3 components")

    d = cfg.desire
    need(d.beta > 0, "desire.beta: must be > 0")
    need(d.anomaly_threshold >= 0 and d.boost > 0, "desire: anomaly_threshold ≥ 0 and boost > 0 required")
    need(d.window_ticks >= 1, "desire.window_ticks: must be ≥ 1")
    need(len(d.initial) == 3 and all(w >= 0 for w in d.initial) and sum(d.initial) > 0, "desire.initial: three non-negative weights, not all zero")
    need(len(d.anomaly_scales) == 3 and all(x > 0 for x in d.anomaly_scales), "desire.anomaly_scales: three positive scales")
    need(len(d.reward_normalizers) == 3 and all(x > 0 for x in d.reward_normalizers), "desire.reward_normalizers: three positive normalizers")

    m = cfg.memory
    need(m.dim >= 1 and m.k >= 1, "memory: dim and k must be ≥ 1")
    need(0 <= m.min_similarity <= 1 and 0 <= m.min_importance <= 1, "memory: thresholds must be in [0, 1]")
    need(m.ttl_ticks > 0, "memory.ttl_ticks: must be > 0")
    need(0 <= m.default_importance <= 1, "memory.default_importance: must be in [0, 1]")

    p = cfg.policy
    need(p.decision_interval >= 1, "policy.decision_interval: must be ≥ 1")
    need(0 <= p.rule.health_floor <= cfg.h_max, "policy.rule.health_floor: must be in [0, h_max]")
    need(p.rule.yield_floor >= 0, "policy.rule.yield_floor: must be ≥ 0")
    need(0 < p.rl.alpha <= 1 and 0 <= p.rl.gamma < 1 and 0 <= p.rl.epsilon <= 1, "policy.rl: need 0 < alpha ≤ 1, 0 ≤ gamma < 1, 0 ≤ epsilon ≤ 1")
    pb = p.rl.payout_buckets
    need(all(b2 > b1 for b1, b2 in zip(pb, pb[1:])), "policy.rl.payout_buckets: must be strictly increasing")
    need(p.imitation_pilot_days >= 1, "policy.imitation_pilot_days: must be ≥ 1")

    b = cfg.backend
    need(b.timeout > 0 and b.max_retries >= 0 and b.fanout >= 1, "backend: timeout > 0, max_retries ≥ 0, fanout ≥ 1 required")
    return errs


def validate_config(cfg: ScenarioConfig | Mapping[str, Any]) -> ScenarioConfig:
    """Fill defaults and check every constraint; raise ConfigError listing all violations."""
    errors: list[str] = []
    if isinstance(cfg, Mapping):
        cfg = _build(ScenarioConfig, cfg, "", errors)
    try:
        errors.extend(_check(cfg))
    except (TypeError, ValueError, IndexError, AttributeError):
        # value checks cannot run on mistyped fields; the type errors already explain why
        if not errors:
            raise
    if errors:
        raise ConfigError(errors)
    return cfg


def loads_config(text: str) -> ScenarioConfig:
    """Parse and validate a TOML scenario held in a string."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"scenario: {exc}"]) from exc
    return validate_config(data)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return validate_config(data)


def dumps_config(cfg: ScenarioConfig, fmt: str = "toml") -> str:
    data = cfg.to_dict()
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True)
    return tomli_w.dumps(data)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    path = Path(path)
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    path.write_text(dumps_config(cfg, fmt), encoding="utf-8")
