"""Emotion-driven rider agents in a deterministic food-delivery simulation."""

from .domain import (
    AgentState,
    ConfigError,
    DesireVector,
    EmotionLabel,
    Order,
    OrderState,
    PadVector,
    ScenarioConfig,
    load_config,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "ConfigError",
    "DesireVector",
    "EmotionLabel",
    "Order",
    "OrderState",
    "PadVector",
    "ScenarioConfig",
    "load_config",
    "validate_config",
]
