"""Rider decision policies and the language-model backend contract."""

from __future__ import annotations

from ..domain import BackendError, ScenarioConfig
from .backends import HttpChatBackend, LlmBackend, RecordingBackend, ScriptedBackend, prompt_hash
from .base import (
    ACTION_ORDER,
    IDLE_ACTIONS,
    OFFER_ACTIONS,
    POLICY_TYPES,
    Decision,
    DecisionContext,
    Policy,
    parse_action,
    policy_rng,
    state_key,
)
from .baselines import (
    ImitationPolicy,
    RLPolicy,
    RulePolicy,
    TraceTable,
    build_trace_table,
    decide_imitation,
    decide_rl,
    decide_rule,
    q_update,
    trace_pairs_from_events,
)
from .framework import DesireState, FrameworkPolicy, decide_framework
from .llm import LlmPolicy, decide_llm, render_plain_prompt


def make_policy(
    kind: str,
    agent_id: int,
    cfg: ScenarioConfig,
    *,
    backend: LlmBackend | None = None,
    trace_table: TraceTable | None = None,
) -> Policy:
    if kind == "rule":
        return RulePolicy(cfg.policy.rule)
    if kind == "rl":
        return RLPolicy(cfg.policy.rl, cfg.desire.reward_normalizers, cfg.seed, agent_id)
    if kind == "imitation":
        if trace_table is None:
            raise ValueError("imitation policy needs a trace table")
        return ImitationPolicy(trace_table, cfg.policy.rule, cfg.policy.rl.payout_buckets)
    if kind == "llm":
        if backend is None:
            raise ValueError("llm policy needs a backend")
        return LlmPolicy(backend, cfg.policy.rule)
    if kind == "framework":
        return FrameworkPolicy(cfg, backend, cfg.seed, agent_id)
    raise ValueError(f"unknown policy type {kind!r}; expected one of {POLICY_TYPES}")


__all__ = [
    "ACTION_ORDER",
    "IDLE_ACTIONS",
    "OFFER_ACTIONS",
    "POLICY_TYPES",
    "BackendError",
    "Decision",
    "DecisionContext",
    "DesireState",
    "FrameworkPolicy",
    "HttpChatBackend",
    "ImitationPolicy",
    "LlmBackend",
    "LlmPolicy",
    "Policy",
    "RLPolicy",
    "RecordingBackend",
    "RulePolicy",
    "ScriptedBackend",
    "TraceTable",
    "build_trace_table",
    "decide_framework",
    "decide_imitation",
    "decide_llm",
    "decide_rl",
    "decide_rule",
    "make_policy",
    "parse_action",
    "policy_rng",
    "prompt_hash",
    "q_update",
    "render_plain_prompt",
    "state_key",
    "trace_pairs_from_events",
]
