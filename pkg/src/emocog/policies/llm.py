from __future__ import annotations

import time

from ..desire import TemplateRegistry, default_registry, describe_situation, state_fields
from ..domain import BackendError, RuleConfig
from .backends import LlmBackend, prompt_hash
from .baselines import decide_rule
from .base import Decision, DecisionContext, parse_action, parse_reason

RETRY_NOTE = "\n\nYour previous reply had no valid ACTION line. Answer again using one of: {actions}."


def render_plain_prompt(ctx: DecisionContext, registry: TemplateRegistry | None = None) -> str:
    registry = registry or default_registry()
    return registry.render(
        "plain",
        **state_fields(ctx.state, ctx.h_max, ctx.ticks_per_day),
        situation=describe_situation(ctx.pending_order, ctx.held_count, ctx.max_held, ctx.pickup_distance, ctx.tick),
        actions=", ".join(ctx.candidates),
    )


def ask_for_action(backend: LlmBackend, prompt: str, candidates) -> tuple[str | None, str, list[str]]:
    """Query once, re-ask once on an unparseable reply.

    Returns (action or None, last reply, prompt hashes sent). BackendError propagates.
    """
    hashes = [prompt_hash(prompt)]
    reply = backend.respond(prompt)
    action = parse_action(reply, candidates)
    if action is None:
        retry = prompt + RETRY_NOTE.format(actions=", ".join(candidates))
        hashes.append(prompt_hash(retry))
        reply = backend.respond(retry)
        action = parse_action(reply, candidates)
    return action, reply, hashes


def decide_llm(ctx: DecisionContext, backend: LlmBackend, fallback: RuleConfig, registry: TemplateRegistry | None = None) -> Decision:
    t0 = time.perf_counter()
    prompt = render_plain_prompt(ctx, registry)
    info: dict = {}
    try:
        action, reply, hashes = ask_for_action(backend, prompt, ctx.candidates)
        info["prompt_hash"] = hashes[0]
    except BackendError as exc:
        d = decide_rule(ctx, fallback)
        d.rationale = "llm-backend-fallback"
        d.info["backend_error"] = str(exc)
        d.latency_ms = (time.perf_counter() - t0) * 1e3
        return d
    if action is None:
        d = decide_rule(ctx, fallback)
        d.rationale = "llm-parse-fallback"
        d.info.update(info)
        d.latency_ms = (time.perf_counter() - t0) * 1e3
        return d
    return Decision(action, parse_reason(reply), (time.perf_counter() - t0) * 1e3, info)


class LlmPolicy:
    kind = "llm"

    def __init__(self, backend: LlmBackend, fallback: RuleConfig, registry: TemplateRegistry | None = None):
        self.backend = backend
        self.fallback = fallback
        self.registry = registry

    def decide(self, ctx: DecisionContext) -> Decision:
        return decide_llm(ctx, self.backend, self.fallback, self.registry)
