"""The emotion-driven rider: perceive -> desire -> objective -> recall -> ask -> tilt -> remember."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..desire import (
    ActionDistribution,
    RewardSpec,
    StateDelta,
    TemplateRegistry,
    optimize_objective,
    render_prompt,
    reward,
    tilt_distribution,
    update_desire,
)
from ..domain import BackendError, DesireVector, ScenarioConfig
from ..emotion import classify_emotion, compute_pad
from ..memory import HashingEmbedder, MemoryRecord, MemoryStore, RetrievalQuery, score_importance
from .backends import LlmBackend
from .base import Decision, DecisionContext, first_in_order, in_action_order, parse_reason, policy_rng
from .llm import ask_for_action


@dataclass
class DesireState:
    """Agent-local desire vector plus the running mean of look-back deltas it has seen."""

    desire: DesireVector
    n_seen: int = 0
    sums: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])

    def centred(self, delta: StateDelta) -> StateDelta:
        if self.n_seen == 0:
            return delta
        mean = StateDelta(*(s / self.n_seen for s in self.sums))
        return delta - mean

    def observe(self, delta: StateDelta) -> None:
        self.n_seen += 1
        for i, x in enumerate(delta.as_tuple()):
            self.sums[i] += x


def problem_text(ctx: DecisionContext, focus: str) -> str:
    s = ctx.state
    if ctx.pending_order is not None:
        o = ctx.pending_order
        situation = f"order offer payout {o.payout:.0f} trip {ctx.expected_distance:.0f}"
    elif ctx.held_count:
        situation = f"delivering {ctx.held_count} orders"
    else:
        situation = "idle without orders"
    return f"{situation}; health {s.health:.0f}; mood {s.emotion.value}; focus {focus}"


def arbitrate(llm_action: str, actions: tuple[str, ...], pi_star, u: float) -> tuple[str, bool]:
    """Reconcile the model's pick with the tilted distribution.

    If the pick is among the most probable actions it stands. Otherwise choose
    between it and the top action with their renormalised tilted masses, using
    the uniform draw ``u``. Returns (action, overridden).
    """
    top = max(pi_star)
    best = [a for a, p in zip(actions, pi_star) if p >= top - 1e-12]
    if llm_action in best:
        return llm_action, False
    tilt_top = first_in_order(best)
    p_llm = pi_star[actions.index(llm_action)]
    p_top = pi_star[actions.index(tilt_top)]
    if u < p_llm / (p_llm + p_top):
        return llm_action, False
    return tilt_top, True


def sample_index(probs, u: float) -> int:
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def decide_framework(
    ctx: DecisionContext,
    cfg: ScenarioConfig,
    desire_state: DesireState,
    memory: MemoryStore,
    backend: LlmBackend | None,
    *,
    embedder: HashingEmbedder,
    registry: TemplateRegistry | None = None,
    seed: int = 0,
) -> Decision:
    t0 = time.perf_counter()
    info: dict = {}

    prev_state = ctx.prev_state or ctx.state
    cur_emotion = classify_emotion(compute_pad(prev_state, ctx.state, cfg.emotion), cfg.emotion)

    old = desire_state.desire
    centred = desire_state.centred(ctx.window_delta)
    desire_state.observe(ctx.window_delta)
    desire_state.desire = update_desire(ctx.prev_emotion, cur_emotion, centred, old, cfg.desire)
    plan = optimize_objective(desire_state.desire, ctx.window_delta, cfg.desire)
    if cur_emotion is not ctx.prev_emotion:
        info["desire_update"] = {
            "from_emotion": ctx.prev_emotion.value,
            "to_emotion": cur_emotion.value,
            "before": [round(w, 6) for w in old.as_tuple()],
            "after": [round(w, 6) for w in plan.desire.as_tuple()],
            "changed": plan.desire != old,
            "focus": plan.focus_dimension,
        }
    info["focus"] = plan.focus_dimension
    info["desire"] = [round(w, 6) for w in plan.desire.as_tuple()]

    mc = cfg.memory
    memory.evict_expired(ctx.tick, mc.ttl_ticks)
    problem = problem_text(ctx, plan.focus_dimension)
    query_vec = embedder.embed(problem)
    recalled = memory.retrieve(
        RetrievalQuery(query_vec, ctx.tick, mc.k, mc.min_similarity, mc.min_importance, mc.ttl_ticks)
    )
    info["recalled"] = [r.id for r in recalled]

    candidates = in_action_order(ctx.candidates)
    prompt = render_prompt(
        plan,
        ctx.state,
        [r.snippet() for r in recalled],
        ctx.pending_order,
        candidates,
        held_count=ctx.held_count,
        max_held=ctx.max_held,
        pickup_distance=ctx.pickup_distance,
        h_max=ctx.h_max,
        ticks_per_day=ctx.ticks_per_day,
        registry=registry,
    )

    llm_action = None
    reply = ""
    failure = None
    if backend is None:
        failure = "backend-fallback"
    else:
        try:
            llm_action, reply, hashes = ask_for_action(backend, prompt, candidates)
            info["prompt_hash"] = hashes[0]
            if llm_action is None:
                failure = "llm-parse-fallback"
        except BackendError as exc:
            failure = "backend-fallback"
            info["backend_error"] = str(exc)

    spec = RewardSpec(plan.reward_weights, tuple(cfg.desire.reward_normalizers))
    rewards = [reward(ctx.effects.get(a, StateDelta()), spec) for a in candidates]
    pi_star = tilt_distribution(ActionDistribution.uniform(candidates, rewards, cfg.desire.beta))
    info["pi_star"] = {a: round(float(p), 6) for a, p in zip(candidates, pi_star)}
    u = policy_rng(seed, ctx.agent_id, ctx.tick, "framework").random()

    if failure is not None:
        action = candidates[sample_index(pi_star, u)]
        rationale = failure
    else:
        action, overridden = arbitrate(llm_action, candidates, list(pi_star), u)
        rationale = parse_reason(reply)
        info["llm_action"] = llm_action
        if overridden:
            rationale = f"{rationale} [reconsidered: {action} under {plan.focus_dimension} priority]"

    importance = mc.default_importance
    if mc.score_with_backend and backend is not None and failure != "backend-fallback":
        try:
            importance = score_importance(rationale, backend, decision_text=action, default=mc.default_importance, registry=registry)
        except BackendError as exc:
            info.setdefault("backend_error", str(exc))
    memory.write(
        MemoryRecord(
            created_tick=ctx.tick,
            problem_text=problem,
            decision_text=action,
            rationale_text=rationale,
            embedding=query_vec,
            importance=importance,
            emotion_at_write=cur_emotion,
        )
    )
    return Decision(action, rationale, (time.perf_counter() - t0) * 1e3, info)


class FrameworkPolicy:
    kind = "framework"

    def __init__(
        self,
        cfg: ScenarioConfig,
        backend: LlmBackend | None,
        seed: int,
        agent_id: int,
        registry: TemplateRegistry | None = None,
    ):
        self.cfg = cfg
        self.backend = backend
        self.seed = seed
        self.agent_id = agent_id
        self.registry = registry
        self.embedder = HashingEmbedder(cfg.memory.dim)
        self.memory = MemoryStore(cfg.memory.dim)
        self.state = DesireState(DesireVector.normalized(*cfg.desire.initial))

    @property
    def desire(self) -> DesireVector:
        return self.state.desire

    def decide(self, ctx: DecisionContext) -> Decision:
        return decide_framework(
            ctx,
            self.cfg,
            self.state,
            self.memory,
            self.backend,
            embedder=self.embedder,
            registry=self.registry,
            seed=self.seed,
        )
