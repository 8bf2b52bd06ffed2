"""Allocation strategies behind one ``decide(ctx, rng)`` contract."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import SCORE_COLUMNS, CommunityStats, RecipientProfile, TaskSpec
from .llmclient import ChatClient, ChatRequest, LLMError
from .prompts import ConfigError, load_asset

LENGTH_MODES = ("none", "concise", "extreme_short")
INFLUENCES = ("none", "temptation", "threat", "identification", "internalization")
VIOLATION_FLAG = "[protocol-violation: random fallback]"
CORRECTION = "Please assign the task by wrapping exactly one member name from the team within <agent> </agent> tags."

_AGENT_TAG = re.compile(r"<agent>(.*?)</agent>", re.DOTALL)


class ProtocolViolation(ValueError):
    pass


class AllocatorError(RuntimeError):
    """The allocator cannot produce a decision; the run must abort."""


@dataclass(frozen=True)
class Turn:
    agent: str
    outcome: str
    feedback: str
    completion: str = ""


@dataclass(frozen=True)
class DecisionContext:
    task: TaskSpec
    stats: CommunityStats
    profiles: Sequence[RecipientProfile]
    recent_turns: Sequence[Turn] = ()
    attempt: int = 1
    excluded: frozenset[str] = frozenset()
    task_index: int = 1


class Decision(NamedTuple):
    chosen: str
    reasoning: str


@dataclass(frozen=True)
class PromptVariant:
    base: str = "vanilla"
    length_mode: str = "none"
    influence: str = "none"

    def __post_init__(self):
        if self.base != "vanilla":
            raise ConfigError(f"unknown base prompt {self.base!r}")
        if self.length_mode not in LENGTH_MODES:
            raise ConfigError(f"unknown length mode {self.length_mode!r}")
        if self.influence not in INFLUENCES:
            raise ConfigError(f"unknown influence {self.influence!r}")

    @property
    def tag(self) -> str:
        parts = [self.base]
        parts += [p for p in (self.length_mode, self.influence) if p != "none"]
        return "+".join(parts)


# --- heuristics ------------------------------------------------------------


def _runtime_rank(ctx: DecisionContext) -> list[str]:
    """Agents ordered by runtime ROI; untried agents sit below every positive
    ROI and are ordered by profile Average, tried zero-ROI agents come last."""
    avg = {p.agent_id: p.average for p in ctx.profiles}

    def key(agent_id: str):
        t = ctx.stats.agents[agent_id]
        if t.task_count and t.roi > 0:
            return (0, -t.roi, -avg[agent_id], agent_id)
        if t.task_count == 0:
            return (1, 0.0, -avg[agent_id], agent_id)
        return (2, 0.0, -avg[agent_id], agent_id)

    return sorted((p.agent_id for p in ctx.profiles), key=key)


@dataclass
class RandomAllocator:
    tag: str = "random"

    def decide(self, ctx: DecisionContext, rng: np.random.Generator) -> Decision:
        agents = [p.agent_id for p in ctx.profiles]
        return Decision(agents[int(rng.integers(len(agents)))], "uniform random draw")


@dataclass
class FairnessAllocator:
    tag: str = "fairness"

    def decide(self, ctx, rng=None) -> Decision:
        stats = ctx.stats

        def key(p: RecipientProfile):
            t = stats.agents[p.agent_id]
            return (t.task_count, -t.roi, -p.average, p.agent_id)

        best = min(ctx.profiles, key=key)
        return Decision(best.agent_id, f"fewest tasks ({stats.agents[best.agent_id].task_count})")


@dataclass
class EfficiencyAllocator:
    """Uniform draw among the top ``k`` agents by runtime ROI."""

    k: int = 3
    tag: str = "efficiency"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")

    def decide(self, ctx, rng) -> Decision:
        top = _runtime_rank(ctx)[: self.k]
        pick = top[int(rng.integers(len(top)))] if len(top) > 1 else top[0]
        return Decision(pick, f"top-{self.k} by runtime ROI: {', '.join(top)}")


@dataclass
class HybridAllocator(EfficiencyAllocator):
    k: int = 6
    tag: str = "hybrid"


# --- LLM allocator ---------------------------------------------------------


def team_table(profiles: Sequence[RecipientProfile]) -> str:
    header = "name " + " ".join(f"{c:<10}" for c in SCORE_COLUMNS)
    rows = [
        f" {p.agent_id} " + " ".join(f"{p.scores.get(c, float('nan'))!s:<10}" for c in SCORE_COLUMNS)
        for p in profiles
    ]
    return "\n".join([header, *rows])


def system_prompt(profiles: Sequence[RecipientProfile], variant: PromptVariant) -> str:
    text = load_asset(variant.base).replace("{team_table}", team_table(profiles))
    for extra in (variant.length_mode, variant.influence):
        if extra != "none":
            text += "\n\n" + load_asset(extra)
    return text


def task_statement(ctx: DecisionContext) -> str:
    if ctx.attempt == 1:
        return f'Here is task {ctx.task_index}: "{ctx.task.prompt}"'
    return f'Task {ctx.task_index} is still unsolved (attempt {ctx.attempt}): "{ctx.task.prompt}"'


class ChatPrompt(NamedTuple):
    messages: list[dict[str, str]]
    temperature: float


def build_prompt(
    ctx: DecisionContext,
    variant: PromptVariant = PromptVariant(),
    profiles: Sequence[RecipientProfile] | None = None,
    history_window: int = 3,
) -> ChatPrompt:
    """System prompt plus the last ``history_window`` turns and the current task."""
    profiles = ctx.profiles if profiles is None else profiles
    messages = [{"role": "system", "content": system_prompt(profiles, variant)}]
    turns = list(ctx.recent_turns)[-history_window:] if history_window > 0 else []
    for turn in turns:
        messages.append({"role": "assistant", "content": turn.completion or f"<agent> {turn.agent} </agent>"})
        messages.append({"role": "user", "content": turn.feedback})
    messages.append({"role": "user", "content": task_statement(ctx)})
    return ChatPrompt(messages, 1.0)


def parse_choice(completion: str, valid: set[str] | frozenset[str]) -> str:
    """Return the member named in the last ``<agent>...</agent>`` span."""
    spans = _AGENT_TAG.findall(completion)
    if not spans:
        raise ProtocolViolation("no <agent> tag in completion")
    name = " ".join(spans[-1].split())
    if name not in valid:
        raise ProtocolViolation(f"unknown member {name!r}")
    return name


@dataclass
class LLMAllocator:
    endpoint: str
    model: str
    client: ChatClient = field(default_factory=ChatClient)
    variant: PromptVariant = PromptVariant()
    history_window: int = 3
    max_requery: int = 3
    timeout: float = 120.0
    max_output_tokens: int | None = None
    api_key_env: str = "OPENAI_API_KEY"
    tag: str = "llm"

    def _ask(self, messages) -> str:
        req = ChatRequest(
            endpoint=self.endpoint,
            model=self.model,
            messages=messages,
            temperature=1.0,
            max_output_tokens=self.max_output_tokens,
            timeout=self.timeout,
            api_key_env=self.api_key_env,
        )
        try:
            return self.client.complete(req).text
        except LLMError as exc:
            raise AllocatorError(str(exc)) from exc

    def decide(self, ctx: DecisionContext, rng: np.random.Generator) -> Decision:
        valid = {p.agent_id for p in ctx.profiles}
        messages = build_prompt(ctx, self.variant, history_window=self.history_window).messages
        text = ""
        for _ in range(1 + self.max_requery):
            text = self._ask(messages)
            try:
                return Decision(parse_choice(text, valid), text)
            except ProtocolViolation:
                messages = messages + [
                    {"role": "assistant", "content": text},
                    {"role": "user", "content": CORRECTION},
                ]
        agents = [p.agent_id for p in ctx.profiles]
        pick = agents[int(rng.integers(len(agents)))]
        return Decision(pick, f"{VIOLATION_FLAG} {text}".rstrip())


def make_allocator(spec: Mapping, client: ChatClient | None = None, history_window: int = 3):
    """Build an allocator from a config entry such as ``{"strategy": "efficiency", "k": 3}``."""
    strategy = spec.get("strategy")
    tag = spec.get("tag", strategy)
    if strategy == "random":
        return RandomAllocator(tag=tag)
    if strategy == "fairness":
        return FairnessAllocator(tag=tag)
    if strategy == "efficiency":
        return EfficiencyAllocator(k=int(spec.get("k", 3)), tag=tag)
    if strategy == "hybrid":
        return HybridAllocator(k=int(spec.get("k", 6)), tag=tag)
    if strategy == "llm":
        variant = PromptVariant(
            spec.get("base", "vanilla"), spec.get("length_mode", "none"), spec.get("influence", "none")
        )
        return LLMAllocator(
            endpoint=spec["endpoint"],
            model=spec["model"],
            client=client or ChatClient(),
            variant=variant,
            history_window=history_window,
            max_requery=int(spec.get("max_requery", 3)),
            timeout=float(spec.get("timeout", 120.0)),
            max_output_tokens=spec.get("max_output_tokens"),
            api_key_env=spec.get("api_key_env", "OPENAI_API_KEY"),
            tag=tag,
        )
    raise ConfigError(f"unknown allocator strategy {strategy!r}")
