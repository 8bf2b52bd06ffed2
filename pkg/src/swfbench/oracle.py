"""Recipient execution backends, answer grading and the cost model.

Three backends share one ``execute`` contract:

* ``CachedBackend`` looks up a precomputed (task, agent) answer and reward.
* ``SyntheticBackend`` samples success and output length per agent.
* ``LiveBackend`` sends the task-solving prompt to a chat endpoint.

Cost is always ``output_tokens / throughput`` of the executing agent, and a
failed attempt still pays its cost.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import numpy as np

from .core import ExecutionOutcome, RecipientProfile, TaskSpec
from .prompts import load_asset

CACHE_HEADER = ("task_id", "agent_id", "reward", "output_tokens", "answer")
PROB_SCALE = 1 << 30


class CacheFormatError(ValueError):
    pass


class MissingEntry(KeyError):
    def __init__(self, task_id: str, agent_id: str):
        super().__init__(f"{task_id}/{agent_id}")
        self.task_id = task_id
        self.agent_id = agent_id

    def __str__(self):
        return f"no cached outcome for {self.task_id}/{self.agent_id}"


class TransportError(RuntimeError):
    """Raised when a live recipient cannot be reached."""


def execution_cost(output_tokens: int, throughput: float) -> float:
    return output_tokens / throughput


# --- grading ---------------------------------------------------------------

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL | re.IGNORECASE)
_BOXED_RE = re.compile(r"\\box(?:ed)?\s*\{")


def normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def _boxed_contents(text: str) -> list[str]:
    out = []
    for m in _BOXED_RE.finditer(text):
        depth, start = 1, m.end()
        i = start
        while i < len(text) and depth:
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
            i += 1
        if depth == 0:
            out.append(text[start : i - 1])
    return out


def extract_boxed(text: str) -> str | None:
    """Content of the last ``\\boxed{...}``, unwrapping nested boxes."""
    found = _boxed_contents(text)
    if not found:
        return None
    inner = found[-1]
    while True:
        nested = _boxed_contents(inner)
        if not nested:
            return inner
        inner = nested[-1]


def extract_answer(text: str, domain: str) -> str | None:
    if domain == "math":
        return extract_boxed(text)
    spans = _ANSWER_RE.findall(text)
    return spans[-1] if spans else None


def grade(answer: str, task: TaskSpec) -> float:
    """1.0 iff the extracted answer exactly matches the normalized ground truth."""
    candidate = extract_answer(answer, task.domain)
    if candidate is None:
        return 0.0
    truth = task.ground_truth
    if task.domain == "math":
        truth = extract_boxed(truth) or truth
    return 1.0 if normalize(candidate) == normalize(truth) else 0.0


# --- cache -----------------------------------------------------------------


@dataclass(frozen=True)
class CacheEntry:
    task_id: str
    agent_id: str
    answer: str
    output_tokens: int
    reward: float


class ResultCache(Mapping[tuple[str, str], CacheEntry]):
    """Read-only mapping ``(task_id, agent_id) -> CacheEntry``."""

    def __init__(self, entries: Iterable[CacheEntry] = ()):
        self._entries: dict[tuple[str, str], CacheEntry] = {}
        for e in entries:
            key = (e.task_id, e.agent_id)
            if key in self._entries:
                raise CacheFormatError(f"duplicate cache key {e.task_id}/{e.agent_id}")
            self._entries[key] = e

    def __getitem__(self, key):
        return self._entries[key]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def task_ids(self) -> list[str]:
        return sorted({t for t, _ in self._entries})

    def missing(self, task_ids: Iterable[str], agent_ids: Iterable[str]) -> list[tuple[str, str]]:
        agent_ids = list(agent_ids)
        return [(t, a) for t in task_ids for a in agent_ids if (t, a) not in self._entries]


def load_cache(path: str | Path) -> ResultCache:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_cache(fh)


def parse_cache(fh: Iterable[str]) -> ResultCache:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        return ResultCache()
    if tuple(h.strip() for h in header) != CACHE_HEADER:
        raise CacheFormatError(f"line 1: expected header {','.join(CACHE_HEADER)}")
    entries: dict[tuple[str, str], CacheEntry] = {}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(CACHE_HEADER):
            raise CacheFormatError(f"line {line}: expected {len(CACHE_HEADER)} fields, got {len(row)}")
        task_id, agent_id, reward, tokens, answer = row
        try:
            entry = CacheEntry(task_id, agent_id, answer, int(tokens), float(reward))
        except ValueError as exc:
            raise CacheFormatError(f"line {line}: {exc}") from None
        if not task_id or not agent_id or entry.output_tokens < 0 or entry.reward < 0:
            raise CacheFormatError(f"line {line}: invalid field values")
        key = (task_id, agent_id)
        if key in entries:
            raise CacheFormatError(f"line {line}: duplicate key {task_id}/{agent_id}")
        entries[key] = entry
    return ResultCache(entries.values())


def format_cache(entries: Iterable[CacheEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CACHE_HEADER)
    for e in sorted(entries, key=lambda e: (e.task_id, e.agent_id)):
        writer.writerow([e.task_id, e.agent_id, repr(float(e.reward)), e.output_tokens, e.answer])
    return buf.getvalue()


def write_cache(entries: Iterable[CacheEntry], path: str | Path) -> None:
    Path(path).write_text(format_cache(entries), encoding="utf-8")


# --- backends --------------------------------------------------------------


class Backend(Protocol):
    mode: str

    def execute(
        self, agent: RecipientProfile, task: TaskSpec, rng: np.random.Generator, reward_scale: float = 1.0
    ) -> ExecutionOutcome: ...


class CachedBackend:
    mode = "cached"

    def __init__(self, cache: ResultCache):
        self.cache = cache

    def execute(self, agent, task, rng=None, reward_scale=1.0):
        try:
            e = self.cache[(task.task_id, agent.agent_id)]
        except KeyError:
            raise MissingEntry(task.task_id, agent.agent_id) from None
        reward = reward_scale if e.reward > 0 else 0.0
        return ExecutionOutcome(e.answer, e.output_tokens, reward, execution_cost(e.output_tokens, agent.throughput))


@dataclass(frozen=True)
class SyntheticAgentSpec:
    """Per-agent success probabilities keyed by a task's ``source_tag``.

    ``"*"`` is the fallback key. Output length is ``token_mean`` plus an
    integer drawn uniformly from ``[-token_dispersion, +token_dispersion]``
    (both rounded to whole tokens), floored at 1.
    """

    agent_id: str
    success_prob: Mapping[str, float]
    token_mean: float
    token_dispersion: float = 0.0

    def __post_init__(self):
        for tag, p in self.success_prob.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{self.agent_id}: probability for {tag!r} outside [0, 1]")
        if not self.token_mean > 0 or self.token_dispersion < 0:
            raise ValueError(f"{self.agent_id}: invalid token model")

    def __hash__(self):
        return hash((self.agent_id, tuple(sorted(self.success_prob.items())), self.token_mean))

    def prob(self, tag: str) -> float:
        if tag in self.success_prob:
            return self.success_prob[tag]
        return self.success_prob.get("*", 0.0)

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "success_prob": dict(self.success_prob),
            "token_mean": self.token_mean,
            "token_dispersion": self.token_dispersion,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticAgentSpec":
        return cls(
            str(d["agent_id"]),
            {str(k): float(v) for k, v in d["success_prob"].items()},
            float(d["token_mean"]),
            float(d.get("token_dispersion", 0.0)),
        )


def load_synthetic(path: str | Path) -> dict[str, SyntheticAgentSpec]:
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    specs = [SyntheticAgentSpec.from_dict(r) for r in rows]
    return {s.agent_id: s for s in specs}


def write_synthetic(specs: Iterable[SyntheticAgentSpec], path: str | Path) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in specs], indent=2) + "\n", encoding="utf-8")


class SyntheticBackend:
    """Samples outcomes with integer draws only, so streams are platform-stable."""

    mode = "synthetic"

    def __init__(self, specs: Mapping[str, SyntheticAgentSpec]):
        self.specs = dict(specs)

    def execute(self, agent, task, rng, reward_scale=1.0):
        spec = self.specs.get(agent.agent_id)
        if spec is None:
            raise MissingEntry(task.task_id, agent.agent_id)
        threshold = round(spec.prob(task.source_tag) * PROB_SCALE)
        success = int(rng.integers(0, PROB_SCALE)) < threshold
        spread = int(round(spec.token_dispersion))
        jitter = int(rng.integers(-spread, spread + 1)) if spread else 0
        tokens = max(1, int(round(spec.token_mean)) + jitter)
        if success:
            answer = task.ground_truth
        else:
            answer = ""
        return ExecutionOutcome(
            answer, tokens, reward_scale if success else 0.0, execution_cost(tokens, agent.throughput)
        )


def solver_prompt(task: TaskSpec) -> str:
    if task.domain == "math":
        template = load_asset("solver_math")
    else:
        template = load_asset("solver_research")
    for placeholder in ("{$question$}", "{question$}", "{question}"):
        template = template.replace(placeholder, task.prompt)
    return template


@dataclass(frozen=True)
class LiveAgent:
    endpoint: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    max_output_tokens: int | None = None


class LiveBackend:
    """Queries an OpenAI-style endpoint per recipient and grades the reply.

    Search tags in the research prompt are not executed; the reply is graded
    as returned.
    """

    mode = "live"

    def __init__(self, agents: Mapping[str, LiveAgent], client, timeout: float = 120.0):
        self.agents = dict(agents)
        self.client = client
        self.timeout = timeout

    def execute(self, agent, task, rng=None, reward_scale=1.0):
        from .llmclient import ChatRequest, LLMError

        live = self.agents.get(agent.agent_id)
        if live is None:
            raise MissingEntry(task.task_id, agent.agent_id)
        req = ChatRequest(
            endpoint=live.endpoint,
            model=live.model,
            messages=({"role": "user", "content": solver_prompt(task)},),
            temperature=1.0,
            max_output_tokens=live.max_output_tokens,
            timeout=self.timeout,
            api_key_env=live.api_key_env,
        )
        try:
            resp = self.client.complete(req)
        except LLMError as exc:
            raise TransportError(str(exc)) from exc
        reward = reward_scale * grade(resp.text, task)
        tokens = resp.completion_tokens
        return ExecutionOutcome(resp.text, tokens, reward, execution_cost(tokens, agent.throughput))


def execute(agent: RecipientProfile, task: TaskSpec, backend: Backend, rng=None, reward_scale: float = 1.0):
    return backend.execute(agent, task, rng, reward_scale)
