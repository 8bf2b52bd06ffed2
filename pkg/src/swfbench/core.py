"""Domain types shared across the benchmark.

Everything here is an immutable value object with a JSON encoding.
``CommunityStats.record`` returns a new instance instead of mutating.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

DOMAINS = ("deep_research", "math")
SCORE_COLUMNS = ("IFEval", "MATH", "GPQA", "MuSR", "MMLU", "Average")
AGENT_ID_RE = re.compile(r"[A-Z]{3}")


class ValidationError(ValueError):
    """Raised when a value object is constructed with invalid fields."""


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    domain: str
    prompt: str
    ground_truth: str
    source_tag: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "domain": self.domain,
            "prompt": self.prompt,
            "ground_truth": self.ground_truth,
            "source_tag": self.source_tag,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaskSpec":
        return cls(
            task_id=str(d["task_id"]),
            domain=str(d["domain"]),
            prompt=str(d.get("prompt", "")),
            ground_truth=str(d.get("ground_truth", "")),
            source_tag=str(d.get("source_tag", "")),
        )


@dataclass(frozen=True)
class ClusterMeta:
    intra_sim: float
    size: int


@dataclass(frozen=True)
class TaskFlow:
    flow_id: str
    task_ids: tuple[str, ...]
    cluster_meta: ClusterMeta = ClusterMeta(0.0, 0)

    def __post_init__(self):
        object.__setattr__(self, "task_ids", tuple(self.task_ids))
        if len(set(self.task_ids)) != len(self.task_ids):
            raise ValidationError(f"flow {self.flow_id} contains duplicate task ids")

    def check_length(self, flow_len: int) -> None:
        if len(self.task_ids) != flow_len:
            raise ValidationError(
                f"flow {self.flow_id} has {len(self.task_ids)} tasks, expected {flow_len}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "flow_id": self.flow_id,
            "task_ids": list(self.task_ids),
            "cluster_meta": {
                "intra_sim": self.cluster_meta.intra_sim,
                "size": self.cluster_meta.size,
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaskFlow":
        meta = d.get("cluster_meta") or {}
        return cls(
            flow_id=str(d["flow_id"]),
            task_ids=tuple(d["task_ids"]),
            cluster_meta=ClusterMeta(float(meta.get("intra_sim", 0.0)), int(meta.get("size", 0))),
        )


@dataclass(frozen=True)
class RecipientProfile:
    agent_id: str
    scores: Mapping[str, float]
    throughput: float

    def __post_init__(self):
        if not AGENT_ID_RE.fullmatch(self.agent_id):
            raise ValidationError(f"agent id {self.agent_id!r} must be three uppercase letters")
        if "Average" not in self.scores:
            raise ValidationError(f"profile {self.agent_id} lacks an Average score")
        if not self.throughput > 0:
            raise ValidationError(f"profile {self.agent_id} throughput must be positive")
        object.__setattr__(self, "scores", {k: float(v) for k, v in self.scores.items()})

    @property
    def average(self) -> float:
        return self.scores["Average"]

    def __hash__(self):
        return hash((self.agent_id, self.throughput, tuple(sorted(self.scores.items()))))

    def to_dict(self) -> dict[str, Any]:
        ordered = {k: self.scores[k] for k in SCORE_COLUMNS if k in self.scores}
        ordered.update({k: v for k, v in self.scores.items() if k not in ordered})
        return {"agent_id": self.agent_id, "scores": ordered, "throughput": self.throughput}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RecipientProfile":
        return cls(str(d["agent_id"]), dict(d["scores"]), float(d["throughput"]))


@dataclass(frozen=True)
class ExecutionOutcome:
    answer: str
    output_tokens: int
    reward: float
    cost: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "answer": self.answer,
            "output_tokens": self.output_tokens,
            "reward": self.reward,
            "cost": self.cost,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExecutionOutcome":
        return cls(str(d["answer"]), int(d["output_tokens"]), float(d["reward"]), float(d["cost"]))


@dataclass(frozen=True)
class AllocationEvent:
    round: int
    task_id: str
    attempt: int
    reasoning: str
    chosen: str
    answer: str
    reward: float
    cost: float
    running_roi: float
    running_fairness: float

    def __post_init__(self):
        if self.round < 1 or self.attempt < 1:
            raise ValidationError("round and attempt are 1-based")
        if self.cost < 0:
            raise ValidationError("event cost must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "task_id": self.task_id,
            "attempt": self.attempt,
            "reasoning": self.reasoning,
            "chosen": self.chosen,
            "answer": self.answer,
            "reward": self.reward,
            "cost": self.cost,
            "running_roi": self.running_roi,
            "running_fairness": self.running_fairness,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AllocationEvent":
        return cls(
            round=int(d["round"]),
            task_id=str(d["task_id"]),
            attempt=int(d["attempt"]),
            reasoning=str(d["reasoning"]),
            chosen=str(d["chosen"]),
            answer=str(d["answer"]),
            reward=float(d["reward"]),
            cost=float(d["cost"]),
            running_roi=float(d["running_roi"]),
            running_fairness=float(d["running_fairness"]),
        )


@dataclass(frozen=True)
class AgentTally:
    task_count: int = 0
    total_reward: float = 0.0
    total_cost: float = 0.0
    success_count: int = 0

    @property
    def roi(self) -> float:
        return self.total_reward / self.total_cost if self.total_cost > 0 else 0.0

    @property
    def success_rate(self) -> float:
        return self.success_count / self.task_count if self.task_count else 0.0

    @property
    def avg_cost(self) -> float:
        return self.total_cost / self.task_count if self.task_count else 0.0


@dataclass(frozen=True)
class CommunityStats:
    """Running per-agent tallies plus global totals.

    Global totals are accumulated in event order, so they equal a left-to-right
    ``sum`` over the trajectory's event rewards and costs bit for bit.
    """

    agents: Mapping[str, AgentTally]
    total_reward: float = 0.0
    total_cost: float = 0.0

    @classmethod
    def empty(cls, roster: Iterable[str]) -> "CommunityStats":
        return cls({a: AgentTally() for a in roster})

    def __hash__(self):
        return hash((tuple(self.agents.items()), self.total_reward, self.total_cost))

    @property
    def roster(self) -> list[str]:
        return list(self.agents)

    def counts(self) -> list[int]:
        return [t.task_count for t in self.agents.values()]

    def record(self, agent_id: str, reward: float, cost: float) -> "CommunityStats":
        if agent_id not in self.agents:
            raise KeyError(f"unknown agent {agent_id}")
        if cost < 0:
            raise ValidationError("cost must be non-negative")
        t = self.agents[agent_id]
        agents = dict(self.agents)
        agents[agent_id] = AgentTally(
            task_count=t.task_count + 1,
            total_reward=t.total_reward + reward,
            total_cost=t.total_cost + cost,
            success_count=t.success_count + (1 if reward > 0 else 0),
        )
        return CommunityStats(agents, self.total_reward + reward, self.total_cost + cost)

    @property
    def global_roi(self) -> float:
        from .metrics import roi

        return roi([self.total_reward], [self.total_cost])

    @property
    def gini(self) -> float:
        from .metrics import gini

        return gini(self.counts())

    @property
    def fairness(self) -> float:
        return 1.0 - self.gini

    @classmethod
    def from_events(cls, roster: Iterable[str], events: Iterable[AllocationEvent]) -> "CommunityStats":
        stats = cls.empty(roster)
        for e in events:
            stats = stats.record(e.chosen, e.reward, e.cost)
        return stats

    def to_dict(self) -> dict[str, Any]:
        return {
            "agents": {
                a: {
                    "task_count": t.task_count,
                    "total_reward": t.total_reward,
                    "total_cost": t.total_cost,
                    "success_count": t.success_count,
                }
                for a, t in self.agents.items()
            },
            "total_reward": self.total_reward,
            "total_cost": self.total_cost,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CommunityStats":
        agents = {
            a: AgentTally(
                int(t["task_count"]),
                float(t["total_reward"]),
                float(t["total_cost"]),
                int(t["success_count"]),
            )
            for a, t in d["agents"].items()
        }
        return cls(agents, float(d["total_reward"]), float(d["total_cost"]))


@dataclass(frozen=True)
class Trajectory:
    run_id: str
    allocator_tag: str
    flow_id: str
    seed: int
    config_digest: str
    events: tuple[AllocationEvent, ...]
    final_stats: CommunityStats
    status: str = "complete"
    abort_reason: str = ""
    live: bool = False

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        keys = [(e.round, e.attempt) for e in self.events]
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise ValidationError("events must be strictly increasing in (round, attempt)")

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"

    def header(self) -> dict[str, Any]:
        return {
            "record": "header",
            "run_id": self.run_id,
            "allocator_tag": self.allocator_tag,
            "flow_id": self.flow_id,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "status": self.status,
            "abort_reason": self.abort_reason,
            "live": self.live,
            "roster": list(self.final_stats.agents),
        }

    def to_dict(self) -> dict[str, Any]:
        d = self.header()
        del d["record"], d["roster"]
        d["events"] = [e.to_dict() for e in self.events]
        d["final_stats"] = self.final_stats.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Trajectory":
        return cls(
            run_id=d["run_id"],
            allocator_tag=d["allocator_tag"],
            flow_id=d["flow_id"],
            seed=int(d["seed"]),
            config_digest=d["config_digest"],
            events=tuple(AllocationEvent.from_dict(e) for e in d["events"]),
            final_stats=CommunityStats.from_dict(d["final_stats"]),
            status=d.get("status", "complete"),
            abort_reason=d.get("abort_reason", ""),
            live=bool(d.get("live", False)),
        )

    def to_jsonl(self) -> str:
        lines = [dumps(self.header())]
        lines += [dumps({"record": "event", **e.to_dict()}) for e in self.events]
        lines.append(dumps({"record": "final_stats", **self.final_stats.to_dict()}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Trajectory":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not records or records[0].get("record") != "header":
            raise ValidationError("trajectory file must start with a header record")
        head = records[0]
        events, final = [], None
        for r in records[1:]:
            kind = r.pop("record", None)
            if kind == "event":
                events.append(AllocationEvent.from_dict(r))
            elif kind == "final_stats":
                final = CommunityStats.from_dict(r)
        if final is None:
            final = CommunityStats.from_events(head["roster"], events)
        return cls(
            run_id=head["run_id"],
            allocator_tag=head["allocator_tag"],
            flow_id=head["flow_id"],
            seed=int(head["seed"]),
            config_digest=head["config_digest"],
            events=tuple(events),
            final_stats=final,
            status=head.get("status", "complete"),
            abort_reason=head.get("abort_reason", ""),
            live=bool(head.get("live", False)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Trajectory":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def digest(obj: Any) -> str:
    """sha256 over the canonical (sorted-key) JSON form of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Violation:
    kind: str
    task_id: str
    detail: str = ""


@dataclass(frozen=True)
class PoolReport:
    n_tasks: int
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, kind: str) -> int:
        return sum(v.kind == kind for v in self.violations)

    def lines(self) -> list[str]:
        return [f"{v.kind}: {v.task_id} {v.detail}".rstrip() for v in self.violations]


def validate_pool(tasks: Iterable[TaskSpec]) -> PoolReport:
    """Check a task pool for duplicate ids, empty ids/truths and unknown domains."""
    seen: set[str] = set()
    violations = []
    tasks = list(tasks)
    for t in tasks:
        if not t.task_id:
            violations.append(Violation("empty-id", t.task_id))
        elif t.task_id in seen:
            violations.append(Violation("duplicate-id", t.task_id))
        seen.add(t.task_id)
        if not t.ground_truth.strip():
            violations.append(Violation("empty-truth", t.task_id))
        if t.domain not in DOMAINS:
            violations.append(Violation("unknown-domain", t.task_id, t.domain))
    return PoolReport(len(tasks), tuple(violations))


def load_pool(path: str | Path) -> list[TaskSpec]:
    """Read tasks from a JSON array or a JSON-lines file."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        rows = json.loads(text)
    else:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    return [TaskSpec.from_dict(r) for r in rows]


def write_pool(tasks: Iterable[TaskSpec], path: str | Path) -> None:
    Path(path).write_text("".join(dumps(t.to_dict()) + "\n" for t in tasks), encoding="utf-8")


def load_roster(source: str | Path | list) -> list[RecipientProfile]:
    rows = source if isinstance(source, list) else json.loads(Path(source).read_text())
    return [RecipientProfile.from_dict(r) for r in rows]


def load_flows(path: str | Path) -> list[TaskFlow]:
    return [TaskFlow.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]


def write_flows(flows: Iterable[TaskFlow], path: str | Path) -> None:
    Path(path).write_text(json.dumps([f.to_dict() for f in flows], indent=2) + "\n", encoding="utf-8")


__all__ = [
    "AgentTally",
    "AllocationEvent",
    "ClusterMeta",
    "CommunityStats",
    "ExecutionOutcome",
    "PoolReport",
    "RecipientProfile",
    "TaskFlow",
    "TaskSpec",
    "Trajectory",
    "ValidationError",
    "digest",
    "load_flows",
    "load_pool",
    "load_roster",
    "validate_pool",
    "write_flows",
    "write_pool",
]
