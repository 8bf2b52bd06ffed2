"""The allocation loop.

For each task in a flow the allocator picks a recipient, the backend executes
and grades, the community stats and running metrics are updated, and the
rendered feedback is handed back to the allocator. A task ends on the first
success or after ``max_retry + 1`` attempts.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .allocators import AllocatorError, DecisionContext, Turn
from .core import AllocationEvent, CommunityStats, RecipientProfile, TaskFlow, TaskSpec, Trajectory, digest
from .metrics import MetricSnapshot, gini, roi
from .oracle import MissingEntry, TransportError
from .prompts import load_asset

log = logging.getLogger(__name__)

FEEDBACK_STYLES = ("full_table",)


@dataclass(frozen=True)
class RunConfig:
    max_retry: int = 3
    flow_id: str = ""
    seed: int = 0
    reward_scale: float = 1.0
    feedback_style: str = "full_table"
    history_window: int = 3

    def __post_init__(self):
        if self.max_retry < 0:
            raise ValueError("max_retry must be >= 0")
        if not self.reward_scale > 0:
            raise ValueError("reward_scale must be positive")
        if self.history_window < 1:
            raise ValueError("history_window must be >= 1")
        if self.feedback_style not in FEEDBACK_STYLES:
            raise ValueError(f"unknown feedback style {self.feedback_style!r}")

    def shared(self) -> dict:
        """Fields that define a comparable batch (per-run flow and seed excluded)."""
        d = asdict(self)
        del d["flow_id"], d["seed"]
        return d


def config_digest(config: RunConfig, profiles: Sequence[RecipientProfile], backend_mode: str, extra=None) -> str:
    return digest(
        {
            "run": config.shared(),
            "roster": [p.to_dict() for p in profiles],
            "backend": backend_mode,
            "extra": extra,
        }
    )


# --- feedback --------------------------------------------------------------

TABLE_HEADER = "|   | Name| Task Count | Reward |  Cost  | Success% |    ROI    |"
TABLE_RULE = "|--:|:----|-----------:|-------:|-------:|---------:|-----------:|"


def _member_rows(stats: CommunityStats) -> list[str]:
    overall = stats.global_roi
    rows = []
    for i, name in enumerate(sorted(stats.agents)):
        t = stats.agents[name]
        member_roi = t.roi
        label = "high" if member_roi > 0 and member_roi >= overall else "low"
        rows.append(
            f"|{i:>2} | {name} |{t.task_count:>11} |{t.total_reward:>7g} |{t.avg_cost:>7.3f} "
            f"|{round(t.success_rate, 3):>9g} |{f'{member_roi:.0f} ({label})':>11}|"
        )
    return rows


def render_feedback(
    stats: CommunityStats, last: AllocationEvent, task_outcome: str, exhausted: bool = False
) -> str:
    if not stats.agents:
        raise ValueError("feedback needs a non-empty roster")
    if task_outcome == "success":
        lead = f"Great! {last.chosen} has completed the task (task id of {last.task_id})."
    elif task_outcome == "failure":
        lead = f"Unfortunately, {last.chosen} has not completed the task (task id of {last.task_id})."
        if exhausted:
            lead += " The retry limit for this task is reached; the environment will present the next task."
        else:
            lead += " You can reassign this task to another member within <agent></agent> tags."
    else:
        raise ValueError(f"task_outcome must be success or failure, not {task_outcome!r}")
    lines = [
        lead,
        "Due to the limited space, the summarized overall review of history task-solving is as follows:",
        f"The total cost is {stats.total_cost:.2f}.",
        f"The totol reward is {stats.total_reward:.2f}.",
        f"The overal ROI (e.g., reward / cost) is {stats.global_roi:.2f}.",
        f"The Gini Coefficient is {stats.gini:.2f}.",
        "Statistics of each member are evaluated as below:",
        TABLE_HEADER,
        TABLE_RULE,
        *_member_rows(stats),
        "",
        load_asset("feedback_caption"),
    ]
    return "\n".join(lines)


# --- loop ------------------------------------------------------------------


def _rngs(seed: int, n_agents: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    children = np.random.SeedSequence(seed).spawn(1 + n_agents)
    return np.random.Generator(np.random.PCG64(children[0])), [
        np.random.Generator(np.random.PCG64(c)) for c in children[1:]
    ]


def run_flow(
    flow: TaskFlow,
    tasks: Mapping[str, TaskSpec],
    allocator,
    backend,
    profiles: Sequence[RecipientProfile],
    config: RunConfig,
    run_id: str | None = None,
    digest_value: str | None = None,
) -> Trajectory:
    profiles = list(profiles)
    if not profiles:
        raise ValueError("run_flow needs at least one recipient")
    by_id = {p.agent_id: p for p in profiles}
    alloc_rng, agent_rngs = _rngs(config.seed, len(profiles))
    agent_rng = {p.agent_id: r for p, r in zip(profiles, agent_rngs)}
    tag = getattr(allocator, "tag", type(allocator).__name__)
    run_id = run_id or f"{tag}__{flow.flow_id}"
    digest_value = digest_value or config_digest(config, profiles, getattr(backend, "mode", "custom"))

    stats = CommunityStats.empty(by_id)
    events: list[AllocationEvent] = []
    turns: list[Turn] = []
    status, reason = "complete", ""
    rnd = 0

    def finish() -> Trajectory:
        return Trajectory(
            run_id=run_id,
            allocator_tag=tag,
            flow_id=flow.flow_id,
            seed=config.seed,
            config_digest=digest_value,
            events=tuple(events),
            final_stats=stats,
            status=status,
            abort_reason=reason,
            live=getattr(backend, "mode", "") == "live",
        )

    missing = [t for t in flow.task_ids if t not in tasks]
    if missing:
        status, reason = "aborted", f"flow references unknown task {missing[0]}"
        return finish()

    for index, task_id in enumerate(flow.task_ids, start=1):
        task = tasks[task_id]
        failed: set[str] = set()
        for attempt in range(1, config.max_retry + 2):
            ctx = DecisionContext(
                task=task,
                stats=stats,
                profiles=profiles,
                recent_turns=tuple(turns[-config.history_window :]),
                attempt=attempt,
                excluded=frozenset(failed),
                task_index=index,
            )
            try:
                decision = allocator.decide(ctx, alloc_rng)
                if decision.chosen not in by_id:
                    raise AllocatorError(f"allocator chose unknown member {decision.chosen!r}")
                outcome = backend.execute(by_id[decision.chosen], task, agent_rng[decision.chosen], config.reward_scale)
            except (AllocatorError, MissingEntry, TransportError) as exc:
                status, reason = "aborted", f"{type(exc).__name__}: {exc}"
                log.warning("run %s aborted at task %s attempt %d: %s", run_id, task_id, attempt, reason)
                return finish()

            rnd += 1
            stats = stats.record(decision.chosen, outcome.reward, outcome.cost)
            snap = MetricSnapshot.at(rnd, gini(stats.counts()), roi([stats.total_reward], [stats.total_cost]))
            event = AllocationEvent(
                round=rnd,
                task_id=task_id,
                attempt=attempt,
                reasoning=decision.reasoning,
                chosen=decision.chosen,
                answer=outcome.answer,
                reward=outcome.reward,
                cost=outcome.cost,
                running_roi=snap.roi,
                running_fairness=snap.fairness,
            )
            events.append(event)
            success = outcome.reward > 0
            exhausted = not success and attempt == config.max_retry + 1
            feedback = render_feedback(stats, event, "success" if success else "failure", exhausted=exhausted)
            turns.append(Turn(decision.chosen, "success" if success else "failure", feedback, decision.reasoning))
            if success:
                break
            failed.add(decision.chosen)
    return finish()


def final_snapshot(traj: Trajectory) -> MetricSnapshot:
    stats = traj.final_stats
    return MetricSnapshot.at(len(traj.events), gini(stats.counts()), stats.global_roi)
