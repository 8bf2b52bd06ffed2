"""Leaderboard, fairness/efficiency scatter export and profile-bias analysis."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Mapping, Sequence

from .core import RecipientProfile, Trajectory
from .engine import final_snapshot
from .metrics import InvalidInput, aggregate_runs, spearman_test

SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class LeaderboardRow:
    allocator_tag: str
    rank: int
    score: float
    fairness: float
    efficiency: float
    n_runs: int


def leaderboard(groups: Mapping[str, Sequence[Trajectory]]) -> list[LeaderboardRow]:
    """One row per allocator, densely ranked by mean per-flow SWF."""
    if not groups:
        raise InvalidInput("leaderboard needs at least one allocator group")
    scored = []
    for tag, runs in groups.items():
        if not runs:
            raise InvalidInput(f"allocator {tag} has no runs")
        agg = aggregate_runs([final_snapshot(t) for t in runs])
        scored.append((tag, agg, len(runs)))
    scored.sort(key=lambda r: (-r[1].score, r[0]))
    rows, rank, prev = [], 0, None
    for tag, agg, n in scored:
        if agg.score != prev:
            rank += 1
            prev = agg.score
        rows.append(LeaderboardRow(tag, rank, agg.score, agg.fairness, agg.efficiency, n))
    return rows


def group_by_allocator(trajectories: Sequence[Trajectory]) -> dict[str, list[Trajectory]]:
    groups: dict[str, list[Trajectory]] = {}
    for t in sorted(trajectories, key=lambda t: (t.allocator_tag, t.flow_id)):
        groups.setdefault(t.allocator_tag, []).append(t)
    return groups


def _fixed6(x: float) -> str:
    return str(Decimal(repr(float(x))).quantize(Decimal("0.000001"), rounding=ROUND_HALF_EVEN))


def scatter_export(rows: Sequence[LeaderboardRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tag", "fairness", "efficiency", "score"])
    for r in rows:
        w.writerow([r.allocator_tag, _fixed6(r.fairness), _fixed6(r.efficiency), _fixed6(r.score)])
    return buf.getvalue()


def leaderboard_markdown(rows: Sequence[LeaderboardRow]) -> str:
    lines = [
        "| Rank | Allocator | Score | Fairness | Efficiency | Runs |",
        "|-----:|:----------|------:|---------:|-----------:|-----:|",
    ]
    for r in rows:
        lines.append(
            f"| {r.rank} | {r.allocator_tag} | {r.score:.2f} | {r.fairness:.3f} | {r.efficiency:.2f} | {r.n_runs} |"
        )
    return "\n".join(lines) + "\n"


def leaderboard_csv(rows: Sequence[LeaderboardRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "allocator_tag", "score", "fairness", "efficiency", "n_runs"])
    for r in rows:
        w.writerow([r.rank, r.allocator_tag, _fixed6(r.score), _fixed6(r.fairness), _fixed6(r.efficiency), r.n_runs])
    return buf.getvalue()


@dataclass(frozen=True)
class ProfileBias:
    rho_profile: float
    p_profile: float
    rho_roi: float
    p_roi: float
    n: int
    degenerate: bool

    @property
    def star_profile(self) -> bool:
        return not self.degenerate and self.p_profile < SIGNIFICANCE

    @property
    def star_roi(self) -> bool:
        return not self.degenerate and self.p_roi < SIGNIFICANCE


def starred(rho: float, significant: bool) -> str:
    return f"{rho:.3f}{'*' if significant else ''}"


def profile_bias(trajectory: Trajectory, profiles: Sequence[RecipientProfile]) -> ProfileBias:
    """Spearman of per-agent task counts against profile Average and realized ROI."""
    stats = trajectory.final_stats
    agents = [p.agent_id for p in profiles]
    counts = [stats.agents[a].task_count for a in agents]
    averages = [p.average for p in profiles]
    rois = [stats.agents[a].roi for a in agents]
    prof = spearman_test(counts, averages)
    eff = spearman_test(counts, rois)
    return ProfileBias(
        rho_profile=prof.rho,
        p_profile=prof.pvalue,
        rho_roi=eff.rho,
        p_roi=eff.pvalue,
        n=len(agents),
        degenerate=prof.degenerate,
    )


def bias_csv(items: Sequence[tuple[Trajectory, ProfileBias]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["allocator_tag", "flow_id", "n", "rho_profile", "p_profile", "rho_roi", "p_roi", "degenerate"])
    for t, b in items:
        w.writerow(
            [
                t.allocator_tag,
                t.flow_id,
                b.n,
                starred(b.rho_profile, b.star_profile),
                _fixed6(b.p_profile),
                starred(b.rho_roi, b.star_roi),
                _fixed6(b.p_roi),
                int(b.degenerate),
            ]
        )
    return buf.getvalue()
