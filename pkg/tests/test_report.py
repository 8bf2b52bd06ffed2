import csv
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from swfbench.core import AllocationEvent, CommunityStats, RecipientProfile, Trajectory
from swfbench.engine import final_snapshot
from swfbench.metrics import aggregate_runs, spearman_pvalue
from swfbench.report import (
    LeaderboardRow,
    _fixed6,
    bias_csv,
    group_by_allocator,
    leaderboard,
    leaderboard_csv,
    leaderboard_markdown,
    profile_bias,
    scatter_export,
    starred,
)

ROSTER = ["AAA", "BBB", "CCC", "DDD"]


def traj(tag, flow, picks, roster=ROSTER):
    """picks: list of (agent, reward, cost)."""
    events = [
        AllocationEvent(i, f"t{i}", 1, "", a, "", r, c, 0.0, 0.0) for i, (a, r, c) in enumerate(picks, start=1)
    ]
    return Trajectory(f"{tag}__{flow}", tag, flow, 0, "digest", tuple(events), CommunityStats.from_events(roster, events))


def test_leaderboard_recomputes_from_trajectories():
    runs = [
        traj("fair", "f1", [(a, 1.0, 0.5) for a in ROSTER]),
        traj("fair", "f2", [(a, 1.0, 0.25) for a in ROSTER[:2]]),
        traj("greedy", "f1", [("AAA", 1.0, 0.1)] * 4),
    ]
    rows = leaderboard(group_by_allocator(runs))
    fair = next(r for r in rows if r.allocator_tag == "fair")
    agg = aggregate_runs([final_snapshot(t) for t in runs[:2]])
    assert (fair.score, fair.fairness, fair.efficiency, fair.n_runs) == (agg.score, agg.fairness, agg.efficiency, 2)
    assert [r.rank for r in rows] == [1, 2]


def test_dense_ranking_on_ties():
    same = [(a, 1.0, 0.5) for a in ROSTER]
    groups = {
        "b": [traj("b", "f", same)],
        "a": [traj("a", "f", same)],
        "c": [traj("c", "f", [("AAA", 0.0, 1.0)])],
    }
    rows = leaderboard(groups)
    assert [(r.allocator_tag, r.rank) for r in rows] == [("a", 1), ("b", 1), ("c", 2)]


def test_fixed6_round_half_even():
    assert _fixed6(0.0000005) == "0.000000"
    assert _fixed6(0.0000015) == "0.000002"
    assert _fixed6(0.125) == "0.125000"
    assert _fixed6(2.5) == "2.500000"
    assert _fixed6(1 / 3) == "0.333333"


def test_scatter_export_format():
    rows = [LeaderboardRow("fair", 1, 3.0, 0.9, 1 / 3, 2)]
    text = scatter_export(rows)
    assert text == "tag,fairness,efficiency,score\nfair,0.900000,0.333333,3.000000\n"
    assert scatter_export(rows) == text


def test_markdown_and_csv():
    rows = [LeaderboardRow("fair", 1, 3.0, 0.9, 1 / 3, 2), LeaderboardRow("rand", 2, 1.0, 0.5, 2.0, 2)]
    md = leaderboard_markdown(rows).splitlines()
    assert len(md) == 4 and md[2].startswith("| 1 | fair |")
    parsed = list(csv.DictReader(io.StringIO(leaderboard_csv(rows))))
    assert parsed[1]["allocator_tag"] == "rand" and parsed[1]["score"] == "1.000000"


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(1, 9)), min_size=1, max_size=6))
def test_adding_mean_run_leaves_group_score(specs):
    runs = []
    for i, (lo, hi, cost) in enumerate(specs):
        picks = [(ROSTER[j % 4], 1.0 if j % 2 else 0.0, cost / 10) for j in range(lo, lo + hi + 1)]
        runs.append(traj("g", f"f{i}", picks))
    before = leaderboard({"g": runs})[0].score
    # a perfectly even run whose swf equals the current mean
    cost = 4.0 / before if before else 1.0
    reward = 1.0 if before else 0.0
    extra = traj("g", "extra", [(a, reward, cost / 4) for a in ROSTER])
    assert final_snapshot(extra).swf == pytest.approx(before, rel=1e-12)
    assert leaderboard({"g": runs + [extra]})[0].score == pytest.approx(before, rel=1e-12)


def profiles(averages):
    return [RecipientProfile(a, {"Average": v}, 1000.0) for a, v in zip(ROSTER, averages)]


def test_profile_bias_tracks_ranking():
    picks = [("AAA", 1.0, 0.1)] * 4 + [("BBB", 1.0, 0.1)] * 3 + [("CCC", 0.0, 0.1)] * 2 + [("DDD", 0.0, 0.1)]
    b = profile_bias(traj("x", "f", picks), profiles([40, 30, 20, 10]))
    assert b.rho_profile == 1.0 and b.p_profile == 0.0 and b.star_profile
    assert b.n == 4 and not b.degenerate


def test_profile_bias_uniform_counts_degenerate():
    picks = [(a, 1.0, 0.1) for a in ROSTER]
    b = profile_bias(traj("x", "f", picks), profiles([40, 30, 20, 10]))
    assert b.degenerate and b.rho_profile == 0.0 and not b.star_profile


def test_star_threshold_at_n12():
    p = spearman_pvalue(0.737, 12)
    assert p < 0.05
    assert starred(0.737, p < 0.05) == "0.737*"
    assert starred(0.2, spearman_pvalue(0.2, 12) < 0.05) == "0.200"


def test_bias_csv_rows():
    picks = [("AAA", 1.0, 0.1)] * 3 + [("BBB", 0.0, 0.1)]
    t = traj("x", "f", picks)
    text = bias_csv([(t, profile_bias(t, profiles([40, 30, 20, 10])))])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows[0]["allocator_tag"] == "x" and rows[0]["n"] == "4"
