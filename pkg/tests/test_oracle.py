import io

import numpy as np
import pytest

from swfbench.core import TaskSpec
from swfbench.oracle import (
    CacheEntry,
    CachedBackend,
    CacheFormatError,
    MissingEntry,
    ResultCache,
    SyntheticAgentSpec,
    SyntheticBackend,
    execution_cost,
    extract_answer,
    extract_boxed,
    format_cache,
    grade,
    load_cache,
    load_synthetic,
    parse_cache,
    solver_prompt,
    write_cache,
    write_synthetic,
)

HEADER = "task_id,agent_id,reward,output_tokens,answer\n"


def test_cost_matches_worked_example():
    assert round(execution_cost(800, 7942.57), 3) == 0.101


@pytest.mark.parametrize(
    "text, expected",
    [
        (r"so \boxed{42}", "42"),
        (r"\boxed{1} then \boxed{2}", "2"),
        (r"\boxed{\frac{1}{2}}", r"\frac{1}{2}"),
        (r"\boxed{\boxed{7}}", "7"),
        (r"\box{9}", "9"),
        ("no box here", None),
        (r"\boxed{unclosed", None),
    ],
)
def test_extract_boxed(text, expected):
    assert extract_boxed(text) == expected


def test_extract_answer_research_takes_last_span():
    assert extract_answer("<answer>a</answer> x <answer> b </answer>", "deep_research") == " b "
    assert extract_answer("plain text", "deep_research") is None


def test_grade_math(math_task):
    assert grade(r"thinking... \boxed{42}", math_task) == 1.0
    assert grade(r"\boxed{ 42 }", math_task) == 1.0
    assert grade(r"\boxed{41}", math_task) == 0.0
    assert grade("42", math_task) == 0.0
    boxed_truth = TaskSpec("m2", "math", "q", r"\boxed{42}")
    assert grade(r"\boxed{42}", boxed_truth) == 1.0


def test_grade_research(research_task):
    assert grade("<answer>  paris\n</answer>", research_task) == 1.0
    assert grade("<answer>Lyon</answer>", research_task) == 0.0
    assert grade("Paris", research_task) == 0.0


def test_cache_roundtrip_is_stable(tmp_path):
    entries = [
        CacheEntry("t2", "AAA", 'has, comma and "quote"', 10, 1.0),
        CacheEntry("t1", "BBB", "x\ny", 3, 0.0),
    ]
    write_cache(entries, tmp_path / "c.csv")
    cache = load_cache(tmp_path / "c.csv")
    assert cache[("t2", "AAA")] == entries[0]
    assert cache[("t1", "BBB")] == entries[1]
    assert format_cache(cache.values()) == (tmp_path / "c.csv").read_text()
    assert cache.task_ids() == ["t1", "t2"]


@pytest.mark.parametrize(
    "body, line",
    [
        ("t1,AAA,1.0,10\n", 2),
        ("t1,AAA,yes,10,x\n", 2),
        ("t1,AAA,1.0,10,x\nt1,AAA,0.0,3,y\n", 3),
        ("t1,AAA,1.0,10,x\n,BBB,1.0,3,y\n", 3),
        ("t1,AAA,-1,10,x\n", 2),
    ],
)
def test_cache_errors_carry_line_numbers(body, line):
    with pytest.raises(CacheFormatError, match=f"line {line}"):
        parse_cache(io.StringIO(HEADER + body))


def test_cache_bad_header():
    with pytest.raises(CacheFormatError, match="line 1"):
        parse_cache(io.StringIO("a,b,c\n"))


def test_result_cache_missing_and_duplicates():
    c = ResultCache([CacheEntry("t1", "AAA", "", 1, 0.0)])
    assert c.missing(["t1", "t2"], ["AAA"]) == [("t2", "AAA")]
    with pytest.raises(ValueError):
        ResultCache([CacheEntry("t1", "AAA", "", 1, 0.0)] * 2)


def test_cached_backend(small_roster, math_task):
    cache = ResultCache([CacheEntry("m1", "AAA", r"\boxed{42}", 500, 1.0)])
    out = CachedBackend(cache).execute(small_roster[0], math_task, None, reward_scale=100)
    assert (out.reward, out.output_tokens, out.cost) == (100, 500, 0.5)
    with pytest.raises(MissingEntry) as info:
        CachedBackend(cache).execute(small_roster[1], math_task)
    assert "m1/BBB" in str(info.value)


def test_synthetic_spec_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        SyntheticAgentSpec("AAA", {"*": 1.5}, 10)
    with pytest.raises(ValueError):
        SyntheticAgentSpec("AAA", {"*": 0.5}, 0)
    s = SyntheticAgentSpec("AAA", {"gsm": 0.9, "*": 0.1}, 100, 5)
    assert s.prob("gsm") == 0.9 and s.prob("other") == 0.1
    write_synthetic([s], tmp_path / "s.json")
    assert load_synthetic(tmp_path / "s.json") == {"AAA": s}


def test_synthetic_backend_is_deterministic_and_calibrated(small_roster, math_task):
    backend = SyntheticBackend({"AAA": SyntheticAgentSpec("AAA", {"*": 0.3}, 200, 20)})

    def draw(seed, n=2000):
        rng = np.random.default_rng(seed)
        return [backend.execute(small_roster[0], math_task, rng) for _ in range(n)]

    a, b = draw(1), draw(1)
    assert a == b
    rate = np.mean([o.reward for o in a])
    assert abs(rate - 0.3) < 0.04
    tokens = [o.output_tokens for o in a]
    assert min(tokens) >= 180 and max(tokens) <= 220
    assert all(o.answer == "42" for o in a if o.reward)


def test_synthetic_extremes(small_roster, math_task):
    sure = SyntheticBackend({"AAA": SyntheticAgentSpec("AAA", {"*": 1.0}, 50)})
    never = SyntheticBackend({"AAA": SyntheticAgentSpec("AAA", {"*": 0.0}, 50)})
    rng = np.random.default_rng(0)
    assert all(sure.execute(small_roster[0], math_task, rng).reward == 1.0 for _ in range(200))
    assert all(never.execute(small_roster[0], math_task, rng).reward == 0.0 for _ in range(200))
    with pytest.raises(MissingEntry):
        sure.execute(small_roster[1], math_task, rng)


def test_solver_prompt_fills_question(math_task, research_task):
    m = solver_prompt(math_task)
    r = solver_prompt(research_task)
    assert math_task.prompt in m and "{question" not in m and "{$question" not in m
    assert research_task.prompt in r and "{question" not in r and "{$question" not in r
