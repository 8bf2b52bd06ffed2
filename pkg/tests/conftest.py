import pytest

from swfbench.core import RecipientProfile, TaskSpec
from swfbench.synthetic import block_pool, demo_roster


@pytest.fixture
def roster():
    return demo_roster(12, seed=0)


@pytest.fixture
def small_roster():
    scores = {"Average": 1.0}
    return [
        RecipientProfile("AAA", {**scores, "Average": 30.0}, 1000.0),
        RecipientProfile("BBB", {**scores, "Average": 20.0}, 2000.0),
        RecipientProfile("CCC", {**scores, "Average": 10.0}, 4000.0),
    ]


@pytest.fixture
def math_task():
    return TaskSpec("m1", "math", "What is 6*7?", "42", "gsm")


@pytest.fixture
def research_task():
    return TaskSpec("r1", "deep_research", "Capital of France?", "Paris", "hotpot")


@pytest.fixture
def blocks():
    return block_pool(n_blocks=3, tasks_per_block=20, n_agents=12, seed=0)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
