"""Synthetic block-structured pools for demos and tests.

Agents are split into ``n_blocks`` disjoint strong groups. A task from block
``b`` is solved by the agents of group ``b``; ``noise`` flips each entry of a
task's reward vector with that probability.
"""

from __future__ import annotations

import itertools
import json
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RecipientProfile, TaskSpec, write_pool
from .oracle import CacheEntry, SyntheticAgentSpec, write_cache, write_synthetic

# Benchmark-style capability rows (IFEval, MATH, GPQA, MuSR, MMLU, Average).
DEMO_SCORES = {
    "LLL": (83.46, 62.54, 11.74, 13.5, 51.85, 46.6),
    "KKK": (81.58, 54.76, 9.62, 10.16, 43.38, 41.31),
    "HHH": (75.85, 50.0, 5.48, 8.45, 36.52, 35.2),
    "JJJ": (74.36, 19.49, 14.77, 9.74, 31.95, 32.07),
    "MMM": (41.86, 17.07, 4.59, 16.14, 40.96, 22.96),
    "FFF": (69.0, 46.37, 13.53, 16.68, 49.15, 41.76),
    "III": (49.22, 15.56, 8.72, 8.61, 31.09, 23.76),
    "AAA": (62.83, 34.43, 11.07, 10.23, 20.39, 29.92),
    "DDD": (33.71, 7.18, 1.57, 12.03, 16.68, 14.14),
    "OOO": (79.89, 41.77, 16.33, 17.17, 48.92, 43.59),
    "PPP": (86.69, 38.07, 14.21, 17.69, 47.88, 43.41),
    "EEE": (64.75, 36.78, 3.02, 7.57, 25.05, 27.16),
}
COLUMNS = ("IFEval", "MATH", "GPQA", "MuSR", "MMLU", "Average")


def demo_roster(n_agents: int = 12, seed: int = 0) -> list[RecipientProfile]:
    rng = np.random.default_rng(seed)
    names = list(DEMO_SCORES)
    if n_agents > len(names):
        extra = ("".join(t) for t in itertools.product(string.ascii_uppercase, repeat=3))
        names += [n for n in extra if n not in DEMO_SCORES][: n_agents - len(names)]
    roster = []
    for name in names[:n_agents]:
        row = DEMO_SCORES.get(name) or tuple(np.round(rng.uniform(10, 80, 6), 2))
        throughput = float(np.round(rng.uniform(800.0, 9000.0), 2))
        roster.append(RecipientProfile(name, dict(zip(COLUMNS, map(float, row))), throughput))
    return roster


@dataclass
class BlockPool:
    tasks: list[TaskSpec]
    roster: list[RecipientProfile]
    cache: list[CacheEntry]
    synthetic: list[SyntheticAgentSpec]
    blocks: dict[str, int]


def block_pool(
    n_blocks: int = 3,
    tasks_per_block: int = 20,
    n_agents: int = 12,
    noise: float = 0.0,
    seed: int = 0,
    p_strong: float = 0.9,
    p_weak: float = 0.1,
) -> BlockPool:
    rng = np.random.default_rng(seed)
    roster = demo_roster(n_agents, seed)
    groups = np.array_split(np.arange(n_agents), n_blocks)
    tasks, cache, blocks = [], [], {}
    for b in range(n_blocks):
        pattern = np.zeros(n_agents, dtype=np.int64)
        pattern[groups[b]] = 1
        for i in range(tasks_per_block):
            tid = f"b{b}-t{i:03d}"
            domain = "math" if b % 2 else "deep_research"
            truth = f"answer {b}-{i}"
            tasks.append(TaskSpec(tid, domain, f"Synthetic question {tid}?", truth, f"block{b}"))
            blocks[tid] = b
            flips = rng.random(n_agents) < noise
            rewards = np.where(flips, 1 - pattern, pattern)
            for j, prof in enumerate(roster):
                tokens = 200 + 50 * j + int(rng.integers(0, 50))
                if rewards[j]:
                    answer = f"\\boxed{{{truth}}}" if domain == "math" else f"<answer> {truth} </answer>"
                else:
                    answer = "<answer> unknown </answer>"
                cache.append(CacheEntry(tid, prof.agent_id, answer, tokens, float(rewards[j])))
    synthetic = []
    for j, prof in enumerate(roster):
        probs = {f"block{b}": (p_strong if j in groups[b] else p_weak) for b in range(n_blocks)}
        synthetic.append(SyntheticAgentSpec(prof.agent_id, probs, token_mean=225.0 + 50 * j, token_dispersion=25.0))
    return BlockPool(tasks, roster, cache, synthetic, blocks)


def write_demo(workdir: str | Path, tasks_per_block: int = 100, n_blocks: int = 3, seed: int = 0, noise: float = 0.05) -> Path:
    """Write a self-contained synthetic workdir with a config.json."""
    root = Path(workdir)
    root.mkdir(parents=True, exist_ok=True)
    pool = block_pool(n_blocks=n_blocks, tasks_per_block=tasks_per_block, noise=noise, seed=seed)
    write_pool(pool.tasks, root / "pool.jsonl")
    (root / "roster.json").write_text(json.dumps([p.to_dict() for p in pool.roster], indent=2) + "\n")
    write_cache(pool.cache, root / "cache.csv")
    write_synthetic(pool.synthetic, root / "synthetic.json")
    config = {
        "pool": "pool.jsonl",
        "roster": "roster.json",
        "cache": "cache.csv",
        "synthetic": "synthetic.json",
        "flows": "flows.json",
        "output_dir": "out",
        "backend": "synthetic",
        "batch_id": "demo",
        "workers": 2,
        "allocators": [
            {"tag": "random", "strategy": "random"},
            {"tag": "fairness", "strategy": "fairness"},
            {"tag": "efficiency", "strategy": "efficiency", "k": 3},
            {"tag": "hybrid", "strategy": "hybrid"},
        ],
        "run": {"max_retry": 3, "seed": seed, "reward_scale": 1.0, "history_window": 3},
        "flowbuilder": {"k": n_blocks, "flow_len": 50, "seed": seed, "target_flows": 63, "mode": "similarity"},
        "client": {"max_in_flight": 8, "max_attempts": 5, "timeout": 120},
    }
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return root / "config.json"
