"""Command-line entry point: validate, build-flows, run, report (and demo)."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

from . import __version__
from .allocators import make_allocator
from .core import load_flows, load_pool, load_roster, validate_pool, write_flows
from .engine import RunConfig, config_digest, run_flow
from .flowbuilder import EmptyOutput, IncompleteCache, InvalidInput, build_flows
from .llmclient import ChatClient
from .oracle import CachedBackend, LiveAgent, LiveBackend, SyntheticBackend, load_cache, load_synthetic
from .prompts import ConfigError, verify_assets
from .report import (
    bias_csv,
    group_by_allocator,
    leaderboard,
    leaderboard_csv,
    leaderboard_markdown,
    profile_bias,
    scatter_export,
)

log = logging.getLogger("swfbench")

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2
BACKENDS = ("cached", "synthetic", "live")


class Config:
    """JSON config with paths resolved against ``workdir``."""

    def __init__(self, data: dict[str, Any], workdir: Path):
        self.data = data
        self.workdir = workdir

    @classmethod
    def load(cls, args) -> "Config":
        workdir = Path(args.workdir).resolve()
        path = Path(args.config)
        if not path.is_absolute():
            path = workdir / path
        data = json.loads(path.read_text(encoding="utf-8"))
        for key in ("backend", "batch_id", "workers", "output_dir"):
            value = getattr(args, key, None)
            if value is not None:
                data[key] = value
        run = data.setdefault("run", {})
        if getattr(args, "seed", None) is not None:
            run["seed"] = args.seed
        fb = data.setdefault("flowbuilder", {})
        for key in ("k", "flow_len"):
            value = getattr(args, key, None)
            if value is not None:
                fb[key] = value
        return cls(data, workdir)

    def path(self, key: str) -> Path | None:
        value = self.data.get(key)
        if value is None or isinstance(value, list):
            return None
        p = Path(value)
        return p if p.is_absolute() else self.workdir / p

    @property
    def out(self) -> Path:
        return self.path("output_dir") or self.workdir / "out"

    @property
    def batch(self) -> str:
        return str(self.data.get("batch_id", "batch"))

    def roster(self):
        src = self.data.get("roster")
        return load_roster(src if isinstance(src, list) else self.path("roster"))

    def run_config(self, flow_id: str = "", seed: int | None = None) -> RunConfig:
        run = dict(self.data.get("run", {}))
        base_seed = int(run.pop("seed", 0))
        return RunConfig(flow_id=flow_id, seed=base_seed if seed is None else seed, **run)

    def client(self) -> ChatClient:
        c = self.data.get("client", {})
        return ChatClient(
            max_attempts=int(c.get("max_attempts", 5)),
            max_in_flight=int(c.get("max_in_flight", 8)),
            backoff_base=float(c.get("backoff_base", 1.0)),
        )

    def backend(self, client: ChatClient | None = None):
        mode = self.data.get("backend")
        if mode == "cached":
            return CachedBackend(load_cache(self.path("cache")))
        if mode == "synthetic":
            return SyntheticBackend(load_synthetic(self.path("synthetic")))
        if mode == "live":
            agents = {a: LiveAgent(**spec) for a, spec in self.data.get("live", {}).get("agents", {}).items()}
            timeout = float(self.data.get("client", {}).get("timeout", 120))
            return LiveBackend(agents, client or self.client(), timeout=timeout)
        raise ConfigError(f"backend must be one of {BACKENDS}, got {mode!r}")

    def backend_fingerprint(self) -> dict:
        mode = self.data.get("backend")
        source = {"cached": "cache", "synthetic": "synthetic"}.get(mode)
        fp = {"mode": mode}
        if source and self.path(source) and self.path(source).is_file():
            fp["sha256"] = hashlib.sha256(self.path(source).read_bytes()).hexdigest()
        return fp


def derive_seed(base: int, *parts: str) -> int:
    h = hashlib.sha256(json.dumps([base, *parts]).encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1


# --- validate --------------------------------------------------------------


def cmd_validate(cfg: Config) -> tuple[int, list[str]]:
    problems: list[str] = []
    mode = cfg.data.get("backend")
    if mode not in BACKENDS:
        problems.append(f"config: backend must be exactly one of {', '.join(BACKENDS)} (got {mode!r})")

    tasks = []
    pool_path = cfg.path("pool")
    if pool_path is None or not pool_path.is_file():
        problems.append(f"config: pool file not found ({pool_path})")
    else:
        tasks = load_pool(pool_path)
        problems += [f"pool: {line}" for line in validate_pool(tasks).lines()]

    roster = []
    try:
        roster = cfg.roster()
    except Exception as exc:  # noqa: BLE001 - report any roster defect
        problems.append(f"roster: {exc}")
    agent_ids = [p.agent_id for p in roster]
    if len(set(agent_ids)) != len(agent_ids):
        problems.append("roster: duplicate agent ids")

    cache_path = cfg.path("cache")
    if mode == "cached" or (cache_path and cache_path.exists()):
        if cache_path is None or not cache_path.is_file():
            problems.append(f"config: cache file not found ({cache_path})")
        else:
            try:
                cache = load_cache(cache_path)
            except ValueError as exc:
                problems.append(f"cache: {exc}")
            else:
                for t, a in cache.missing([t.task_id for t in tasks], agent_ids):
                    problems.append(f"cache: missing pair {t}/{a}")
    if mode == "synthetic":
        syn_path = cfg.path("synthetic")
        if syn_path is None or not syn_path.is_file():
            problems.append(f"config: synthetic spec not found ({syn_path})")
        else:
            specs = load_synthetic(syn_path)
            problems += [f"synthetic: no spec for agent {a}" for a in agent_ids if a not in specs]
    if mode == "live":
        live_agents = cfg.data.get("live", {}).get("agents", {})
        problems += [f"live: no endpoint for agent {a}" for a in agent_ids if a not in live_agents]

    flows_path = cfg.path("flows")
    if flows_path and flows_path.is_file():
        known = {t.task_id for t in tasks}
        for f in load_flows(flows_path):
            problems += [f"flows: {f.flow_id} references unknown task {t}" for t in f.task_ids if t not in known]

    for spec in cfg.data.get("allocators", []):
        try:
            make_allocator(spec)
        except (ConfigError, KeyError, ValueError) as exc:
            problems.append(f"allocator {spec.get('tag', spec.get('strategy'))}: {exc}")
    try:
        cfg.run_config()
    except (TypeError, ValueError) as exc:
        problems.append(f"run: {exc}")

    problems += verify_assets()
    return (EXIT_INVALID if problems else EXIT_OK), problems


# --- build-flows -----------------------------------------------------------


def cmd_build_flows(cfg: Config) -> tuple[int, list[str]]:
    fb = cfg.data.get("flowbuilder", {})
    cache = load_cache(cfg.path("cache"))
    roster = [p.agent_id for p in cfg.roster()]
    pool_path = cfg.path("pool")
    task_ids = sorted(t.task_id for t in load_pool(pool_path)) if pool_path and pool_path.is_file() else None
    try:
        summary, matrix = build_flows(
            cache,
            roster,
            k=fb.get("k"),
            flow_len=int(fb.get("flow_len", 50)),
            seed=int(fb.get("seed", 0)),
            target_flows=int(fb.get("target_flows", 63)),
            mode=fb.get("mode", "similarity"),
            task_ids=task_ids,
        )
    except (IncompleteCache, InvalidInput, EmptyOutput) as exc:
        return EXIT_INVALID, [f"build-flows: {exc}"]
    flows_path = cfg.path("flows") or cfg.workdir / "flows.json"
    flows_path.parent.mkdir(parents=True, exist_ok=True)
    write_flows(summary.flows, flows_path)
    if fb.get("dump_matrix"):
        matrix.to_csv(flows_path.with_name("similarity.csv"))
    return EXIT_OK, summary.lines() + [f"written: {flows_path}"]


# --- run -------------------------------------------------------------------


def cmd_run(cfg: Config) -> tuple[int, list[str]]:
    tasks = {t.task_id: t for t in load_pool(cfg.path("pool"))}
    profiles = cfg.roster()
    flows = load_flows(cfg.path("flows"))
    client = cfg.client()
    backend = cfg.backend(client)
    base = cfg.run_config()
    batch_digest = config_digest(base, profiles, backend.mode, extra=cfg.backend_fingerprint())
    specs = cfg.data.get("allocators", [])
    if not specs:
        return EXIT_INVALID, ["run: no allocators configured"]

    jobs = []
    for spec in specs:
        tag = spec.get("tag", spec.get("strategy"))
        for flow in flows:
            seed = derive_seed(base.seed, tag, flow.flow_id)
            jobs.append((spec, tag, flow, seed))

    def work(job):
        spec, tag, flow, seed = job
        allocator = make_allocator(spec, client=client, history_window=base.history_window)
        rc = cfg.run_config(flow_id=flow.flow_id, seed=seed)
        return run_flow(flow, tasks, allocator, backend, profiles, rc, run_id=f"{tag}__{flow.flow_id}", digest_value=batch_digest)

    workers = max(1, int(cfg.data.get("workers", 1)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(work, jobs))

    traj_dir = cfg.out / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for traj in sorted(results, key=lambda t: t.run_id):
        path = traj_dir / f"{traj.run_id}.jsonl"
        traj.save(path)
        runs.append(
            {
                "run_id": traj.run_id,
                "allocator_tag": traj.allocator_tag,
                "flow_id": traj.flow_id,
                "seed": traj.seed,
                "path": str(path.relative_to(cfg.out)),
                "status": traj.status,
                "abort_reason": traj.abort_reason,
                "config_digest": traj.config_digest,
                "n_events": len(traj.events),
            }
        )
    manifest = {
        "batch_id": cfg.batch,
        "config_digest": batch_digest,
        "backend": backend.mode,
        "live": backend.mode == "live",
        "reproducible": backend.mode != "live",
        "runs": runs,
    }
    (cfg.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    aborted = [r for r in runs if r["status"] == "aborted"]
    lines = [f"runs: {len(runs)}", f"aborted: {len(aborted)}", f"manifest: {cfg.out / 'manifest.json'}"]
    lines += [f"aborted {r['run_id']}: {r['abort_reason']}" for r in aborted]
    return (EXIT_ABORT if aborted else EXIT_OK), lines


# --- report ----------------------------------------------------------------


def cmd_report(cfg: Config, force: bool = False) -> tuple[int, list[str]]:
    from .core import Trajectory

    manifest_path = cfg.out / "manifest.json"
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        paths = [cfg.out / r["path"] for r in manifest["runs"]]
    else:
        paths = sorted((cfg.out / "trajectories").glob("*.jsonl"))
    trajs = [Trajectory.load(p) for p in paths]
    if not trajs:
        return EXIT_INVALID, ["report: no trajectories found"]
    digests = sorted({t.config_digest for t in trajs})
    if len(digests) > 1 and not force:
        return EXIT_INVALID, [f"report: mixed config digests {', '.join(d[:12] for d in digests)}; use --force"]
    complete = [t for t in trajs if not t.aborted]
    if not complete:
        return EXIT_ABORT, ["report: every run aborted"]
    rows = leaderboard(group_by_allocator(complete))
    profiles = cfg.roster()
    bias = [(t, profile_bias(t, profiles)) for t in sorted(complete, key=lambda t: t.run_id)]

    out = cfg.out
    b = cfg.batch
    files = {
        f"leaderboard_{b}.md": leaderboard_markdown(rows),
        f"leaderboard_{b}.csv": leaderboard_csv(rows),
        f"scatter_{b}.csv": scatter_export(rows),
        f"bias_{b}.csv": bias_csv(bias),
    }
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
    lines = [f"trajectories: {len(trajs)} ({len(trajs) - len(complete)} aborted, excluded)"]
    lines += leaderboard_markdown(rows).splitlines()
    lines += [f"written: {out / n}" for n in files]
    return EXIT_OK, lines


# --- argparse --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swfbench", description="Social welfare allocation benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--workdir", default=".", help="base directory for every relative path")
    parser.add_argument("--config", default="config.json", help="JSON config (relative to --workdir)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", help="check config, cache completeness and templates")

    bf = sub.add_parser("build-flows", help="cluster the graded pool into task flows")
    bf.add_argument("--k", type=int)
    bf.add_argument("--flow-len", dest="flow_len", type=int)
    bf.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="simulate every (allocator, flow) pair")
    run.add_argument("--backend", choices=BACKENDS)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--batch-id", dest="batch_id")
    run.add_argument("--output-dir", dest="output_dir")

    rep = sub.add_parser("report", help="leaderboard, scatter and profile-bias files")
    rep.add_argument("--batch-id", dest="batch_id")
    rep.add_argument("--output-dir", dest="output_dir")
    rep.add_argument("--force", action="store_true", help="accept mixed config digests")

    demo = sub.add_parser("demo", help="write a synthetic workdir with config.json")
    demo.add_argument("--tasks-per-block", type=int, default=100)
    demo.add_argument("--blocks", type=int, default=3)
    demo.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "demo":
        from .synthetic import write_demo

        path = write_demo(args.workdir, tasks_per_block=args.tasks_per_block, n_blocks=args.blocks, seed=args.seed)
        print(f"written: {path}")
        return EXIT_OK
    try:
        cfg = Config.load(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.command == "validate":
            code, lines = cmd_validate(cfg)
        elif args.command == "build-flows":
            code, lines = cmd_build_flows(cfg)
        elif args.command == "run":
            code, lines = cmd_run(cfg)
        else:
            code, lines = cmd_report(cfg, force=args.force)
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    stream = sys.stdout if code == EXIT_OK else sys.stderr
    for line in lines:
        print(line, file=stream)
    return code


if __name__ == "__main__":
    sys.exit(main())
