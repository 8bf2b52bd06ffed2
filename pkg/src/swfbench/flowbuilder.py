"""Build dilemma task flows from a graded pool.

Each task is fingerprinted by the vector of rewards every recipient earned on
it. Tasks are compared by tie-corrected Spearman correlation of these vectors,
clustered with K-means over their similarity rows, and cut into fixed-length
flows so that the agent performance hierarchy stays stable within a flow.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ClusterMeta, TaskFlow
from .metrics import midranks
from .oracle import ResultCache

log = logging.getLogger(__name__)


class IncompleteCache(KeyError):
    def __init__(self, pairs: Sequence[tuple[str, str]]):
        self.pairs = list(pairs)
        super().__init__(self.__str__())

    def __str__(self):
        shown = ", ".join(f"{t}/{a}" for t, a in self.pairs[:5])
        more = f" (+{len(self.pairs) - 5} more)" if len(self.pairs) > 5 else ""
        return f"cache lacks {len(self.pairs)} pair(s): {shown}{more}"


class InvalidInput(ValueError):
    pass


class EmptyOutput(RuntimeError):
    pass


@dataclass(frozen=True)
class OrientationVector:
    task_id: str
    rewards: tuple[float, ...]


@dataclass(frozen=True)
class SimilarityMatrix:
    task_ids: tuple[str, ...]
    values: np.ndarray = field(compare=False)
    degenerate: tuple[bool, ...]

    def index(self, task_id: str) -> int:
        return self.task_ids.index(task_id)

    def mean_offdiag(self, idx: Sequence[int] | None = None) -> float:
        idx = np.arange(len(self.task_ids)) if idx is None else np.asarray(idx)
        m = len(idx)
        if m < 2:
            return 0.0
        block = self.values[np.ix_(idx, idx)]
        return float((block.sum() - np.trace(block)) / (m * (m - 1)))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task_id", *self.task_ids])
            for tid, row in zip(self.task_ids, self.values):
                w.writerow([tid, *(f"{v:.6f}" for v in row)])


@dataclass(frozen=True)
class ClusterAssignment:
    task_ids: tuple[str, ...]
    labels: tuple[int, ...]
    k: int
    excluded: tuple[str, ...] = ()
    objective_trace: tuple[float, ...] = ()
    iterations: int = 0

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {c: [] for c in range(self.k)}
        for tid, lab in zip(self.task_ids, self.labels):
            out[lab].append(tid)
        return out

    def sizes(self) -> list[int]:
        return [len(v) for v in self.members().values()]


def build_orientations(
    cache: ResultCache, roster: Sequence[str], task_ids: Sequence[str] | None = None
) -> list[OrientationVector]:
    task_ids = cache.task_ids() if task_ids is None else list(task_ids)
    missing = cache.missing(task_ids, roster)
    if missing:
        raise IncompleteCache(missing)
    return [
        OrientationVector(t, tuple(float(cache[(t, a)].reward) for a in roster)) for t in task_ids
    ]


def similarity_matrix(vectors: Sequence[OrientationVector]) -> SimilarityMatrix:
    """Pairwise tie-corrected Spearman; constant vectors get 0 everywhere."""
    if len(vectors) < 2:
        raise InvalidInput("need at least two orientation vectors")
    ranks = np.array([midranks(v.rewards) for v in vectors])
    ranks -= ranks.mean(axis=1, keepdims=True)
    norms = np.sqrt((ranks * ranks).sum(axis=1))
    degenerate = norms == 0
    z = np.divide(ranks, norms[:, None], out=np.zeros_like(ranks), where=~degenerate[:, None])
    sim = np.clip(z @ z.T, -1.0, 1.0)
    idx = np.flatnonzero(~degenerate)
    sim[idx, idx] = 1.0
    return SimilarityMatrix(tuple(v.task_id for v in vectors), sim, tuple(bool(d) for d in degenerate))


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = int(rng.integers(n))
        else:
            i = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            i = min(i, n - 1)
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def _sqdist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def kmeans(
    x: np.ndarray, k: int, seed: int, max_iter: int = 100, tol: float = 1e-6
) -> tuple[np.ndarray, np.ndarray, list[float], int]:
    """Lloyd iterations from k-means++ seeding.

    Returns labels, centroids, the objective after each assignment step and
    the number of iterations run. Empty clusters take the point farthest from
    its centroid (drawn from clusters with more than one member).
    """
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, k, rng)
    trace: list[float] = []
    labels = np.zeros(x.shape[0], dtype=np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        d = _sqdist(x, centroids)
        labels = d.argmin(axis=1)
        trace.append(float(d[np.arange(len(x)), labels].sum()))
        new = centroids.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = x[members].mean(axis=0)
        for c in range(k):
            if (labels == c).any():
                continue
            dist = ((x - new[labels]) ** 2).sum(axis=1)
            counts = np.bincount(labels, minlength=k)
            dist[counts[labels] <= 1] = -1.0
            far = int(dist.argmax())
            donor = labels[far]
            labels[far] = c
            new[c] = x[far]
            new[donor] = x[labels == donor].mean(axis=0)
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        if shift <= tol:
            break
    return labels, centroids, trace, it


def cluster_tasks(
    matrix: SimilarityMatrix,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    mode: str = "similarity",
    vectors: Sequence[OrientationVector] | None = None,
) -> ClusterAssignment:
    """K-means over non-degenerate tasks.

    ``mode="similarity"`` embeds each task as its row of the similarity matrix;
    ``mode="orientation"`` clusters the raw reward vectors instead.
    """
    keep = [i for i, d in enumerate(matrix.degenerate) if not d]
    if not 1 <= k <= len(keep):
        raise InvalidInput(f"k={k} outside [1, {len(keep)}] (non-degenerate tasks)")
    if mode == "similarity":
        feats = matrix.values[np.ix_(keep, keep)]
    elif mode == "orientation":
        if vectors is None:
            raise InvalidInput("orientation mode needs the orientation vectors")
        by_id = {v.task_id: v.rewards for v in vectors}
        feats = np.array([by_id[matrix.task_ids[i]] for i in keep], dtype=np.float64)
    else:
        raise InvalidInput(f"unknown clustering mode {mode!r}")
    labels, _, trace, iters = kmeans(feats, k, seed, max_iter=max_iter, tol=tol)
    excluded = tuple(t for t, d in zip(matrix.task_ids, matrix.degenerate) if d)
    return ClusterAssignment(
        task_ids=tuple(matrix.task_ids[i] for i in keep),
        labels=tuple(int(v) for v in labels),
        k=k,
        excluded=excluded,
        objective_trace=tuple(trace),
        iterations=iters,
    )


def assemble_flows(
    assignment: ClusterAssignment, matrix: SimilarityMatrix, flow_len: int = 50, seed: int = 0
) -> list[TaskFlow]:
    if flow_len < 1:
        raise InvalidInput("flow_len must be positive")
    rng = np.random.default_rng(seed)
    pool_mean = matrix.mean_offdiag([i for i, d in enumerate(matrix.degenerate) if not d])
    flows = []
    for c, members in assignment.members().items():
        if len(members) < flow_len:
            if members:
                warnings.warn(f"cluster {c} has {len(members)} tasks (< {flow_len}); skipped", stacklevel=2)
            continue
        order = rng.permutation(len(members))
        for j in range(len(members) // flow_len):
            chosen = [members[i] for i in order[j * flow_len : (j + 1) * flow_len]]
            intra = matrix.mean_offdiag([matrix.index(t) for t in chosen])
            if intra < pool_mean:
                warnings.warn(f"flow {c}-{j} is less coherent than the pool ({intra:.3f} < {pool_mean:.3f})", stacklevel=2)
            flows.append(
                TaskFlow(f"flow-c{c:02d}-{j:02d}", tuple(chosen), ClusterMeta(intra, len(members)))
            )
    if not flows:
        raise EmptyOutput(f"no cluster holds {flow_len} or more tasks")
    return flows


def flow_count(sizes: Sequence[int], flow_len: int) -> int:
    return sum(s // flow_len for s in sizes)


def cohesion(assignment: ClusterAssignment, matrix: SimilarityMatrix) -> float:
    """Size-weighted mean intra-cluster similarity."""
    total = sum(assignment.sizes())
    out = 0.0
    for members in assignment.members().values():
        if len(members) > 1:
            out += len(members) * matrix.mean_offdiag([matrix.index(t) for t in members])
    return out / total if total else 0.0


def choose_k(
    matrix: SimilarityMatrix, flow_len: int, target_flows: int, seed: int, k_max: int | None = None, **kw
) -> tuple[int, ClusterAssignment]:
    """The k whose clustering yields a flow count closest to ``target_flows``.

    Ties go to the more cohesive clustering, then to the smaller k.
    """
    n = sum(not d for d in matrix.degenerate)
    if n < 1:
        raise InvalidInput("every task is degenerate")
    k_max = min(n, k_max or max(1, math.ceil(2 * n / flow_len)))
    best = None
    for k in range(1, k_max + 1):
        a = cluster_tasks(matrix, k, seed, **kw)
        key = (abs(flow_count(a.sizes(), flow_len) - target_flows), -round(cohesion(a, matrix), 12), k)
        if best is None or key < best[0]:
            best = (key, k, a)
    return best[1], best[2]


@dataclass(frozen=True)
class BuildSummary:
    k: int
    cluster_sizes: tuple[int, ...]
    n_degenerate: int
    flows: tuple[TaskFlow, ...]
    pool_mean_sim: float

    @property
    def mean_intra_sim(self) -> float:
        if not self.flows:
            return 0.0
        return float(np.mean([f.cluster_meta.intra_sim for f in self.flows]))

    def lines(self) -> list[str]:
        return [
            f"clusters: {self.k}",
            f"cluster sizes: {', '.join(map(str, self.cluster_sizes))}",
            f"degenerate tasks excluded: {self.n_degenerate}",
            f"flows emitted: {len(self.flows)}",
            f"pool mean similarity: {self.pool_mean_sim:.4f}",
            f"mean intra-flow similarity: {self.mean_intra_sim:.4f}",
        ]


def build_flows(
    cache: ResultCache,
    roster: Sequence[str],
    k: int | None = None,
    flow_len: int = 50,
    seed: int = 0,
    target_flows: int = 63,
    mode: str = "similarity",
    task_ids: Sequence[str] | None = None,
) -> tuple[BuildSummary, SimilarityMatrix]:
    vectors = build_orientations(cache, roster, task_ids)
    matrix = similarity_matrix(vectors)
    kw = {"mode": mode, "vectors": vectors}
    if k is None:
        k, assignment = choose_k(matrix, flow_len, target_flows, seed, **kw)
    else:
        assignment = cluster_tasks(matrix, k, seed, **kw)
    flows = assemble_flows(assignment, matrix, flow_len, seed)
    keep = [i for i, d in enumerate(matrix.degenerate) if not d]
    summary = BuildSummary(
        k=k,
        cluster_sizes=tuple(assignment.sizes()),
        n_degenerate=len(assignment.excluded),
        flows=tuple(flows),
        pool_mean_sim=matrix.mean_offdiag(keep),
    )
    return summary, matrix
