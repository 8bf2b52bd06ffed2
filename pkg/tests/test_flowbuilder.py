import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from swfbench.core import write_flows
from swfbench.flowbuilder import (
    EmptyOutput,
    IncompleteCache,
    InvalidInput,
    OrientationVector,
    assemble_flows,
    build_flows,
    build_orientations,
    choose_k,
    cluster_tasks,
    kmeans,
    similarity_matrix,
)
from swfbench.oracle import CacheEntry, ResultCache
from swfbench.synthetic import block_pool


def same_partition(a, b):
    pairs = set(zip(a, b))
    return len(pairs) == len(set(a)) == len(set(b))


def pool_inputs(bp):
    return ResultCache(bp.cache), [p.agent_id for p in bp.roster], [t.task_id for t in bp.tasks]


def test_similarity_matches_scipy():
    rng = np.random.default_rng(0)
    vecs = [OrientationVector(f"t{i}", tuple(rng.integers(0, 2, 12).astype(float))) for i in range(15)]
    vecs.append(OrientationVector("flat", (1.0,) * 12))
    m = similarity_matrix(vecs)
    assert m.degenerate == (False,) * 15 + (True,)
    assert np.allclose(m.values, m.values.T)
    for i in range(15):
        assert m.values[i, i] == 1.0
        for j in range(15):
            if i != j:
                assert m.values[i, j] == pytest.approx(stats.spearmanr(vecs[i].rewards, vecs[j].rewards).statistic, abs=1e-12)
    assert not m.values[15].any()


def test_similarity_needs_two():
    with pytest.raises(InvalidInput):
        similarity_matrix([OrientationVector("a", (1.0, 0.0))])


def test_incomplete_cache_names_pairs():
    cache = ResultCache([CacheEntry("t1", "AAA", "", 1, 1.0), CacheEntry("t1", "BBB", "", 1, 0.0), CacheEntry("t2", "AAA", "", 1, 0.0)])
    with pytest.raises(IncompleteCache) as info:
        build_orientations(cache, ["AAA", "BBB"])
    assert info.value.pairs == [("t2", "BBB")]
    assert "t2/BBB" in str(info.value)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_kmeans_objective_non_increasing(seed, k):
    x = np.random.default_rng(seed).normal(size=(40, 5))
    labels, centroids, trace, iters = kmeans(x, k, seed)
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))
    assert 1 <= iters <= 100 and len(trace) == iters
    assert len(set(labels.tolist())) == k


def test_kmeans_is_seed_deterministic():
    x = np.random.default_rng(1).normal(size=(50, 4))
    a, b = kmeans(x, 4, 9), kmeans(x, 4, 9)
    assert (a[0] == b[0]).all() and a[2] == b[2]


def test_kmeans_fills_empty_clusters_from_duplicates():
    x = np.array([[0.0, 0.0]] * 6 + [[5.0, 5.0]] * 2)
    labels, _, _, _ = kmeans(x, 3, 0)
    assert sorted(np.bincount(labels, minlength=3).tolist())[0] >= 1


def test_kmeans_matches_reference_objective():
    sklearn = pytest.importorskip("sklearn.cluster")
    x = np.vstack([np.random.default_rng(s).normal(loc=3 * s, size=(30, 3)) for s in range(3)])
    labels, _, trace, _ = kmeans(x, 3, 0)
    ref = sklearn.KMeans(3, n_init=10, random_state=0).fit(x)
    assert same_partition(labels.tolist(), ref.labels_.tolist())
    assert trace[-1] == pytest.approx(ref.inertia_, rel=1e-9)


def test_cluster_tasks_recovers_clean_blocks(blocks):
    cache, roster, ids = pool_inputs(blocks)
    m = similarity_matrix(build_orientations(cache, roster, ids))
    a = cluster_tasks(m, 3, seed=0)
    assert same_partition(a.labels, [blocks.blocks[t] for t in a.task_ids])
    assert a.sizes() == [20, 20, 20]


def test_orientation_mode(blocks):
    cache, roster, ids = pool_inputs(blocks)
    vecs = build_orientations(cache, roster, ids)
    a = cluster_tasks(similarity_matrix(vecs), 3, 0, mode="orientation", vectors=vecs)
    assert same_partition(a.labels, [blocks.blocks[t] for t in a.task_ids])
    with pytest.raises(InvalidInput):
        cluster_tasks(similarity_matrix(vecs), 3, 0, mode="orientation")
    with pytest.raises(InvalidInput):
        cluster_tasks(similarity_matrix(vecs), 99, 0)


def test_degenerate_tasks_are_excluded():
    bp = block_pool(2, 10, 6, seed=0)
    cache = list(bp.cache) + [CacheEntry("flat", p.agent_id, "", 5, 1.0) for p in bp.roster]
    roster = [p.agent_id for p in bp.roster]
    summary, matrix = build_flows(ResultCache(cache), roster, k=2, flow_len=10)
    assert summary.n_degenerate == 1
    assert all("flat" not in f.task_ids for f in summary.flows)


def test_flows_are_coherent_and_sized(blocks):
    cache, roster, ids = pool_inputs(blocks)
    summary, m = build_flows(cache, roster, k=3, flow_len=10, seed=1)
    assert len(summary.flows) == 6
    for f in summary.flows:
        f.check_length(10)
        assert f.cluster_meta.intra_sim > summary.pool_mean_sim
        assert len({blocks.blocks[t] for t in f.task_ids}) == 1
    assert summary.lines()[0] == "clusters: 3"


def test_pool_smaller_than_flow_len_is_empty_output(blocks):
    cache, roster, ids = pool_inputs(blocks)
    with pytest.raises(EmptyOutput), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        build_flows(cache, roster, k=3, flow_len=50)


def test_build_flows_deterministic(blocks, tmp_path):
    cache, roster, ids = pool_inputs(block_pool(3, 20, 12, noise=0.05, seed=4))
    for name in ("a.json", "b.json"):
        summary, _ = build_flows(cache, roster, k=3, flow_len=10, seed=5)
        write_flows(summary.flows, tmp_path / name)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_choose_k_targets_flow_count(blocks):
    cache, roster, ids = pool_inputs(blocks)
    m = similarity_matrix(build_orientations(cache, roster, ids))
    k, a = choose_k(m, flow_len=20, target_flows=3, seed=0)
    assert k == 3 and a.sizes() == [20, 20, 20]


def test_incoherent_flow_warns():
    bp = block_pool(3, 20, 12, seed=0)
    cache, roster, ids = pool_inputs(bp)
    m = similarity_matrix(build_orientations(cache, roster, ids))
    a = cluster_tasks(m, 1, 0)
    with pytest.warns(UserWarning, match="less coherent"):
        assemble_flows(a, m, flow_len=6, seed=0)
