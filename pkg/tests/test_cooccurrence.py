import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from coane.cooccurrence import (CooccurrenceStats, NegativeSampler, build_cooccurrence, draw_negatives,
                                dump_stats, row_normalize, top_kp_neighbors)
from coane.graph import from_arrays
from coane.walks import PAD, ContextCorpus, WalkConfig, build_corpus, dump_corpus, read_corpus_dump

from conftest import random_graph
from oracles import recount_cooccurrence, sparse_to_dict


def corpus_from_windows(windows, n):
    windows = np.asarray(windows, dtype=np.int64)
    c = windows.shape[1]
    midst = windows[:, c // 2]
    order = np.argsort(midst, kind="stable")
    m = len(windows)
    return ContextCorpus(windows[order], midst[order], np.zeros(m, dtype=np.int64),
                         np.zeros(m, dtype=np.int64), np.bincount(midst, minlength=n), np.full(n, 1 / n))


def test_single_window():
    g = from_arrays([(0, 1)])
    stats = build_cooccurrence(corpus_from_windows([[PAD, 0, 1]], 2), g)
    assert sparse_to_dict(stats.D) == {(0, 1): 1.0}
    assert sparse_to_dict(stats.D1) == sparse_to_dict(stats.D)


def test_duplicate_neighbour_counted_twice():
    g = from_arrays([(0, 1), (1, 2)])
    stats = build_cooccurrence(corpus_from_windows([[0, 1, 0]], 3), g)
    assert stats.D[1, 0] == 2


def test_diagonal_excluded():
    g = from_arrays([(0, 1)])
    stats = build_cooccurrence(corpus_from_windows([[1, 0, 1], [0, 1, 0]], 2), g)
    assert stats.D.diagonal().sum() == 0
    assert stats.D[0, 1] == 2 and stats.D[1, 0] == 2


def _toy_stats(seed=3, variant="dn+d1"):
    g = random_graph(20, 0.15, seed, d=3)
    corpus = build_corpus(g, WalkConfig(walks_per_node=2, walk_length=12, window=5, subsample_t=5e-2, seed=seed))
    return g, corpus, build_cooccurrence(corpus, g, variant)


def test_brute_force_recount(tmp_path):
    g, corpus, stats = _toy_stats()
    dump_corpus(corpus, tmp_path / "c.txt")
    D, D1, DN, Dt, k_p, counts = recount_cooccurrence(read_corpus_dump(tmp_path / "c.txt"),
                                                      g.edges().tolist(), 5)
    assert sparse_to_dict(stats.D) == dict(D)
    assert sparse_to_dict(stats.D1) == D1
    assert sparse_to_dict(stats.DN) == DN
    assert sparse_to_dict(stats.Dtilde) == Dt
    assert stats.k_p == k_p


def test_variants():
    g, corpus, base = _toy_stats()
    for variant, expect in [("dn", base.DN), ("d1", base.D1), ("n(d+d1)", row_normalize(base.D + base.D1))]:
        s = build_cooccurrence(corpus, g, variant)
        assert abs(s.Dtilde - expect).max() < 1e-15
    with pytest.raises(ValueError):
        build_cooccurrence(corpus, g, "nope")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.sampled_from([3, 5, 7]))
def test_stats_invariants(seed, c):
    g = random_graph(10, 0.25, seed, d=2)
    corpus = build_corpus(g, WalkConfig(walks_per_node=2, walk_length=9, window=c, subsample_t=1e-2, seed=seed))
    stats = build_cooccurrence(corpus, g)
    D, D1, DN, Dt = stats.D, stats.D1, stats.DN, stats.Dtilde
    # row sums equal the non-PAD, non-centre slot count, minus the midst's own revisits
    centre = c // 2
    for v in range(g.n):
        w = corpus.windows_of(v)
        side = np.delete(w, centre, axis=1)
        expected = np.sum((side != PAD) & (side != v))
        assert D.getrow(v).sum() == expected
    assert (D1 > D).nnz == 0
    A = g.adjacency.tocsr()
    for (i, j), x in sparse_to_dict(D1).items():
        assert A[i, j] > 0 and x == D[i, j]
    sums = np.asarray(DN.sum(axis=1)).ravel()
    nz = np.asarray(D.sum(axis=1)).ravel() > 0
    assert np.all(np.abs(sums[nz] - 1) <= 1e-12)
    assert abs(Dt - (DN + D1)).max() == 0
    for (i, j), x in sparse_to_dict(D1).items():
        assert Dt[i, j] > DN[i, j]
    assert abs(stats.noise.sum() - 1) < 1e-12
    order = np.argsort(stats.context_counts)
    assert np.all(np.diff(stats.noise[order]) >= 0)
    assert stats.k_p == corpus.counts.max()


def test_top_kp_examples():
    Dt = sp.csr_matrix(np.array([[0, 0.9, 0.9, 0.1], [0.5, 0, 0.2, 0], [0, 0, 0, 0], [0, 0, 0, 0]]))
    stats = CooccurrenceStats(Dt, Dt, Dt, Dt, 2, np.ones(4, dtype=int), np.full(4, 0.25))
    assert top_kp_neighbors(stats, 0) == [(1, 0.9), (2, 0.9)]
    stats.k_p = 5
    assert top_kp_neighbors(stats, 1) == [(0, 0.5), (2, 0.2)]
    assert top_kp_neighbors(stats, 2) == []


def test_top_kp_vs_full_sort():
    g, corpus, stats = _toy_stats(seed=8)
    stats.k_p = 3
    stats._top = None
    dense = stats.Dtilde.toarray()
    top = stats.top_matrix().toarray()
    for i in range(g.n):
        row = [(j, dense[i, j]) for j in range(g.n) if dense[i, j] > 0 and j != i]
        row.sort(key=lambda t: (-t[1], t[0]))
        assert top_kp_neighbors(stats, i) == [(j, float(w)) for j, w in row[:3]]
        assert {j for j in np.flatnonzero(top[i])} == {j for j, _ in row[:3]}


def _uniform_stats(n, context):
    D = sp.lil_matrix((n, n))
    for i, members in context.items():
        for j in members:
            D[i, j] = 1
    D = sp.csr_matrix(D)
    return CooccurrenceStats(D, D, D, D, 1, np.ones(n, dtype=int), np.full(n, 1 / n))


def test_sampler_only_valid_candidate():
    stats = _uniform_stats(3, {0: [1]})
    neg, short = draw_negatives(stats, 0, 1, "pre", rng=np.random.default_rng(0))
    assert neg.tolist() == [2] and not short


def test_sampler_first_k_rule():
    stats = _uniform_stats(3, {})
    s = NegativeSampler(stats, 2, "pre", pool=np.array([1, 2, 1, 2, 1, 2]))
    neg, short = s.draw(0)
    assert neg.tolist() == [1, 2] and not short
    assert s.cursor == 2


def test_sampler_short_list():
    stats = _uniform_stats(3, {0: [1, 2]})
    s = NegativeSampler(stats, 2, "pre", pool=np.array([1, 2, 0, 1]))
    neg, short = s.draw(0)
    assert len(neg) == 0 and short and s.short_lists == 1
    b = NegativeSampler(stats, 2, "batch")
    neg, short = b.draw(0, batch=np.array([0, 1, 2]), rng=np.random.default_rng(0))
    assert len(neg) == 0 and short


def test_sampler_k_too_large():
    stats = _uniform_stats(3, {})
    with pytest.raises(ValueError, match="other nodes"):
        NegativeSampler(stats, 3, "batch")


def _tv_to_restricted(stats, target, draws, candidates):
    valid = np.array([v for v in candidates if v != target and v not in set(stats.context_members(target))])
    p = np.zeros(stats.n)
    p[valid] = stats.noise[valid]
    p /= p.sum()
    q = np.bincount(draws, minlength=stats.n) / len(draws)
    return 0.5 * np.abs(p - q).sum()


@pytest.mark.parametrize("mode", ["pre", "batch"])
def test_negative_marginal_total_variation(mode):
    g, corpus, stats = _toy_stats(seed=21)
    target = 4
    rng = np.random.default_rng(123)
    batch = np.arange(g.n)
    s = NegativeSampler(stats, 5, mode, seed=1, pool_factor=600)
    draws = []
    while len(draws) < 50_000:
        neg, _ = s.draw(target, batch=batch, rng=rng)
        draws.extend(neg.tolist())
    draws = np.array(draws[:50_000])
    assert target not in draws
    assert not np.isin(draws, stats.context_members(target)).any()
    assert _tv_to_restricted(stats, target, draws, batch) < 0.02


def test_dump_stats(tmp_path):
    g, corpus, stats = _toy_stats()
    dump_stats(stats, tmp_path / "s.txt")
    lines = (tmp_path / "s.txt").read_text().splitlines()
    assert lines[0] == f"# k_p={stats.k_p} n={g.n} variant=dn+d1"
    parsed = {(int(a), int(b)): (int(x), int(y)) for a, b, x, y in (l.split() for l in lines[1:])}
    assert {k: float(v[0]) for k, v in parsed.items()} == sparse_to_dict(stats.D)
    assert {k: float(v[1]) for k, v in parsed.items() if v[1]} == sparse_to_dict(stats.D1)
