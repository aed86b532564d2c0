"""Co-occurrence statistics and negative sampling.

``D[i, j]`` counts how often node ``j`` fills a non-centre slot of a window
centred on ``i``. ``D1`` keeps only the entries on real edges, ``DN`` is ``D``
row-normalised and the positive-loss targets are ``Dtilde = DN + D1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph
from .walks import PAD, ContextCorpus

TARGET_VARIANTS = ("dn+d1", "n(d+d1)", "dn", "d1")


def row_normalize(M: sp.csr_matrix) -> sp.csr_matrix:
    out = sp.csr_matrix(M, dtype=np.float64, copy=True)
    out.sort_indices()
    sums = np.asarray(out.sum(axis=1)).ravel()
    # divide entry by entry (not by a reciprocal) so each value is the correctly rounded ratio
    rows = np.repeat(np.arange(out.shape[0]), np.diff(out.indptr))
    out.data = out.data / sums[rows]
    out.eliminate_zeros()
    return out


@dataclass(eq=False)
class CooccurrenceStats:
    D: sp.csr_matrix
    D1: sp.csr_matrix
    DN: sp.csr_matrix
    Dtilde: sp.csr_matrix
    k_p: int
    context_counts: np.ndarray
    noise: np.ndarray
    variant: str = "dn+d1"
    _top: Optional[sp.csr_matrix] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.D.shape[0]

    def context_members(self, v: int) -> np.ndarray:
        """Distinct non-PAD nodes seen in windows centred on ``v`` (never ``v`` itself)."""
        return self.D.indices[self.D.indptr[v]:self.D.indptr[v + 1]]

    def top_matrix(self) -> sp.csr_matrix:
        """``Dtilde`` restricted to each row's top-k_p entries."""
        if self._top is None:
            rows, cols, vals = [], [], []
            M = self.Dtilde
            for i in range(self.n):
                lo, hi = M.indptr[i], M.indptr[i + 1]
                j, w = M.indices[lo:hi], M.data[lo:hi]
                if hi - lo > self.k_p:
                    order = np.lexsort((j, -w))[: self.k_p]
                    j, w = j[order], w[order]
                rows.append(np.full(len(j), i))
                cols.append(j)
                vals.append(w)
            top = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=M.shape) if rows else sp.csr_matrix(M.shape)
            top.sort_indices()
            self._top = top
        return self._top


def build_cooccurrence(corpus: ContextCorpus, graph: AttributedGraph,
                       variant: str = "dn+d1") -> CooccurrenceStats:
    if variant not in TARGET_VARIANTS:
        raise ValueError(f"unknown target variant {variant!r}; choose from {TARGET_VARIANTS}")
    n = graph.n
    c = corpus.c
    centre = c // 2
    side = np.delete(np.arange(c), centre)
    rows = np.repeat(corpus.midst, len(side))
    cols = corpus.windows[:, side].ravel()
    ok = (cols != PAD) & (cols != rows)
    D = sp.csr_matrix((np.ones(int(ok.sum())), (rows[ok], cols[ok])), shape=(n, n))
    D.sum_duplicates()
    D.sort_indices()

    D1 = sp.csr_matrix(D.multiply(graph.adjacency > 0))
    D1.eliminate_zeros()
    D1.sort_indices()
    DN = row_normalize(D)
    if variant == "dn+d1":
        Dt = DN + D1
    elif variant == "n(d+d1)":
        Dt = row_normalize(D + D1)
    elif variant == "dn":
        Dt = DN.copy()
    else:
        Dt = D1.astype(np.float64)
    Dt = sp.csr_matrix(Dt)
    Dt.eliminate_zeros()
    Dt.sort_indices()

    counts = np.asarray(corpus.counts, dtype=np.int64)
    total = counts.sum()
    noise = counts / total if total else np.zeros(n)
    k_p = int(counts.max()) if len(counts) else 0
    return CooccurrenceStats(D, D1, DN, Dt, k_p, counts, noise, variant)


def top_kp_neighbors(stats: CooccurrenceStats, i: int) -> list[tuple[int, float]]:
    """Up to k_p (j, Dtilde_ij) pairs, largest first, ties by smaller j."""
    M = stats.Dtilde
    lo, hi = M.indptr[i], M.indptr[i + 1]
    j, w = M.indices[lo:hi], M.data[lo:hi]
    keep = (w > 0) & (j != i)
    j, w = j[keep], w[keep]
    order = np.lexsort((j, -w))[: stats.k_p]
    return [(int(j[o]), float(w[o])) for o in order]


class NegativeSampler:
    """Draws negatives from the contextual noise distribution ``P_V``.

    ``mode="pre"`` scans a pool drawn once from ``P_V`` with a moving cursor;
    ``mode="batch"`` samples from ``P_V`` restricted to the current batch.
    Either way a target never receives itself or a member of its context.
    """

    def __init__(self, stats: CooccurrenceStats, k: int, mode: str = "batch",
                 seed: int = 0, pool_factor: int = 10, pool: Optional[np.ndarray] = None):
        if mode not in ("pre", "batch"):
            raise ValueError(f"sampling mode must be 'pre' or 'batch', got {mode!r}")
        if k < 1:
            raise ValueError("k must be at least 1")
        if k > stats.n - 1:
            raise ValueError(f"k={k} negatives requested but only {stats.n - 1} other nodes exist")
        self.stats = stats
        self.k = k
        self.mode = mode
        self.cursor = 0
        self.short_lists = 0
        if pool is not None:
            self.pool = np.asarray(pool, dtype=np.int64)
        elif mode == "pre":
            rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 7]))
            size = max(pool_factor * k * stats.n, k)
            self.pool = rng.choice(stats.n, size=size, p=stats.noise)
        else:
            self.pool = None

    def _invalid(self, target: int, cand: np.ndarray) -> np.ndarray:
        return (cand == target) | np.isin(cand, self.stats.context_members(target))

    def draw(self, target: int, batch=None, rng: Optional[np.random.Generator] = None):
        """Return ``(negatives, short)``; ``short`` is True when fewer than k were found."""
        if self.mode == "pre":
            out = self._draw_pre(target)
        else:
            if batch is None or rng is None:
                raise ValueError("batch-sampling needs the batch node set and an rng")
            out = self._draw_batch(target, np.asarray(batch, dtype=np.int64), rng)
        short = len(out) < self.k
        if short:
            self.short_lists += 1
        return out, short

    def _draw_pre(self, target: int) -> np.ndarray:
        pool, k = self.pool, self.k
        size = len(pool)
        found: list[np.ndarray] = []
        have = 0
        scanned = 0
        chunk = max(4 * k, 64)
        while have < k and scanned < size:
            take = min(chunk, size - scanned)
            idx = (self.cursor + np.arange(take)) % size
            cand = pool[idx]
            good = np.flatnonzero(~self._invalid(target, cand))
            if have + len(good) >= k:
                good = good[: k - have]
                used = int(good[-1]) + 1
            else:
                used = take
            found.append(cand[good])
            have += len(good)
            self.cursor = (self.cursor + used) % size
            scanned += used
        return np.concatenate(found) if found else np.empty(0, dtype=np.int64)

    def _draw_batch(self, target: int, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cand = np.unique(batch)
        cand = cand[~self._invalid(target, cand)]
        if len(cand) == 0:
            return np.empty(0, dtype=np.int64)
        w = self.stats.noise[cand]
        if w.sum() <= 0:
            return np.empty(0, dtype=np.int64)
        return rng.choice(cand, size=self.k, p=w / w.sum())


def draw_negatives(stats: CooccurrenceStats, target: int, k: int, mode: str = "batch",
                   batch=None, rng: Optional[np.random.Generator] = None,
                   pool: Optional[np.ndarray] = None):
    """One-shot version of :meth:`NegativeSampler.draw`."""
    if mode == "pre" and pool is None:
        if rng is None:
            raise ValueError("pre-sampling needs a pool or an rng to draw one")
        pool = rng.choice(stats.n, size=10 * k * stats.n, p=stats.noise)
    sampler = NegativeSampler(stats, k, mode, pool=pool)
    return sampler.draw(target, batch=batch, rng=rng)


def dump_stats(stats: CooccurrenceStats, path) -> None:
    """``i j D_ij D1_ij`` lines after a ``# k_p=...`` header."""
    D = sp.coo_matrix(stats.D)
    order = np.lexsort((D.col, D.row))
    rows, cols, vals = D.row[order], D.col[order], D.data[order]
    d1 = np.asarray(stats.D1[rows, cols]).ravel() if len(rows) else []
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# k_p={stats.k_p} n={stats.n} variant={stats.variant}\n")
        for i, j, x, y in zip(rows, cols, vals, d1):
            fh.write(f"{i} {j} {int(x)} {int(y)}\n")
