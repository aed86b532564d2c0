"""Random-walk context generation.

Each node starts ``r`` first-order walks of ``l`` nodes. Every walk position is
a candidate window of ``c`` slots centred on that position; slots falling off
either end of the walk are padding (``PAD``). Position 0 (the start node) is
always kept, the rest are subsampled by token frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import AttributedGraph

PAD = -1

# stream tags mixed into SeedSequence entropy so walk and subsample draws never overlap
_WALK_STREAM = 0
_SUBSAMPLE_STREAM = 1


@dataclass
class WalkConfig:
    walks_per_node: int = 1
    walk_length: int = 80
    window: int = 5
    subsample_t: float = 1e-5
    subsample_sense: str = "keep"
    seed: int = 0

    def validate(self) -> None:
        if self.walks_per_node < 1 or self.walk_length < 1:
            raise ValueError("walks_per_node and walk_length must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window size must be odd and positive, got {self.window}")
        if self.window > self.walk_length:
            raise ValueError("window size cannot exceed walk length")
        if not self.subsample_t > 0:
            raise ValueError("subsampling threshold must be positive")
        if self.subsample_sense not in ("keep", "discard"):
            raise ValueError("subsample_sense must be 'keep' or 'discard'")


def _walk_rng(seed: int, start: int, rep: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), start, rep, stream]))


def generate_walks(graph: AttributedGraph, config: WalkConfig) -> list[np.ndarray]:
    """``r * n`` walks, ordered by start node then repeat index.

    Walk ``v * r + k`` starts at node ``v``; its randomness comes only from
    ``(seed, v, k)``, so walks can be produced in any order with the same result.
    """
    config.validate()
    adj = graph.adjacency
    indptr, indices = adj.indptr, adj.indices
    cumw = np.empty_like(adj.data)
    for v in range(graph.n):
        lo, hi = indptr[v], indptr[v + 1]
        cumw[lo:hi] = np.cumsum(adj.data[lo:hi])
    r, length = config.walks_per_node, config.walk_length
    walks = []
    for v in range(graph.n):
        for k in range(r):
            rng = _walk_rng(config.seed, v, k, _WALK_STREAM)
            u = rng.random(length - 1)
            walk = [v]
            cur = v
            for step in range(length - 1):
                lo, hi = indptr[cur], indptr[cur + 1]
                if hi == lo:
                    break
                cw = cumw[lo:hi]
                j = np.searchsorted(cw, u[step] * cw[-1], side="right")
                cur = int(indices[lo + min(j, hi - lo - 1)])
                walk.append(cur)
            walks.append(np.array(walk, dtype=np.int64))
    return walks


def token_frequencies(walks: Sequence[np.ndarray], n: int | None = None) -> np.ndarray:
    """Relative frequency of every node over all walk tokens."""
    if not walks:
        raise ValueError("no walks")
    tokens = np.concatenate([np.asarray(w, dtype=np.int64) for w in walks])
    counts = np.bincount(tokens, minlength=n or 0).astype(np.float64)
    return counts / counts.sum()


def keep_probability(f_v: float, t: float, is_start: bool = False, sense: str = "keep") -> float:
    """Probability that a window centred on a node with frequency ``f_v`` is kept.

    ``sense="keep"`` keeps frequent nodes with probability sqrt(t / f) (word2vec
    style); ``sense="discard"`` uses 1 - sqrt(t / f) itself as the keep rate.
    Start-of-walk windows are always kept.
    """
    if not f_v > 0:
        raise ValueError(f"token frequency must be positive, got {f_v}")
    if is_start:
        return 1.0
    ratio = math.sqrt(t / f_v)
    p = ratio if sense == "keep" else 1.0 - ratio
    return min(1.0, max(0.0, p))


@dataclass(eq=False)
class ContextCorpus:
    """Context windows grouped by midst node.

    ``windows[offsets[v]:offsets[v+1]]`` are the windows centred on ``v``; rows
    hold node indices with ``PAD`` (-1) for padding.
    """
    windows: np.ndarray      # (m, c) int64
    midst: np.ndarray        # (m,)
    walk_index: np.ndarray   # (m,)
    position: np.ndarray     # (m,)
    counts: np.ndarray       # (n,) windows per midst node
    token_freq: np.ndarray   # (n,)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def c(self) -> int:
        return self.windows.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])

    def windows_of(self, v: int) -> np.ndarray:
        off = self.offsets
        return self.windows[off[v]:off[v + 1]]

    def __len__(self) -> int:
        return len(self.windows)


def extract_contexts(walks: Sequence[np.ndarray], f: np.ndarray, config: WalkConfig,
                     n: int | None = None) -> ContextCorpus:
    config.validate()
    c = config.window
    half = c // 2
    n = len(f) if n is None else n
    f = np.asarray(f, dtype=np.float64)
    r = config.walks_per_node

    # keep probabilities per node, computed once
    with np.errstate(divide="ignore"):
        ratio = np.sqrt(config.subsample_t / np.where(f > 0, f, np.inf))
    p_keep = ratio if config.subsample_sense == "keep" else 1.0 - ratio
    p_keep = np.clip(p_keep, 0.0, 1.0)

    all_win, all_mid, all_walk, all_pos = [], [], [], []
    for wi, walk in enumerate(walks):
        walk = np.asarray(walk, dtype=np.int64)
        L = len(walk)
        if L == 0:
            continue
        start, rep = divmod(wi, r)
        rng = _walk_rng(config.seed, start, rep, _SUBSAMPLE_STREAM)
        u = rng.random(L)
        keep = u < p_keep[walk]
        keep[0] = True
        pos = np.flatnonzero(keep)
        padded = np.concatenate([np.full(half, PAD), walk, np.full(half, PAD)])
        idx = pos[:, None] + np.arange(c)[None, :]
        all_win.append(padded[idx])
        all_mid.append(walk[pos])
        all_walk.append(np.full(len(pos), wi, dtype=np.int64))
        all_pos.append(pos)
    if all_win:
        windows = np.concatenate(all_win)
        midst = np.concatenate(all_mid)
        walk_index = np.concatenate(all_walk)
        position = np.concatenate(all_pos)
    else:
        windows = np.empty((0, c), dtype=np.int64)
        midst = walk_index = position = np.empty(0, dtype=np.int64)
    order = np.argsort(midst, kind="stable")
    counts = np.bincount(midst, minlength=n)
    return ContextCorpus(windows[order], midst[order], walk_index[order], position[order],
                         counts, f)


def build_corpus(graph: AttributedGraph, config: WalkConfig) -> ContextCorpus:
    walks = generate_walks(graph, config)
    f = token_frequencies(walks, graph.n)
    return extract_contexts(walks, f, config, n=graph.n)


def dump_corpus(corpus: ContextCorpus, path) -> None:
    """One window per line: ``midst<TAB>slot0,slot1,...`` with PAD as -1."""
    with open(path, "w", encoding="utf-8") as fh:
        for m, row in zip(corpus.midst, corpus.windows):
            fh.write(f"{m}\t{','.join(str(int(s)) for s in row)}\n")


def read_corpus_dump(path) -> list[tuple[int, list[int]]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        m, slots = line.split("\t")
        out.append((int(m), [int(s) for s in slots.split(",")]))
    return out
