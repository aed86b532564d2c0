"""Preprocessing, the batch training loop and checkpoints."""

from __future__ import annotations

import io
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .config import TrainConfig, parse_config_text
from .cooccurrence import CooccurrenceStats, NegativeSampler, build_cooccurrence
from .encoder import CoaneModel, ContextAggregator, init_parameters
from .graph import AttributedGraph
from .objective import Adam, LossBreakdown, NonFiniteError, total_loss_and_gradients
from .walks import ContextCorpus, build_corpus

log = logging.getLogger(__name__)

# graphs sparser than this use batch-sampling by default
SPARSE_DENSITY = 0.005


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def resolve_sampling_mode(graph: AttributedGraph, mode: str) -> str:
    if mode != "auto":
        return mode
    return "batch" if graph.density < SPARSE_DENSITY else "pre"


@dataclass(eq=False)
class Prepared:
    corpus: ContextCorpus
    stats: CooccurrenceStats
    aggregator: ContextAggregator
    sampler: Optional[NegativeSampler]   # None when the graph has a single node
    sampling_mode: str

    @property
    def targets(self) -> sp.csr_matrix:
        return self.stats.top_matrix()


def preprocess(graph: AttributedGraph, config: TrainConfig) -> Prepared:
    config.validate()
    corpus = build_corpus(graph, config.walk_config())
    stats = build_cooccurrence(corpus, graph, config.target_variant)
    agg = ContextAggregator(corpus, graph.X)
    mode = resolve_sampling_mode(graph, config.sampling_mode)
    k = min(config.negatives, graph.n - 1)
    sampler = NegativeSampler(stats, k, mode, seed=config.seed, pool_factor=config.pool_factor) if k > 0 else None
    return Prepared(corpus, stats, agg, sampler, mode)


@dataclass(eq=False)
class TrainState:
    model: CoaneModel
    adam: Adam
    epoch: int = 0                                      # completed epochs
    history: list = field(default_factory=list)         # l_obj per step
    epoch_stats: list = field(default_factory=list)     # (l_pos, l_neg, l_att, l_obj) epoch means
    best: float = float("inf")
    bad_epochs: int = 0


@dataclass(eq=False)
class TrainRun:
    model: CoaneModel
    embeddings: np.ndarray
    history: list
    epoch_stats: list
    telemetry: list
    elapsed: float
    config: TrainConfig
    stopped_early: bool
    state: TrainState


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 101, epoch]))


def new_state(graph: AttributedGraph, config: TrainConfig, prep: Prepared) -> TrainState:
    model = init_parameters(graph.d, config.embedding_dim, config.window, config.h1, config.h2,
                            config.seed, n=graph.n)
    # start from encoder outputs rather than zeros so stale rows carry signal
    model.Z[:] = prep.aggregator.encode(model.theta)
    adam = Adam(config.learning_rate, config.beta1, config.beta2, config.eps, config.grad_clip or None)
    adam.init_state(model.tensors())
    return TrainState(model, adam)


def train_step(batch: np.ndarray, state: TrainState, graph: AttributedGraph, prep: Prepared,
               config: TrainConfig, rng: np.random.Generator) -> LossBreakdown:
    negatives = []
    shorts = 0
    if config.neg_strength > 0 and prep.sampler is not None:
        for v in batch:
            neg, short = prep.sampler.draw(int(v), batch=batch, rng=rng)
            negatives.append(neg)
            shorts += short
    else:
        negatives = [np.empty(0, dtype=np.int64)] * len(batch)
    Xb = graph.attribute_rows(batch)
    out = total_loss_and_gradients(batch, state.model, prep.aggregator, prep.targets, Xb, negatives,
                                   config.neg_strength, config.attr_weight, config.pos_weight)
    out.short_lists = shorts
    if not np.isfinite(out.l_obj):
        raise TrainingDiverged(f"non-finite loss at epoch {state.epoch + 1}: {out}")
    try:
        state.adam.step(state.model.tensors(), out.grads)
    except NonFiniteError as exc:
        raise TrainingDiverged(str(exc)) from exc
    return out


def train(graph: AttributedGraph, config: TrainConfig, prep: Optional[Prepared] = None,
          state: Optional[TrainState] = None,
          on_epoch_end: Optional[Callable[[int, TrainState, Prepared], None]] = None,
          checkpoint_path=None, stop_after: Optional[int] = None) -> TrainRun:
    """Run the batch loop until ``max_epochs`` or patience runs out.

    Pass ``state`` (from :func:`load_checkpoint`) to resume. ``stop_after``
    halts after that many total epochs without treating it as convergence,
    which is how interrupted runs are simulated.
    """
    config.validate()
    t0 = time.perf_counter()
    prep = prep or preprocess(graph, config)
    state = state or new_state(graph, config, prep)
    n, bs = graph.n, min(config.batch_size, graph.n)
    telemetry = []
    stopped_early = False

    while state.epoch < config.max_epochs:
        if state.bad_epochs >= config.patience:
            stopped_early = True
            break
        if stop_after is not None and state.epoch >= stop_after:
            break
        e_start = time.perf_counter()
        rng = _epoch_rng(config.seed, state.epoch)
        if prep.sampler is not None and prep.sampler.pool is not None:
            prep.sampler.cursor = int(rng.integers(len(prep.sampler.pool)))
        perm = rng.permutation(n)
        sums = np.zeros(4)
        shorts = 0
        n_batches = 0
        for start in range(0, n, bs):
            batch = perm[start:start + bs]
            out = train_step(batch, state, graph, prep, config, rng)
            state.history.append(out.l_obj)
            sums += (out.l_pos, out.l_neg, out.l_att, out.l_obj)
            shorts += out.short_lists
            n_batches += 1
        state.epoch += 1
        means = tuple(float(x) for x in sums / n_batches)
        state.epoch_stats.append(means)
        if means[3] < state.best * (1.0 - config.min_delta) or not np.isfinite(state.best):
            state.best = means[3]
            state.bad_epochs = 0
        else:
            state.bad_epochs += 1
        rec = {"epoch": state.epoch, "l_pos": means[0], "l_neg": means[1], "l_att": means[2],
               "l_obj": means[3], "wall_time": time.perf_counter() - e_start, "short_lists": shorts}
        telemetry.append(rec)
        log.info("epoch %d l_pos=%.4g l_neg=%.4g l_att=%.4g l_obj=%.4g (%.1fs)", state.epoch,
                 *means, rec["wall_time"])
        if on_epoch_end is not None:
            on_epoch_end(state.epoch, state, prep)
        if checkpoint_path and config.checkpoint_every and state.epoch % config.checkpoint_every == 0:
            save_checkpoint(state, config, checkpoint_path)

    # the refreshed matrix is returned separately; state.model.Z keeps the
    # per-step rows so a checkpoint of this state resumes exactly
    Z = prep.aggregator.encode(state.model.theta)
    return TrainRun(state.model, Z, list(state.history), list(state.epoch_stats), telemetry,
                    time.perf_counter() - t0, config, stopped_early, state)


def fit(graph: AttributedGraph, config: TrainConfig) -> np.ndarray:
    """Preprocess, train and return the final embedding matrix."""
    return train(graph, config).embeddings


# --- checkpoints --------------------------------------------------------------

MAGIC = b"COANECKP"
VERSION = 1
_HEADER = struct.Struct("<8sI6q5q")


def _tensor_order(model: CoaneModel) -> list[str]:
    return list(model.tensors())


def checkpoint_bytes(state: TrainState, config: TrainConfig) -> bytes:
    m = state.model
    cfg = config.to_text().encode("utf-8")
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, m.attr_dim, m.dim, m.window, config.h1, config.h2, config.seed,
                           m.Z.shape[0], state.epoch, state.adam.t, len(state.history), len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<dq", state.best, state.bad_epochs))

    def put(a):
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())

    for name in _tensor_order(m):
        put(m.tensors()[name])
    for name in _tensor_order(m):
        put(state.adam.m[name])
        put(state.adam.v[name])
    put(m.Z)
    put(np.asarray(state.history, dtype=np.float64))
    put(np.asarray(state.epoch_stats, dtype=np.float64).reshape(-1, 4))
    return buf.getvalue()


def save_checkpoint(state: TrainState, config: TrainConfig, path) -> None:
    data = checkpoint_bytes(state, config)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[TrainState, TrainConfig]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    (magic, version, d, dim, c, h1, h2, seed, n, epoch, adam_t, n_hist, cfg_len) = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic bytes)")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {VERSION}")
    off = _HEADER.size
    config = parse_config_text(raw[off:off + cfg_len].decode("utf-8"), source=str(path))
    off += cfg_len
    best, bad = struct.unpack_from("<dq", raw, off)
    off += 16

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        if off + 8 * count > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
        return a

    model = init_parameters(d, dim, c, h1, h2, seed, n=n)
    shapes = {k: v.shape for k, v in model.tensors().items()}
    loaded = {k: take(s) for k, s in shapes.items()}
    model.theta = loaded["theta"]
    for k in ("W1", "b1", "W2", "b2", "W3", "b3"):
        setattr(model.decoder, k, loaded[k])
    adam = Adam(config.learning_rate, config.beta1, config.beta2, config.eps, config.grad_clip or None)
    for k, s in shapes.items():
        adam.m[k] = take(s)
        adam.v[k] = take(s)
    adam.t = adam_t
    model.Z = take((n, dim))
    history = take((n_hist,)).tolist()
    epoch_stats = [tuple(r) for r in take((epoch, 4)).tolist()]
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    state = TrainState(model, adam, epoch, history, epoch_stats, best, bad)
    return state, config
