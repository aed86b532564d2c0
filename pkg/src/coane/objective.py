"""Training objective with hand-derived gradients, and the Adam update.

The batch objective is

    L_obj = pos_weight * L_pos + L_neg + L_att

    L_pos = -sum_{i in B} sum_{j in top_kp(i)} Dt_ij * log sigmoid(L_i . R_j)
    L_neg = a * sum_{i in B} sum_{j in neg(i)} (z_i . z_j)^2
    L_att = gamma * mean((MLP(z_B) - X_B)^2)

where ``L``/``R`` are the left/right halves of the embedding. Only batch rows of
``Z`` are functions of the parameters; other rows are constants for the step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .encoder import CoaneModel, ContextAggregator, DecoderParams, decoder_backward, decoder_forward


class NonFiniteError(FloatingPointError):
    pass


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _batch_positions(n: int, batch: np.ndarray) -> np.ndarray:
    pos = np.full(n, -1, dtype=np.int64)
    pos[batch] = np.arange(len(batch))
    return pos


def positive_loss(Z: np.ndarray, targets: sp.csr_matrix, batch: np.ndarray):
    """Weighted log-sigmoid loss over each batch node's target neighbours.

    Returns ``(loss, dZ)`` with ``dZ`` aligned to ``batch``. Neighbours outside
    the batch are treated as constants.
    """
    batch = np.asarray(batch, dtype=np.int64)
    n, dim = Z.shape
    half = dim // 2
    T = sp.coo_matrix(targets[batch])
    i_loc, j, w = T.row, T.col, T.data
    Li = Z[batch[i_loc], :half]
    Rj = Z[j, half:]
    s = np.einsum("ij,ij->i", Li, Rj)
    loss = -float(np.sum(w * log_sigmoid(s)))
    g = -w * expit(-s)
    B = len(batch)
    dZ = np.zeros((B, dim))
    G = sp.csr_matrix((g, (i_loc, j)), shape=(B, n))
    dZ[:, :half] = G @ Z[:, half:]
    jl = _batch_positions(n, batch)[j]
    m = jl >= 0
    if m.any():
        Gr = sp.csr_matrix((g[m], (jl[m], i_loc[m])), shape=(B, B))
        dZ[:, half:] += Gr @ Z[batch, :half]
    return loss, dZ


def negative_loss(Z: np.ndarray, batch: np.ndarray, negatives: Sequence[np.ndarray], a: float):
    """Squared inner-product penalty between each batch node and its negatives.

    ``negatives[t]`` lists the nodes drawn for ``batch[t]``. Gradients reach a
    negative only when it is itself in the batch.
    """
    batch = np.asarray(batch, dtype=np.int64)
    n, dim = Z.shape
    B = len(batch)
    dZ = np.zeros((B, dim))
    if a == 0 or B == 0:
        return 0.0, dZ
    lens = np.array([len(x) for x in negatives], dtype=np.int64)
    if lens.sum() == 0:
        return 0.0, dZ
    t_loc = np.repeat(np.arange(B), lens)
    j = np.concatenate([np.asarray(x, dtype=np.int64) for x in negatives])
    zi = Z[batch[t_loc]]
    zj = Z[j]
    s = np.einsum("ij,ij->i", zi, zj)
    loss = a * float(np.sum(s * s))
    g = 2.0 * a * s
    np.add.at(dZ, t_loc, g[:, None] * zj)
    jl = _batch_positions(n, batch)[j]
    m = jl >= 0
    np.add.at(dZ, jl[m], g[m, None] * zi[m])
    return loss, dZ


def attribute_loss(Zb: np.ndarray, Xb: np.ndarray, decoder: DecoderParams, gamma: float):
    """gamma * MSE of the decoder reconstruction; returns ``(loss, dZb, decoder_grads)``."""
    out, cache = decoder_forward(Zb, decoder)
    diff = out - Xb
    denom = max(diff.size, 1)
    loss = gamma * float(np.sum(diff * diff)) / denom
    dout = (2.0 * gamma / denom) * diff
    dZb, grads = decoder_backward(dout, cache, decoder)
    return loss, dZb, grads


@dataclass
class LossBreakdown:
    l_pos: float
    l_neg: float
    l_att: float
    l_obj: float
    grads: dict = field(default_factory=dict)
    short_lists: int = 0


def total_loss_and_gradients(batch, model: CoaneModel, aggregator: ContextAggregator,
                             targets: sp.csr_matrix, Xb: np.ndarray, negatives,
                             a: float, gamma: float, pos_weight: float = 1.0) -> LossBreakdown:
    """Encode the batch into ``model.Z``, evaluate the objective and back-propagate.

    Gradients are returned for the filter bank and every decoder tensor.
    """
    batch = np.asarray(batch, dtype=np.int64)
    Zb = aggregator.encode(model.theta, batch)
    model.Z[batch] = Zb

    l_pos, dZ = 0.0, np.zeros_like(Zb)
    if pos_weight:
        l_pos, dZp = positive_loss(model.Z, targets, batch)
        l_pos *= pos_weight
        dZ += pos_weight * dZp
    l_neg, dZn = negative_loss(model.Z, batch, negatives, a)
    dZ += dZn
    if gamma:
        l_att, dZa, dec_grads = attribute_loss(Zb, Xb, model.decoder, gamma)
        dZ += dZa
    else:
        l_att = 0.0
        dec_grads = {k: np.zeros_like(v) for k, v in model.decoder.tensors().items()}
    grads = {"theta": aggregator.theta_grad(dZ, batch)}
    grads.update(dec_grads)
    return LossBreakdown(l_pos, l_neg, l_att, l_pos + l_neg + l_att, grads)


def graph_likelihood(Z: np.ndarray, D, adjacency) -> float:
    """Log of the unadjusted co-occurrence likelihood over all ordered pairs i != j.

    Each pair contributes ``D_ij * log s(L_i.R_j)`` and, on non-edges,
    ``log s(1 - L_i.R_j)``. Kept as a reference; training uses the positive-only form.
    """
    half = Z.shape[1] // 2
    S = Z[:, :half] @ Z[:, half:].T
    D = D.toarray() if sp.issparse(D) else np.asarray(D)
    E = adjacency.toarray() if sp.issparse(adjacency) else np.asarray(adjacency)
    off = ~np.eye(len(Z), dtype=bool)
    pos = D * log_sigmoid(S)
    neg = (E == 0) * log_sigmoid(1.0 - S)
    return float(np.sum((pos + neg)[off]))


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip: Optional[float] = None):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip = clip
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def init_state(self, params: dict) -> None:
        for k, p in params.items():
            self.m.setdefault(k, np.zeros_like(p))
            self.v.setdefault(k, np.zeros_like(p))

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient in tensor {k!r}")
        self.init_state(params)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if self.clip:
                norm = np.linalg.norm(g)
                if norm > self.clip:
                    g = g * (self.clip / norm)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(params: dict, grads: dict, state: Adam) -> Adam:
    state.step(params, grads)
    return state
