"""Attribute-context convolution, average pooling and the attribute decoder.

A window of ``c`` nodes becomes a ``c x d`` matrix of attribute rows (zeros for
padding). Each of the ``d'`` filters is a ``c x d`` matrix and produces one
embedding coordinate as the sum of the elementwise product; a node's embedding
is the mean over its windows.

Because the map is linear, the mean can be pushed inside: with ``A[v]`` the
average flattened attribute-context matrix of ``v``, ``z_v = Theta_flat @ A[v]``.
:class:`ContextAggregator` precomputes ``A`` once per corpus so that encoding a
batch and back-propagating into the filters are two sparse-dense products.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph
from .walks import PAD, ContextCorpus


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass(eq=False)
class DecoderParams:
    """d' -> h1 -> h2 -> d, ReLU on both hidden layers, affine output."""
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2, "W3": self.W3, "b3": self.b3}


@dataclass(eq=False)
class CoaneModel:
    theta: np.ndarray          # (d', c, d) filter bank
    decoder: DecoderParams
    Z: np.ndarray              # (n, d') current embeddings

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    @property
    def window(self) -> int:
        return self.theta.shape[1]

    @property
    def attr_dim(self) -> int:
        return self.theta.shape[2]

    @property
    def L(self) -> np.ndarray:
        return self.Z[:, : self.dim // 2]

    @property
    def R(self) -> np.ndarray:
        return self.Z[:, self.dim // 2:]

    def tensors(self) -> dict[str, np.ndarray]:
        """Trainable tensors by name, in checkpoint order."""
        out = {"theta": self.theta}
        out.update(self.decoder.tensors())
        return out


def init_parameters(d: int, dim: int, c: int, h1: int, h2: int, seed: int, n: int = 0) -> CoaneModel:
    """Xavier-uniform filters and decoder weights, zero biases, zero embeddings."""
    if dim % 2:
        raise ValueError(f"embedding dimension must be even, got {dim}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 11]))
    # each filter maps a c*d receptive field to a single scalar
    theta = xavier_uniform(rng, (dim, c, d), fan_in=c * d, fan_out=1)
    dec = DecoderParams(
        W1=xavier_uniform(rng, (h1, dim), dim, h1), b1=np.zeros(h1),
        W2=xavier_uniform(rng, (h2, h1), h1, h2), b2=np.zeros(h2),
        W3=xavier_uniform(rng, (d, h2), h2, d), b3=np.zeros(d),
    )
    return CoaneModel(theta, dec, np.zeros((n, dim)))


def attribute_context_matrix(window: np.ndarray, X) -> np.ndarray:
    window = np.asarray(window)
    d = X.shape[1]
    R = np.zeros((len(window), d))
    for s, u in enumerate(window):
        if u != PAD:
            row = X[u]
            R[s] = row.toarray().ravel() if sp.issparse(row) else row
    return R


def convolve_context(R: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """One output per filter: sum over (slot, attribute) of R * Theta_j."""
    R = np.asarray(R)
    if R.shape != theta.shape[1:]:
        raise ValueError(f"context matrix shape {R.shape} does not match filter shape {theta.shape[1:]}")
    return np.tensordot(theta, R, axes=([1, 2], [0, 1]))


def encode_node(v: int, corpus: ContextCorpus, graph: AttributedGraph, theta: np.ndarray) -> np.ndarray:
    """Reference encoder: convolve each window of ``v`` and average."""
    wins = corpus.windows_of(v)
    if len(wins) == 0:
        raise ValueError(f"node {v} has no context windows")
    out = np.zeros(theta.shape[0])
    for w in wins:
        out += convolve_context(attribute_context_matrix(w, graph.X), theta)
    return out / len(wins)


def decode_attributes(z: np.ndarray, params: DecoderParams) -> np.ndarray:
    return decoder_forward(np.atleast_2d(z), params)[0].reshape(np.shape(z)[:-1] + (-1,))


def decoder_forward(Z: np.ndarray, p: DecoderParams):
    """Batched forward pass; returns the output and the cache for backprop."""
    a1 = Z @ p.W1.T + p.b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ p.W2.T + p.b2
    h2 = np.maximum(a2, 0.0)
    out = h2 @ p.W3.T + p.b3
    return out, (Z, a1, h1, a2, h2)


def decoder_backward(dout: np.ndarray, cache, p: DecoderParams):
    """Gradients of a scalar loss given dL/d(output); ReLU'(0) is taken as 0."""
    Z, a1, h1, a2, h2 = cache
    g = {"W3": dout.T @ h2, "b3": dout.sum(axis=0)}
    dh2 = dout @ p.W3
    da2 = dh2 * (a2 > 0)
    g["W2"] = da2.T @ h1
    g["b2"] = da2.sum(axis=0)
    dh1 = da2 @ p.W2
    da1 = dh1 * (a1 > 0)
    g["W1"] = da1.T @ Z
    g["b1"] = da1.sum(axis=0)
    dZ = da1 @ p.W1
    return dZ, g


class ContextAggregator:
    """Per-node mean of flattened attribute-context matrices, as a sparse (n, c*d) matrix.

    Column ``s * d + a`` of row ``v`` is the average, over the windows of ``v``,
    of attribute ``a`` of the node in slot ``s`` (PAD contributes zero).
    """

    def __init__(self, corpus: ContextCorpus, X):
        n, c = corpus.n, corpus.c
        Xs = sp.csr_matrix(X, dtype=np.float64)
        d = Xs.shape[1]
        inv = np.zeros(n)
        np.divide(1.0, corpus.counts, out=inv, where=corpus.counts > 0)
        blocks = []
        for s in range(c):
            col = corpus.windows[:, s]
            ok = col != PAD
            P = sp.csr_matrix((inv[corpus.midst[ok]], (corpus.midst[ok], col[ok])), shape=(n, n))
            P.sum_duplicates()
            blocks.append(P @ Xs)
        self.A = sp.csr_matrix(sp.hstack(blocks, format="csr")) if blocks else sp.csr_matrix((n, 0))
        self.A.sort_indices()
        self.n, self.c, self.d = n, c, d

    def encode(self, theta: np.ndarray, nodes=None) -> np.ndarray:
        A = self.A if nodes is None else self.A[nodes]
        return np.asarray(A @ theta.reshape(theta.shape[0], -1).T)

    def theta_grad(self, dZ: np.ndarray, nodes) -> np.ndarray:
        """Gradient w.r.t. the filter bank given dL/dZ for ``nodes``."""
        G = (self.A[nodes].T @ dZ).T
        return np.asarray(G).reshape(dZ.shape[1], self.c, self.d)


def refresh_all_embeddings(corpus: ContextCorpus, graph: AttributedGraph, theta: np.ndarray,
                           aggregator: ContextAggregator | None = None) -> np.ndarray:
    agg = aggregator or ContextAggregator(corpus, graph.X)
    return agg.encode(theta)


def write_embeddings(Z: np.ndarray, node_ids, path) -> None:
    """Plain-text export, one ``node_id v1 ... v_d'`` line per node."""
    with open(path, "w", encoding="utf-8") as fh:
        for nid, row in zip(node_ids, Z):
            fh.write(nid + " " + " ".join(repr(float(x)) for x in row) + "\n")


def read_embeddings(path, node_ids=None) -> tuple[list[str], np.ndarray]:
    """Read an embedding export; rows are reordered to ``node_ids`` when given."""
    ids, rows = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        tok = line.split()
        if not tok:
            continue
        ids.append(tok[0])
        rows.append([float(x) for x in tok[1:]])
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValueError(f"{path}: rows have differing dimensions {sorted(widths)}")
    Z = np.array(rows, dtype=np.float64)
    if node_ids is not None:
        index = {k: i for i, k in enumerate(ids)}
        missing = [k for k in node_ids if k not in index]
        if missing:
            raise ValueError(f"{path}: no embedding for {len(missing)} nodes (e.g. {missing[0]!r})")
        Z = Z[[index[k] for k in node_ids]]
        ids = list(node_ids)
    return ids, Z
