"""Downstream evaluation: link prediction, node classification, node clustering."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .graph import AttributedGraph, _data_lines

# --- metrics -----------------------------------------------------------------


def roc_auc(labels, scores) -> float:
    """Area under the ROC curve via the rank-sum statistic; tied scores count one half."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1_scores(y_true, y_pred) -> tuple[float, float]:
    """(macro F1, micro F1) for single-label multi-class predictions.

    Macro averaging runs over every class seen in either argument.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    classes = np.union1d(y_true, y_pred)
    f1s = []
    tp_all = fp_all = fn_all = 0
    for k in classes:
        tp = int(np.sum((y_pred == k) & (y_true == k)))
        fp = int(np.sum((y_pred == k) & (y_true != k)))
        fn = int(np.sum((y_pred != k) & (y_true == k)))
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    macro = float(np.mean(f1s)) if f1s else 0.0
    denom = 2 * tp_all + fp_all + fn_all
    micro = 2 * tp_all / denom if denom else 0.0
    return macro, float(micro)


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def normalized_mutual_info(a, b, average: str = "arithmetic") -> float:
    """NMI between two labelings, I(A;B) / mean(H(A), H(B))."""
    a = np.unique(np.asarray(a), return_inverse=True)[1]
    b = np.unique(np.asarray(b), return_inverse=True)[1]
    if len(a) != len(b):
        raise ValueError("labelings differ in length")
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0 and hb == 0:
        return 1.0
    nz = table > 0
    pij = table[nz] / n
    pa = (table.sum(axis=1, keepdims=True) / n).repeat(table.shape[1], axis=1)[nz]
    pb = (table.sum(axis=0, keepdims=True) / n).repeat(table.shape[0], axis=0)[nz]
    mi = float(np.sum(pij * (np.log(pij) - np.log(pa) - np.log(pb))))
    mi = max(mi, 0.0)
    if average == "arithmetic":
        norm = (ha + hb) / 2
    elif average == "geometric":
        norm = np.sqrt(ha * hb)
    elif average == "max":
        norm = max(ha, hb)
    elif average == "min":
        norm = min(ha, hb)
    else:
        raise ValueError(f"unknown NMI normalisation {average!r}")
    return float(mi / norm) if norm > 0 else 0.0


# --- logistic regression -------------------------------------------------------


class LogisticRegression:
    """Binary L2-regularised logistic regression fitted by full-batch Adam.

    The objective is ``mean(log-loss) + l2 / (2 N) * ||w||^2`` on standardised
    features (bias unpenalised).
    """

    def __init__(self, l2: float = 1.0, iterations: int = 500, lr: float = 0.05):
        self.l2, self.iterations, self.lr = l2, iterations, lr

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LogisticRegression":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.mu = X.mean(axis=0)
        self.sd = X.std(axis=0)
        self.sd[self.sd == 0] = 1.0
        Xs = (X - self.mu) / self.sd
        N, d = Xs.shape
        w, b = np.zeros(d), 0.0
        m_w, v_w, m_b, v_b = np.zeros(d), np.zeros(d), 0.0, 0.0
        b1, b2, eps = 0.9, 0.999, 1e-8
        for t in range(1, self.iterations + 1):
            p = 1.0 / (1.0 + np.exp(-(Xs @ w + b)))
            r = (p - y) / N
            gw = Xs.T @ r + (self.l2 / N) * w
            gb = r.sum()
            m_w = b1 * m_w + (1 - b1) * gw
            v_w = b2 * v_w + (1 - b2) * gw * gw
            m_b = b1 * m_b + (1 - b1) * gb
            v_b = b2 * v_b + (1 - b2) * gb * gb
            c1, c2 = 1 - b1 ** t, 1 - b2 ** t
            w -= self.lr * (m_w / c1) / (np.sqrt(v_w / c2) + eps)
            b -= self.lr * (m_b / c1) / (np.sqrt(v_b / c2) + eps)
        self.w, self.b = w, b
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return ((np.asarray(X) - self.mu) / self.sd) @ self.w + self.b


class OneVsRest:
    def __init__(self, **kw):
        self.kw = kw

    def fit(self, X, y, classes=None) -> "OneVsRest":
        y = np.asarray(y)
        self.classes = np.unique(y) if classes is None else np.asarray(classes)
        self.models = {}
        for k in self.classes:
            if np.any(y == k) and np.any(y != k):
                self.models[k] = LogisticRegression(**self.kw).fit(X, (y == k).astype(float))
        return self

    def predict(self, X) -> np.ndarray:
        scores = np.full((len(X), len(self.classes)), -np.inf)
        for c, k in enumerate(self.classes):
            if k in self.models:
                scores[:, c] = self.models[k].decision_function(X)
        if not self.models:  # a single observed class
            seen = [k for k in self.classes]
            return np.full(len(X), seen[0])
        return self.classes[np.argmax(scores, axis=1)]


# --- reports -----------------------------------------------------------------


@dataclass
class EvalReport:
    task: str
    metrics: dict
    meta: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def to_text(self) -> str:
        lines = [f"task = {self.task}", f"seed = {self.seed}"]
        lines += [f"metric.{k} = {v!r}" for k, v in self.metrics.items()]
        lines += [f"meta.{k} = {v}" for k, v in self.meta.items()]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        width = max([len(k) for k in self.metrics] + [6])
        rows = [f"{self.task} (seed {self.seed})", "-" * (width + 12)]
        rows += [f"{k:<{width}}  {v:.4f}" for k, v in self.metrics.items()]
        return "\n".join(rows)


# --- link prediction ------------------------------------------------------------


@dataclass
class LinkSplit:
    train_pos: np.ndarray
    valid_pos: np.ndarray
    test_pos: np.ndarray
    train_neg: np.ndarray
    valid_neg: np.ndarray
    test_neg: np.ndarray
    seed: int

    def parts(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in
                ("train_pos", "valid_pos", "test_pos", "train_neg", "valid_neg", "test_neg")}


def make_link_split(graph: AttributedGraph, seed: int = 0,
                    fractions=(0.7, 0.1, 0.2)) -> LinkSplit:
    """Random 70/10/20 edge split with an equal number of distinct non-edges per part."""
    edges = graph.edges()
    m = len(edges)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 303]))
    perm = rng.permutation(m)
    n_train = int(np.floor(fractions[0] * m))
    n_valid = int(np.floor(fractions[1] * m))
    tr, va, te = perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]
    n = graph.n
    need = m
    if need > n * (n - 1) // 2 - m:
        raise ValueError("not enough non-edges to sample balanced negatives")
    existing = set((edges[:, 0] * n + edges[:, 1]).tolist())
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < need:
        u = rng.integers(0, n, size=2 * (need - len(chosen)) + 16)
        v = rng.integers(0, n, size=len(u))
        for a, b in zip(u.tolist(), v.tolist()):
            if a == b:
                continue
            key = min(a, b) * n + max(a, b)
            if key in existing or key in seen:
                continue
            seen.add(key)
            chosen.append(key)
            if len(chosen) == need:
                break
    neg = np.array(chosen, dtype=np.int64)
    neg = np.stack([neg // n, neg % n], axis=1)
    return LinkSplit(edges[tr], edges[va], edges[te],
                     neg[:len(tr)], neg[len(tr):len(tr) + len(va)], neg[len(tr) + len(va):], seed)


def residual_graph(graph: AttributedGraph, split: LinkSplit) -> AttributedGraph:
    """The graph with validation and test edges removed, used to train LP embeddings."""
    e = split.train_pos
    w = np.asarray(graph.adjacency[e[:, 0], e[:, 1]]).ravel() if len(e) else None
    return graph.with_edges(e, w)


def write_split(split: LinkSplit, graph: AttributedGraph, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ids = graph.node_ids
    for name, pairs in split.parts().items():
        with open(d / f"{name}.txt", "w", encoding="utf-8") as fh:
            for u, v in pairs:
                fh.write(f"{ids[u]}\t{ids[v]}\n")
    (d / "seed.txt").write_text(f"{split.seed}\n", encoding="utf-8")


def read_split(graph: AttributedGraph, directory) -> LinkSplit:
    d = Path(directory)
    index = {k: i for i, k in enumerate(graph.node_ids)}
    parts = {}
    for name in ("train_pos", "valid_pos", "test_pos", "train_neg", "valid_neg", "test_neg"):
        rows = [(index[t[0]], index[t[1]]) for _, t in _data_lines(d / f"{name}.txt")]
        parts[name] = np.array(rows, dtype=np.int64).reshape(-1, 2)
    seed_file = d / "seed.txt"
    seed = int(seed_file.read_text().strip()) if seed_file.exists() else -1
    return LinkSplit(seed=seed, **parts)


def edge_features(Z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return Z[pairs[:, 0]] * Z[pairs[:, 1]]


def link_prediction_scores(Z: np.ndarray, split: LinkSplit, l2: float = 1.0,
                           iterations: int = 500) -> dict[str, float]:
    """Train on the train pairs, return AUC on validation and test pairs."""
    Xtr = np.vstack([edge_features(Z, split.train_pos), edge_features(Z, split.train_neg)])
    ytr = np.r_[np.ones(len(split.train_pos)), np.zeros(len(split.train_neg))]
    clf = LogisticRegression(l2=l2, iterations=iterations).fit(Xtr, ytr)
    out = {}
    for part in ("valid", "test"):
        pos, neg = getattr(split, f"{part}_pos"), getattr(split, f"{part}_neg")
        if len(pos) and len(neg):
            s = clf.decision_function(np.vstack([edge_features(Z, pos), edge_features(Z, neg)]))
            out[f"{part}_auc"] = roc_auc(np.r_[np.ones(len(pos)), np.zeros(len(neg))], s)
    return out


def link_prediction_eval(Z: np.ndarray, graph: AttributedGraph, split: Optional[LinkSplit] = None,
                         split_seed: int = 0) -> EvalReport:
    if graph.num_edges < 10:
        raise ValueError(f"link prediction needs at least 10 edges, graph has {graph.num_edges}")
    if split is None:
        split = make_link_split(graph, split_seed)
    scores = link_prediction_scores(Z, split)
    metrics = {"auc": scores["test_auc"]}
    if "valid_auc" in scores:
        metrics["valid_auc"] = scores["valid_auc"]
    meta = {"n_train": len(split.train_pos), "n_valid": len(split.valid_pos), "n_test": len(split.test_pos),
            "features": "hadamard", "classifier": "logreg(l2=1.0, adam, 500 it)"}
    return EvalReport("link_prediction", metrics, meta, split.seed)


# --- node classification -----------------------------------------------------------


def stratified_split(labels: np.ndarray, train_frac: float, rng: np.random.Generator):
    train, test = [], []
    for k in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == k))
        cut = int(round(train_frac * len(idx)))
        if len(idx) > 1:
            cut = min(max(cut, 1), len(idx) - 1)
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def classification_eval(Z: np.ndarray, labels, train_pct: float = 50, seed: int = 0) -> EvalReport:
    """Stratified split at ``train_pct`` percent, one-vs-rest logistic regression, F1 scores."""
    labels = np.asarray(labels)
    known = np.flatnonzero(labels >= 0)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 404]))
    tr, te = stratified_split(labels[known], train_pct / 100.0, rng)
    tr, te = known[tr], known[te]
    classes = np.unique(labels[known])
    missing = np.setdiff1d(classes, labels[tr])
    if len(missing):
        warnings.warn(f"classes {missing.tolist()} absent from the training split", UserWarning, stacklevel=2)
    clf = OneVsRest(l2=1.0, iterations=500).fit(Z[tr], labels[tr], classes=np.unique(labels[tr]))
    pred = clf.predict(Z[te])
    macro, micro = f1_scores(labels[te], pred)
    meta = {"train_pct": train_pct, "n_train": len(tr), "n_test": len(te),
            "classifier": "one-vs-rest logreg(l2=1.0, adam, 500 it)"}
    return EvalReport("node_classification", {"macro_f1": macro, "micro_f1": micro}, meta, seed)


# --- clustering ------------------------------------------------------------------


def clustering_eval(Z: np.ndarray, labels, seed: int = 0, restarts: int = 10,
                    average: str = "arithmetic") -> EvalReport:
    """k-means (k-means++ seeding, best of ``restarts`` by inertia) against the label count."""
    from sklearn.cluster import KMeans

    labels = np.asarray(labels)
    known = labels >= 0
    K = len(np.unique(labels[known]))
    if K > known.sum():
        raise ValueError(f"{K} clusters requested for {int(known.sum())} nodes")
    if K < 2:
        raise ValueError("clustering needs at least two label classes")
    km = KMeans(n_clusters=K, init="k-means++", n_init=restarts, random_state=seed).fit(Z[known])
    nmi = normalized_mutual_info(labels[known], km.labels_, average)
    meta = {"k": K, "restarts": restarts, "inertia": float(km.inertia_), "nmi_average": average}
    return EvalReport("node_clustering", {"nmi": nmi}, meta, seed)
