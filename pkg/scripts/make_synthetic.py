#!/usr/bin/env python3
"""Write a small attributed graph with planted communities, in the CLI's input formats.

Nodes of the same community link with probability --p-in, others with --p-out;
attributes are noisy community indicators, so both structure and attributes carry signal.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from coane.graph import from_arrays, write_attributes, write_edge_list, write_labels


def planted_partition(n: int, k: int, p_in: float, p_out: float, d: int, noise: float, seed: int):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, size=n)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    edges = np.argwhere(upper)
    # edge lists cannot carry isolated nodes, so give each one a same-community neighbour
    deg = np.bincount(edges.ravel(), minlength=n)
    extra = []
    for v in np.flatnonzero(deg == 0):
        mates = np.flatnonzero((labels == labels[v]) & (np.arange(n) != v))
        u = rng.choice(mates) if len(mates) else (v + 1) % n
        extra.append(sorted((int(u), int(v))))
    if extra:
        edges = np.unique(np.vstack([edges, extra]), axis=0)
    centres = rng.normal(size=(k, d))
    X = centres[labels] + noise * rng.normal(size=(n, d))
    return from_arrays(edges, X=X, labels=labels, n=n)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--nodes", type=int, default=300)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--p-in", type=float, default=0.05)
    p.add_argument("--p-out", type=float, default=0.005)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    g = planted_partition(args.nodes, args.communities, args.p_in, args.p_out, args.dim, args.noise, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(g, out / "graph.edges")
    write_attributes(g, out / "graph.attr")
    write_labels(g, out / "graph.labels")
    print(f"{g.n} nodes, {g.num_edges} edges, {g.d} attributes -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
