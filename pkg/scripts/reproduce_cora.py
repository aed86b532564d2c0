#!/usr/bin/env python3
"""Run the Cora study: tuned link prediction, ablations, classification and clustering.

Writes a ``key = value`` summary to --out and logs each training run.
"""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from coane.cli import resolve_linqs
from coane.config import TrainConfig
from coane.evaluation import make_link_split
from coane.experiments import LinkRunCache, ablation_runs, label_task_runs, tune_link_prediction
from coane.graph import load_linqs_dataset


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--dataset", default="cora", help="LINQS dir, prefix or name under $COANE_DATA_DIR or ./data")
    p.add_argument("--out", default="cora_summary.txt")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--max-epochs", type=int, default=TrainConfig().max_epochs)
    p.add_argument("--skip-ablations", action="store_true")
    p.add_argument("--skip-labels", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        graph = load_linqs_dataset(*resolve_linqs(args.dataset))
    base = TrainConfig(max_epochs=args.max_epochs, seed=args.seeds[0])
    cache = LinkRunCache(graph, make_link_split(graph, args.split_seed), probe_epochs=(1,))
    best, _ = tune_link_prediction(cache, base)
    lines = [f"split_seed = {args.split_seed}", f"tuned.window = {best.window}",
             f"tuned.neg_strength = {best.neg_strength!r}", f"tuned.attr_weight = {best.attr_weight!r}"]

    if args.skip_ablations:
        groups = {"full": [cache(best.replace(seed=s)) for s in args.seeds]}
    else:
        groups = ablation_runs(cache, best, args.seeds)
    for name, runs in groups.items():
        for r in runs:
            lines.append(f"lp.{name}.seed{r.config.seed}.test_auc = {r.test_auc!r}")
            lines.append(f"lp.{name}.seed{r.config.seed}.valid_auc = {r.valid_auc!r}")
            lines.append(f"lp.{name}.seed{r.config.seed}.epoch1_valid_auc = {r.curve.get(1, float('nan'))!r}")
        lines.append(f"lp.{name}.mean_test_auc = {float(np.mean([r.test_auc for r in runs]))!r}")

    if not args.skip_labels:
        res = label_task_runs(graph, TrainConfig(max_epochs=args.max_epochs), embed_seeds=range(5),
                              split_seeds=range(5))
        lines.append(f"nc.mean_micro_f1 = {float(np.mean(res['micro_f1']))!r}")
        lines.append(f"nc.mean_macro_f1 = {float(np.mean(res['macro_f1']))!r}")
        lines.append(f"clu.best_nmi = {max(res['nmi'])!r}")

    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


if __name__ == "__main__":
    sys.exit(main())
