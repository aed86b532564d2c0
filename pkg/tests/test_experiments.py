import numpy as np

from coane.config import TrainConfig
from coane.evaluation import make_link_split
from coane.experiments import (LinkRunCache, ablation_runs, label_task_runs, normalized_rows, tune_link_prediction)

from conftest import random_graph

TINY = TrainConfig(walk_length=10, window=3, subsample_t=1e-2, embedding_dim=4, hidden1=4, hidden2=4,
                   negatives=3, batch_size=16, max_epochs=2)


def _cache():
    g = random_graph(40, 0.15, seed=6, d=4)
    return LinkRunCache(g, make_link_split(g, 1), probe_epochs=(1,))


def test_tuning_picks_best_valid_per_coordinate():
    cache = _cache()
    grids = {"window": [1, 3], "neg_strength": [1e-3, 1e-1], "attr_weight": [1.0]}
    best, trials = tune_link_prediction(cache, TINY, grids)
    assert len(trials) == 5
    first = {t.config.window: t.valid_auc for t in trials[:2]}
    assert best.window == max(first, key=first.get)
    # the coordinate's winner is reused, not retrained
    assert len(cache.runs) == 4
    assert all(1 in t.curve for t in trials)


def test_ablations_change_the_run():
    cache = _cache()
    runs = ablation_runs(cache, TINY, seeds=[0])
    assert set(runs) == {"full", "no_attributes", "no_positive", "no_negative"}
    assert runs["no_positive"][0].config.pos_weight == 0.0
    assert runs["no_negative"][0].config.neg_strength == 0.0
    assert len({r[0].test_auc for r in runs.values()}) > 1


def test_label_tasks_shape():
    g = random_graph(30, 0.2, seed=3, d=4)
    res = label_task_runs(g, TINY, embed_seeds=[0, 1], split_seeds=[0, 1, 2], restarts=2)
    assert len(res["micro_f1"]) == 3 and len(res["nmi"]) == 2


def test_normalized_rows_zero_safe():
    Z = np.array([[3.0, 4.0], [0.0, 0.0]])
    np.testing.assert_array_equal(normalized_rows(Z), [[0.6, 0.8], [0.0, 0.0]])
