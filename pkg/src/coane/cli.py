"""Command-line entry point: ``coane <command> ...``.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .config import TUNING_GRIDS, TrainConfig, load_config
from .cooccurrence import dump_stats
from .encoder import read_embeddings, write_embeddings
from .graph import (AttributedGraph, GraphFormatError, GraphValidationError, load_attributes,
                    load_edge_list, load_labels, load_linqs_dataset, write_edge_list)
from .trainer import CheckpointError, TrainingDiverged, load_checkpoint, preprocess, save_checkpoint, train
from .walks import dump_corpus

log = logging.getLogger("coane")


class UsageError(Exception):
    pass


# --- dataset resolution ---------------------------------------------------------


def _data_roots() -> list[Path]:
    roots = []
    if os.environ.get("COANE_DATA_DIR"):
        roots.append(Path(os.environ["COANE_DATA_DIR"]))
    roots.append(Path("data"))
    return roots


def resolve_linqs(spec: str) -> tuple[Path, Path]:
    """``dir``, ``prefix`` or bare ``name`` -> (content, cites) paths."""
    p = Path(spec)
    candidates = []
    if p.is_dir():
        candidates.append(p / p.name)
    candidates.append(p)
    for root in _data_roots():
        candidates.append(root / spec / spec)
        candidates.append(root / spec)
    for base in candidates:
        content, cites = Path(str(base) + ".content"), Path(str(base) + ".cites")
        if content.is_file() and cites.is_file():
            return content, cites
    raise FileNotFoundError(f"no LINQS dataset found for {spec!r} (looked for {candidates[0]}.content/.cites)")


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"file not found: {p}")
    return p


def load_dataset(args) -> AttributedGraph:
    if args.dataset:
        kind, _, rest = args.dataset.partition(":")
        if kind != "linqs" or not rest:
            raise UsageError(f"unsupported dataset spec {args.dataset!r}; use linqs:<dir|prefix|name>")
        content, cites = resolve_linqs(rest)
        return load_linqs_dataset(content, cites)
    if not args.edges:
        raise UsageError("give --dataset or --edges")
    g = load_edge_list(_require(args.edges), weighted=args.weighted)
    if args.attributes:
        g = load_attributes(g, _require(args.attributes), format=args.attr_format)
    if args.labels:
        g = load_labels(g, _require(args.labels))
    return g


# --- argument plumbing ------------------------------------------------------------


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--dataset", help="linqs:<dir|prefix|name>, resolved under $COANE_DATA_DIR or ./data")
    g.add_argument("--edges", help="edge list file (u v [w] per line)")
    g.add_argument("--weighted", action="store_true", help="edge list has a weight column")
    g.add_argument("--attributes", help="attribute file")
    g.add_argument("--attr-format", default="dense", choices=["dense", "sparse", "sparse-triplet"])
    g.add_argument("--labels", help="label file (node_id label per line)")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training config (each flag sets the config key of the same name)")
    g.add_argument("--config", help="config file of 'key = value' lines")
    defaults = TrainConfig()
    for f in fields(TrainConfig):
        typ = {"int": int, "float": float, "str": str}.get(f.type, f.type)
        g.add_argument(f"--{f.name}", type=typ, default=None,
                       help=f"default {getattr(defaults, f.name)!r}")


def effective_config(args) -> TrainConfig:
    cfg = load_config(_require(args.config)) if getattr(args, "config", None) else TrainConfig()
    overrides = {f.name: getattr(args, f.name) for f in fields(TrainConfig)
                 if getattr(args, f.name, None) is not None}
    cfg = cfg.replace(**overrides)
    cfg.validate()
    return cfg


def _grid_text() -> str:
    lines = ["tuning grids (select on the link-prediction validation split):"]
    for k, v in TUNING_GRIDS.items():
        lines.append(f"  {k}: {', '.join(f'{x:g}' for x in v)}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="coane", description="Learn and evaluate node embeddings for attributed graphs.",
                                epilog=_grid_text(), formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train and write embeddings, checkpoint, telemetry",
                       epilog=_grid_text(), formatter_class=fmt)
    _add_dataset_args(t)
    _add_config_args(t)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--split", help="train on the residual graph of this link split directory")
    t.add_argument("--resume", help="checkpoint to resume from")

    e = sub.add_parser("embed", help="recompute embeddings from a checkpoint")
    _add_dataset_args(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", help="link split directory the checkpoint was trained with")
    e.add_argument("--out", required=True, help="embedding file to write")

    for name, helptext in (("eval-lp", "link prediction AUC"), ("eval-nc", "node classification F1"),
                           ("eval-clu", "k-means clustering NMI")):
        q = sub.add_parser(name, help=helptext)
        _add_dataset_args(q)
        q.add_argument("--embeddings", required=True)
        q.add_argument("--embedding-dim", type=int, help="expected embedding dimension")
        q.add_argument("--report", help="report file (key = value text)")
        q.add_argument("--seed", type=int, default=0)
        if name == "eval-lp":
            q.add_argument("--split", help="split directory; generated from --seed when absent")
        if name == "eval-nc":
            q.add_argument("--train-pct", type=float, default=50.0)
        if name == "eval-clu":
            q.add_argument("--restarts", type=int, default=10)
            q.add_argument("--nmi-average", default="arithmetic",
                           choices=["arithmetic", "geometric", "max", "min"])

    s = sub.add_parser("split-lp", help="write a seeded 70/10/20 link split and the residual graph")
    _add_dataset_args(s)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    i = sub.add_parser("inspect", help="dump the context corpus and co-occurrence statistics")
    _add_dataset_args(i)
    _add_config_args(i)
    i.add_argument("--corpus", help="write windows as 'midst<TAB>slot,slot,...'")
    i.add_argument("--stats", help="write 'i j D_ij D1_ij' lines")
    return p


# --- commands ----------------------------------------------------------------------


def _train_graph(graph: AttributedGraph, split_dir) -> AttributedGraph:
    if not split_dir:
        return graph
    return ev.residual_graph(graph, ev.read_split(graph, _require(split_dir)))


def cmd_train(args) -> int:
    graph = load_dataset(args)
    cfg = effective_config(args)
    state = None
    if args.resume:
        state, saved = load_checkpoint(_require(args.resume))
        cfg = saved.replace(max_epochs=cfg.max_epochs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    tg = _train_graph(graph, args.split)
    ckpt = out / "checkpoint.bin"
    run = train(tg, cfg, state=state, checkpoint_path=ckpt)
    save_checkpoint(run.state, cfg, ckpt)
    write_embeddings(run.embeddings, graph.node_ids, out / "embeddings.txt")
    with open(out / "telemetry.jsonl", "w", encoding="utf-8") as fh:
        for rec in run.telemetry:
            fh.write(json.dumps(rec) + "\n")
    print(f"trained {run.state.epoch} epochs on {tg.n} nodes / {tg.num_edges} edges; "
          f"embeddings {run.embeddings.shape[0]}x{run.embeddings.shape[1]} -> {out / 'embeddings.txt'}")
    return 0


def cmd_embed(args) -> int:
    graph = load_dataset(args)
    state, cfg = load_checkpoint(_require(args.checkpoint))
    prep = preprocess(_train_graph(graph, args.split), cfg)
    Z = prep.aggregator.encode(state.model.theta)
    write_embeddings(Z, graph.node_ids, args.out)
    print(f"wrote {Z.shape[0]}x{Z.shape[1]} embeddings to {args.out}")
    return 0


def _load_embeddings(args, graph) -> np.ndarray:
    _, Z = read_embeddings(_require(args.embeddings), graph.node_ids)
    if args.embedding_dim is not None and Z.shape[1] != args.embedding_dim:
        raise ValueError(f"embedding dimension {Z.shape[1]} in {args.embeddings} "
                         f"does not match expected dimension {args.embedding_dim}")
    return Z


def _emit(report: ev.EvalReport, args) -> int:
    print(report.to_table())
    if args.report:
        Path(args.report).write_text(report.to_text(), encoding="utf-8")
    return 0


def cmd_eval_lp(args) -> int:
    graph = load_dataset(args)
    Z = _load_embeddings(args, graph)
    if args.split:
        split = ev.read_split(graph, _require(args.split))
    else:
        log.warning("no split given; generating one with seed %d", args.seed)
        print(f"generated link split with seed {args.seed}")
        split = ev.make_link_split(graph, args.seed)
    return _emit(ev.link_prediction_eval(Z, graph, split), args)


def _need_labels(graph):
    if graph.labels is None or not np.any(graph.labels >= 0):
        raise UsageError("this evaluation needs node labels (--labels or a LINQS dataset)")


def cmd_eval_nc(args) -> int:
    graph = load_dataset(args)
    _need_labels(graph)
    Z = _load_embeddings(args, graph)
    return _emit(ev.classification_eval(Z, graph.labels, args.train_pct, args.seed), args)


def cmd_eval_clu(args) -> int:
    graph = load_dataset(args)
    _need_labels(graph)
    Z = _load_embeddings(args, graph)
    return _emit(ev.clustering_eval(Z, graph.labels, args.seed, args.restarts, args.nmi_average), args)


def cmd_split_lp(args) -> int:
    graph = load_dataset(args)
    split = ev.make_link_split(graph, args.seed)
    ev.write_split(split, graph, args.out)
    write_edge_list(ev.residual_graph(graph, split), Path(args.out) / "residual.edges")
    print(f"split seed {args.seed}: {len(split.train_pos)}/{len(split.valid_pos)}/{len(split.test_pos)} "
          f"positives -> {args.out}")
    return 0


def cmd_inspect(args) -> int:
    graph = load_dataset(args)
    cfg = effective_config(args)
    prep = preprocess(graph, cfg)
    print(f"nodes={graph.n} edges={graph.num_edges} attributes={graph.d} density={graph.density:.3g}")
    print(f"windows={len(prep.corpus.windows)} k_p={prep.stats.k_p} sampling={prep.sampling_mode}")
    if args.corpus:
        dump_corpus(prep.corpus, args.corpus)
    if args.stats:
        dump_stats(prep.stats, args.stats)
    return 0


COMMANDS = {"train": cmd_train, "embed": cmd_embed, "eval-lp": cmd_eval_lp, "eval-nc": cmd_eval_nc,
            "eval-clu": cmd_eval_clu, "split-lp": cmd_split_lp, "inspect": cmd_inspect}

INPUT_ERRORS = (UsageError, FileNotFoundError, GraphFormatError, GraphValidationError, CheckpointError,
                ValueError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
