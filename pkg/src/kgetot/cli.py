"""Command-line entry point: prepare, train, eval, predict, variant, report."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .checkpoint import Checkpoint, CheckpointError
from .config import KEYS, resolve
from .evaluate import count_parameters, evaluate_model, model_from_checkpoint
from .graph import DEFAULT_FILES, DataError, load_dir
from .model import views_for
from .train import NumericalError, configure_torch, train
from .variants import (VariantSpec, drop_relation_types, drop_relational_neighbors, split_easy_hard,
                       write_variant)
from .views import write_views

log = logging.getLogger("kgetot")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _data_files(directory):
    return [Path(directory) / name for name in DEFAULT_FILES.values()]


def write_manifest(path, command, config=None, seed=None, inputs=(), started=None, extra=None):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "version": __version__,
        "duration_seconds": None if started is None else round(time.perf_counter() - started, 3),
    }
    if extra:
        manifest.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _config_args(p):
    p.add_argument("--config", help="file of 'key = value' lines")
    p.add_argument("--preset", choices=("fb15ket", "yago43ket"))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--swap-roles", action="store_true", default=None, dest="swap_roles",
                   help="swap source/destination roles in the alignments")
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--threads", type=int)


def _resolve(args):
    flags = {k: getattr(args, k) for k in ("epochs", "lr", "dim", "seed", "batch_size", "swap_roles",
                                           "deterministic", "threads", "preset")}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        if key.strip() not in KEYS:
            raise UsageError(f"unknown config key {key.strip()!r}")
        flags[key.strip()] = value
    try:
        return resolve(args.config, flags)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def build_parser():
    parser = _Parser(prog="kgetot", description="Cross-view optimal transport entity typing toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="derive clusters and views; write them as TSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _config_args(p)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    _config_args(p)

    p = sub.add_parser("eval", help="filtered MRR / Hits@K of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("predict", help="top-k types of one entity")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--entity", required=True)
    p.add_argument("--top-k", type=int, default=10, dest="top_k")

    p = sub.add_parser("variant", help="write an easy/hard or sparse-neighbor dataset variant")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True, choices=("easy_hard", "drop_neighbors", "drop_relation_types"))
    p.add_argument("--rate", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="diagnostic dumps")
    rsub = p.add_subparsers(dest="what", required=True, parser_class=_Parser)
    r = rsub.add_parser("ot", help="cost matrix, plan and residuals of one alignment")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--alignment", choices=("entity", "type", "cluster"), default="entity")
    r.add_argument("--out", required=True)
    r = rsub.add_parser("params", help="parameter count of a checkpoint")
    r.add_argument("--ckpt", required=True)
    return parser


def cmd_prepare(args, started):
    cfg = _resolve(args)
    ds = load_dir(args.data)
    ds.check()
    views = views_for(ds, cfg.train)
    write_views(ds, views, args.out)
    counts = {**ds.counts(), "clusters": views.num_clusters, "e2t": len(views.e2t), "e2c": len(views.e2c),
              "tct": len(views.tct)}
    Path(args.out, "counts.json").write_text(json.dumps(counts, indent=2) + "\n")
    for k, v in counts.items():
        print(f"{k}\t{v}")
    write_manifest(Path(args.out) / "manifest.json", "prepare", cfg.as_dict(), cfg.train.seed,
                   _data_files(args.data), started)


def cmd_train(args, started):
    cfg = _resolve(args)
    ds = load_dir(args.data)
    ds.check()
    ckpt = train(ds, cfg)
    ckpt.save(args.out)
    best = ckpt.header.get("best_valid_mrr")
    print(f"best_epoch\t{ckpt.header['best_epoch']}")
    print(f"best_valid_mrr\t{'' if best is None else f'{best:.6f}'}")
    inputs = _data_files(args.data) + ([args.config] if args.config else [])
    write_manifest(f"{args.out}.manifest.json", "train", cfg.as_dict(), cfg.train.seed, inputs, started,
                   {"checkpoint": str(args.out), "checkpoint_sha256": _sha256(args.out)})


def cmd_eval(args, started):
    configure_torch(args.threads)
    ckpt = Checkpoint.load(args.ckpt)
    ds = load_dir(args.data)
    metrics = evaluate_model(model_from_checkpoint(ckpt, ds), ds, args.split)
    print(metrics.table())
    print(metrics.line())
    write_manifest(f"{args.ckpt}.eval-{args.split}.manifest.json", "eval", ckpt.header.get("config"), None,
                   _data_files(args.data) + [args.ckpt], started,
                   {"metrics": {"mrr": metrics.mrr, "hits_at": metrics.hits_at, "tuples": metrics.tuple_count}})


def cmd_predict(args, started):
    ckpt = Checkpoint.load(args.ckpt)
    ds = load_dir(args.data)
    if args.entity not in ds.entities:
        raise DataError(f"unknown entity {args.entity!r}")
    model = model_from_checkpoint(ckpt, ds)
    logits = model.predict_logits([ds.entities[args.entity]])[0]
    probs = 1.0 / (1.0 + np.exp(-logits))
    top = np.argsort(-probs, kind="stable")[: args.top_k]
    for t in top.tolist():
        print(f"{ds.types.id_to_name[t]}\t{probs[t]:.6f}")
    write_manifest(f"{args.ckpt}.predict.manifest.json", "predict", ckpt.header.get("config"), None,
                   _data_files(args.data) + [args.ckpt], started, {"entity": args.entity})


def cmd_variant(args, started):
    ds = load_dir(args.data)
    out = Path(args.out)
    if args.kind == "easy_hard":
        if args.k is None:
            raise UsageError("--k is required for easy_hard")
        easy, hard = split_easy_hard(ds, args.k)
        m_easy = write_variant(easy, VariantSpec("easy", k=args.k, seed=args.seed), out / "easy", args.data)
        m_hard = write_variant(hard, VariantSpec("hard", k=args.k, seed=args.seed), out / "hard", args.data)
        print(f"easy_types\t{m_easy['distinct_types']}")
        print(f"hard_types\t{m_hard['distinct_types']}")
    else:
        if args.rate is None:
            raise UsageError("--rate is required for dropping variants")
        try:
            spec = VariantSpec(args.kind, rate=args.rate, seed=args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        fn = drop_relational_neighbors if args.kind == "drop_neighbors" else drop_relation_types
        variant = fn(ds, args.rate, args.seed)
        write_variant(variant, spec, out, args.data)
        print(f"triples\t{len(ds.edges)}\t->\t{len(variant.edges)}")
    write_manifest(out / "run.manifest.json", "variant", None, args.seed, _data_files(args.data), started,
                   {"kind": args.kind, "rate": args.rate, "k": args.k})


def _write_matrix(path, M):
    np.savetxt(path, np.asarray(M), delimiter="\t", fmt="%.10g")


def cmd_report(args, started):
    ckpt = Checkpoint.load(args.ckpt)
    if args.what == "params":
        print(f"parameters\t{count_parameters(ckpt)}")
        for name in sorted(ckpt.tables):
            print(f"{name}\t{'x'.join(map(str, ckpt.tables[name].shape))}\t{ckpt.tables[name].size}")
        return
    ds = load_dir(args.data)
    model = model_from_checkpoint(ckpt, ds)
    plan = model.plans()[args.alignment]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if plan is None:
        print(f"{args.alignment}\tno plan (view disabled or set-size cap exceeded)")
    else:
        _write_matrix(out / f"{args.alignment}_cost.tsv", plan.cost_matrix)
        _write_matrix(out / f"{args.alignment}_plan.tsv", plan.plan)
        T = plan.plan
        n, m = T.shape
        with open(out / f"{args.alignment}_residuals.tsv", "w") as fh:
            fh.write("axis\tindex\tresidual\n")
            fh.writelines(f"row\t{i}\t{float(r):.6g}\n" for i, r in enumerate(T.sum(1) - 1.0 / n))
            fh.writelines(f"col\t{j}\t{float(r):.6g}\n" for j, r in enumerate(T.sum(0) - 1.0 / m))
        print(f"shape\t{n}x{m}")
        print(f"transport_cost\t{plan.cost:.10g}")
        print(f"max_residual\t{plan.residual:.3g}")
        print(f"iterations\t{plan.iterations}")
    write_manifest(out / "manifest.json", "report ot", ckpt.header.get("config"), None,
                   _data_files(args.data) + [args.ckpt], started, {"alignment": args.alignment})


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict,
            "variant": cmd_variant, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    started = time.perf_counter()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, started)
    except UsageError as exc:
        print(f"kgetot: error: {exc}", file=sys.stderr)
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"kgetot: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"kgetot: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
