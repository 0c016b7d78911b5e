"""``flowgan`` command line: ingest, embed, train, generate, baseline, evaluate."""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__, baseline, encoding, evaluation, wgan
from .config import ConfigError, PipelineConfig
from .flows import CorpusError, parse_corpora, write_corpus
from .ip2vec import EmbeddingStore, train as train_embeddings
from .ip2vec.store import StoreFormatError
from .nn import NonFiniteError

logger = logging.getLogger("flowgan")

SNAPSHOT = "config.yaml"
STORE_NAME = "embeddings.ip2v"


class CommandError(RuntimeError):
    pass


def _snapshot_path(out: str | Path) -> Path:
    """Snapshot written next to a file output, or inside a directory output."""
    p = Path(out)
    return p / SNAPSHOT if p.is_dir() else p.with_name(p.name + "." + SNAPSHOT)


def _read(cfg: PipelineConfig, paths, strict: bool | None = None):
    kwargs = cfg.ingest_kwargs()
    if strict is not None:
        kwargs["strict"] = strict or kwargs["strict"]
    flows, stats = parse_corpora([str(p) for p in paths], cfg.column_map(), **kwargs)
    if not flows:
        raise CommandError(f"no usable flows in {', '.join(map(str, paths))}")
    return flows, stats


def _overrides(args: argparse.Namespace) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.workers is not None:
        o["workers"] = args.workers
    if getattr(args, "limit", None) is not None:
        o.setdefault("ingest", {})["limit"] = args.limit
    for flag, section, key in (("pairs", "ip2vec", "pairs"), ("dim", "ip2vec", "dim"),
                               ("embed_epochs", "ip2vec", "epochs"), ("gan_epochs", "gan", "epochs"),
                               ("iterations", "gan", "iterations")):
        value = getattr(args, flag, None)
        if value is not None:
            o.setdefault(section, {})[key] = value
    return o


# ----------------------------------------------------------------- commands

def cmd_ingest(args, cfg: PipelineConfig) -> None:
    flows, stats = _read(cfg, args.corpus, strict=args.strict)
    s = stats.as_dict()
    print(f"rows read:     {s['total_rows']}")
    print(f"flows kept:    {s['kept_rows']}")
    print(f"rows dropped:  {s['dropped_rows']}")
    for reason, n in sorted(s["dropped_by_reason"].items()):
        print(f"  {reason:<12} {n}")
    if s["aliased_addresses"]:
        print(f"aliased hosts: {s['aliased_addresses']}")
    if s["bad_rows"]:
        print(f"malformed:     {s['bad_rows']} (first at line {s['first_bad_line']})")
    if args.out:
        write_corpus(flows, args.out)
        cfg.write_snapshot(_snapshot_path(args.out), "ingest",
                           {"corpus": [str(p) for p in args.corpus], "stats": s})
        print(f"wrote {args.out}")


def cmd_embed(args, cfg: PipelineConfig) -> None:
    flows, _ = _read(cfg, args.corpus)
    ic = cfg.ip2vec_config()
    store = train_embeddings(flows, ic)
    store.save(args.out)
    hist = Path(str(args.out) + ".loss.csv")
    hist.write_text("epoch,mean_loss\n" + "".join(f"{i + 1},{v!r}\n"
                                                 for i, v in enumerate(store.loss_history)))
    cfg.write_snapshot(_snapshot_path(args.out), "embed",
                       {"corpus": [str(p) for p in args.corpus], "flows": len(flows)})
    print(f"trained {len(store.vocab)} tokens x {store.dim} dims on {len(flows)} flows "
          f"({'extended' if ic.extended else 'original'} pairs), final loss "
          f"{store.loss_history[-1]:.4f}; wrote {args.out}")


def cmd_train(args, cfg: PipelineConfig) -> None:
    method = args.method.upper()
    store = None
    if method == "E":
        if not args.embeddings:
            raise CommandError("method e needs an embedding store: run `flowgan embed` first "
                               "and pass it with --embeddings")
        store = EmbeddingStore.load(args.embeddings)
    flows, _ = _read(cfg, args.corpus)
    schema = encoding.build_schema(method, flows, store, week_start=cfg.week_start)
    data = encoding.encode_many(flows, schema, store)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if store is not None:
        shutil.copyfile(args.embeddings, out / STORE_NAME)
        schema.embedding_store = STORE_NAME
    gc = cfg.gan_config(method)
    model = wgan.train(data, gc, schema.output_activation())
    model.metadata = {"method": method, "training_flows": len(flows), "width": schema.width,
                      "schema": "schema.json"}
    model.save(out)
    schema.save(out / "schema.json")
    cfg.write_snapshot(out / SNAPSHOT, "train", {"corpus": [str(p) for p in args.corpus],
                                                 "method": method, "embeddings": args.embeddings})
    last = model.history[-1]
    print(f"method {method}: width {schema.width}, {len(model.history)} generator iterations, "
          f"final critic loss {last.critic_loss:.4f}, W {last.wasserstein:.4f}; wrote {out}")


def cmd_generate(args, cfg: PipelineConfig) -> None:
    model_dir = Path(args.model)
    model = wgan.GanModel.load(model_dir)
    schema = encoding.EncodingSchema.load(model_dir / model.metadata.get("schema", "schema.json"))
    store = EmbeddingStore.load(model_dir / schema.embedding_store) if schema.embedding_store else None
    count = args.count
    if count is None and args.reference:
        count = len(_read(cfg, args.reference)[0])
    if count is None:
        count = int(model.metadata["training_flows"])
    vectors = wgan.generate(model, count, seed=cfg.seed)
    flows = encoding.decode_many(vectors, schema, store)
    write_corpus(flows, args.out, cfg.column_map())
    cfg.write_snapshot(_snapshot_path(args.out), "generate", {"model": str(model_dir), "count": count})
    print(f"generated {count} flows with the {schema.method} model; wrote {args.out}")


def cmd_baseline(args, cfg: PipelineConfig) -> None:
    if args.model:
        model = baseline.EmpiricalModel.load(args.model)
    else:
        if not args.corpus:
            raise CommandError("baseline needs a corpus to fit or --model")
        flows, _ = _read(cfg, args.corpus)
        model = baseline.fit(flows, cfg.week_start)
    if args.save_model:
        model.save(args.save_model)
    count = args.count if args.count is not None else model.n_flows
    flows = baseline.sample(model, count, seed=cfg.seed, workers=cfg.workers)
    write_corpus(flows, args.out, cfg.column_map())
    cfg.write_snapshot(_snapshot_path(args.out), "baseline",
                       {"corpus": [str(p) for p in args.corpus or []], "model": args.model,
                        "count": count})
    print(f"sampled {count} flows from the empirical model; wrote {args.out}")


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    reference, _ = _read(cfg, args.reference)
    rules, checks = cfg.subnet_rules(), cfg.check_config()
    reports = {}
    for entry in args.candidate:
        name, sep, path = entry.partition("=")
        if not sep:
            name, path = Path(entry).stem, entry
        if name in reports:
            raise CommandError(f"duplicate candidate name {name!r}")
        flows, _ = _read(cfg, [path])
        reports[name] = evaluation.compare(flows, reference, rules, checks)
    paths = evaluation.write_report(reports, args.out)
    cfg.write_snapshot(Path(args.out) / SNAPSHOT, "evaluate",
                       {"reference": [str(p) for p in args.reference], "candidates": list(args.candidate)})
    sys.stdout.write(Path(paths["text"]).read_text())


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file merged over the packaged defaults")
    common.add_argument("--seed", type=int, help="master seed (default from config: 0)")
    common.add_argument("--workers", type=int, help="worker cap; 1 is the bit-reproducible mode")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="flowgan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common], help="validate a flow CSV and print statistics")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--strict", action="store_true", help="abort when malformed rows exceed the tolerance")
    p.add_argument("--limit", type=int, help="keep at most this many flows")
    p.add_argument("--out", help="write the normalized corpus here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed", parents=[common], help="train IP2Vec embeddings")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--out", required=True, help="embedding store file")
    p.add_argument("--pairs", choices=("extended", "original"))
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int, dest="embed_epochs")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", parents=[common], help="train a WGAN-GP on an encoded corpus")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--method", choices=("n", "b", "e", "N", "B", "E"), required=True)
    p.add_argument("--embeddings", help="embedding store (method e)")
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--epochs", type=float, dest="gan_epochs")
    p.add_argument("--iterations", type=int, help="generator iterations (overrides --epochs)")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common], help="sample flows from a trained model")
    p.add_argument("--model", required=True, help="model directory written by train")
    p.add_argument("--out", required=True, help="output flow CSV")
    p.add_argument("--count", type=int, help="number of flows (default: reference or training size)")
    p.add_argument("--reference", nargs="+", help="corpus whose size sets the default count")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("baseline", parents=[common], help="fit and sample the empirical baseline")
    p.add_argument("corpus", nargs="*")
    p.add_argument("--out", required=True, help="output flow CSV")
    p.add_argument("--count", type=int, help="number of flows (default: fitted corpus size)")
    p.add_argument("--model", help="load a saved empirical model instead of fitting")
    p.add_argument("--save-model", help="persist the fitted model")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", parents=[common], help="score candidate corpora against a reference")
    p.add_argument("--reference", nargs="+", required=True)
    p.add_argument("--candidate", nargs="+", required=True, metavar="[NAME=]PATH")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config, _overrides(args))
        # workers=1 pins BLAS to one thread so reductions are bit-reproducible
        with threadpool_limits(limits=cfg.workers):
            args.func(args, cfg)
    except (CommandError, ConfigError, CorpusError, encoding.EncodingError, StoreFormatError,
            NonFiniteError, OSError, ValueError, KeyError) as exc:
        print(f"flowgan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
