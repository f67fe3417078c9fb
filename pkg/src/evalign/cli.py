"""Command-line entry point tying the pipeline together.

Subcommands: gen, train, embed, zeroshot, retrieve, probe, serve, report.
Every run resolves its config (defaults < file < --set < --seed), writes a
snapshot next to the outputs, and exits 0 on success, 1 on validation
errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .datagen import class_names, generate_corpus, load_corpus, save_corpus, split_corpus
from .errors import ConfigError, ContractError, EvalignError
from .inference import (
    build_retrieval_index,
    export_embeddings,
    retrieval_report,
    write_metric_report,
    zero_shot_report,
)
from .server import StudyServer
from .study import StudyService, build_case_set, load_case_set, save_case_set
from .trainer import embed_corpus, load_checkpoint, train_contrastive, train_linear_probe, write_train_log

log = logging.getLogger("evalign")


class UsageError(Exception):
    def __init__(self, parser, message):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(self, message)


def build_parser():
    parser = _Parser(prog="evalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON file of dotted config keys")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        if needs_out:
            p.add_argument("--out", required=True, help="run output directory")

    p = sub.add_parser("gen", help="generate and split a synthetic corpus")
    common(p)

    p = sub.add_parser("train", help="contrastive pretraining on a corpus")
    common(p)
    p.add_argument("--corpus", help="corpus JSONL (default: <out>/corpus.jsonl)")

    p = sub.add_parser("embed", help="export image embeddings for a split")
    common(p)
    p.add_argument("--corpus", help="corpus JSONL (default: <out>/corpus.jsonl)")
    p.add_argument("--checkpoint", help="checkpoint (default: <out>/checkpoints/final.json)")

    p = sub.add_parser("zeroshot", help="zero-shot classification metrics")
    common(p)
    p.add_argument("--corpus", help="corpus JSONL (default: <out>/corpus.jsonl)")
    p.add_argument("--checkpoint", help="checkpoint (default: <out>/checkpoints/final.json)")

    p = sub.add_parser("retrieve", help="leave-one-out retrieval metrics")
    common(p)
    p.add_argument("--corpus", help="corpus JSONL (default: <out>/corpus.jsonl)")
    p.add_argument("--checkpoint", help="checkpoint (default: <out>/checkpoints/final.json)")

    p = sub.add_parser("probe", help="linear probe on frozen embeddings")
    common(p)
    p.add_argument("--corpus", help="corpus JSONL (default: <out>/corpus.jsonl)")
    p.add_argument("--checkpoint", help="checkpoint (default: <out>/checkpoints/final.json)")

    p = sub.add_parser("serve", help="run the reader-study HTTP service")
    common(p)
    p.add_argument("--cases", help="case-set JSONL (default: <out>/cases.jsonl; generated if absent)")
    p.add_argument("--corpus", help="corpus JSONL backing case images")
    p.add_argument("--checkpoint", help="checkpoint for top-5 suggestions when generating cases")
    p.add_argument("--log", help="event log path (default: <out>/events.jsonl)")
    p.add_argument("--static", help="static frontend directory to serve at /")
    p.add_argument("--cases-per-class", type=int, default=1)

    p = sub.add_parser("report", help="study report from the event log")
    common(p)
    p.add_argument("--cases", help="case-set JSONL (default: <out>/cases.jsonl)")
    p.add_argument("--log", help="event log path (default: <out>/events.jsonl)")

    return parser


def _resolved(args):
    cfg = cfgmod.resolve_config(args.config, args.set, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfgmod.write_snapshot(cfg, out_dir)
    return cfg, out_dir


def _load_records(args, out_dir):
    path = Path(args.corpus) if getattr(args, "corpus", None) else out_dir / "corpus.jsonl"
    if not path.exists():
        raise ContractError(f"corpus file {path} not found (run `evalign gen` first)")
    return load_corpus(path)


def _load_encoder(args, out_dir, cfg):
    path = (
        Path(args.checkpoint)
        if getattr(args, "checkpoint", None)
        else out_dir / "checkpoints" / "final.json"
    )
    if not path.exists():
        raise ContractError(f"checkpoint {path} not found (run `evalign train` first)")
    return load_checkpoint(path, expected_config=cfgmod.encoder_config(cfg))


def _eval_records(records, cfg):
    split = str(cfg["eval.split"])
    chosen = [r for r in records if r.split == split]
    if not chosen:
        raise ContractError(f"no records in split {split!r}")
    return chosen


def cmd_gen(args):
    cfg, out_dir = _resolved(args)
    spec = cfgmod.corpus_spec(cfg)
    records = generate_corpus(spec)
    split_corpus(records, cfgmod.split_fractions(cfg), seed=int(cfg["seed"]))
    save_corpus(records, out_dir / "corpus.jsonl")
    log.info("wrote %d records to %s", len(records), out_dir / "corpus.jsonl")
    print(json.dumps({"records": len(records), "path": str(out_dir / "corpus.jsonl")}))
    return 0


def cmd_train(args):
    cfg, out_dir = _resolved(args)
    records = _load_records(args, out_dir)
    tcfg = cfgmod.train_config(cfg, checkpoint_dir=str(out_dir / "checkpoints"))
    encoder, history = train_contrastive(records, tcfg, cfgmod.encoder_config(cfg))
    write_train_log(history, out_dir / "train_log.jsonl")
    print(json.dumps({"epochs": len(history), "final_L_Con": history[-1]["L_Con"]}))
    return 0


def cmd_embed(args):
    cfg, out_dir = _resolved(args)
    records = _load_records(args, out_dir)
    encoder = _load_encoder(args, out_dir, cfg)
    chosen = _eval_records(records, cfg)
    labels = class_names(int(cfg["corpus.n_classes"]))
    index = build_retrieval_index(encoder, chosen, labels)
    path = out_dir / f"embeddings_{cfg['eval.split']}.jsonl"
    export_embeddings(path, index)
    print(json.dumps({"embeddings": len(index.ids), "path": str(path)}))
    return 0


def cmd_zeroshot(args):
    cfg, out_dir = _resolved(args)
    records = _load_records(args, out_dir)
    encoder = _load_encoder(args, out_dir, cfg)
    chosen = _eval_records(records, cfg)
    labels = class_names(int(cfg["corpus.n_classes"]))
    report = zero_shot_report(
        encoder, chosen, labels, ks=tuple(cfg["eval.ks"]),
        tokens_per_text=int(cfg["corpus.tokens_per_text"]),
    )
    path = out_dir / "metrics_zeroshot.json"
    write_metric_report(path, report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_retrieve(args):
    cfg, out_dir = _resolved(args)
    records = _load_records(args, out_dir)
    encoder = _load_encoder(args, out_dir, cfg)
    chosen = _eval_records(records, cfg)
    labels = class_names(int(cfg["corpus.n_classes"]))
    index = build_retrieval_index(encoder, chosen, labels)
    report = retrieval_report(index, ks=tuple(cfg["eval.ks"]), ns=tuple(cfg["eval.ns"]))
    path = out_dir / "metrics_retrieval.json"
    write_metric_report(path, report)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_probe(args):
    cfg, out_dir = _resolved(args)
    records = _load_records(args, out_dir)
    encoder = _load_encoder(args, out_dir, cfg)
    emb = embed_corpus(encoder, records)
    result = train_linear_probe(emb, cfgmod.probe_config(cfg))
    report = {
        "mean_auc": result.mean_auc,
        "per_class_auc": {str(k): v for k, v in result.per_class_auc.items()},
        "train_accuracy": result.train_accuracy,
        "eval_accuracy": result.eval_accuracy,
        "n_train": result.n_train,
        "n_eval": result.n_eval,
    }
    path = out_dir / "metrics_probe.json"
    write_metric_report(path, report)
    print(json.dumps(report, sort_keys=True))
    return 0


def _case_paths(args, out_dir):
    cases_path = Path(args.cases) if getattr(args, "cases", None) else out_dir / "cases.jsonl"
    log_path = Path(args.log) if getattr(args, "log", None) else out_dir / "events.jsonl"
    return cases_path, log_path


def _images_for_cases(cases, pool):
    """Case ids index into the eval-split pool they were built from."""
    images = {}
    for case in cases:
        try:
            idx = int(case.case_id.rsplit("_", 1)[-1])
            images[case.case_id] = [float(v) for v in pool[idx].image]
        except (ValueError, IndexError):
            continue
    return images


def cmd_serve(args):
    cfg, out_dir = _resolved(args)
    cases_path, log_path = _case_paths(args, out_dir)
    records = []
    corpus_path = Path(args.corpus) if args.corpus else out_dir / "corpus.jsonl"
    if corpus_path.exists():
        records = load_corpus(corpus_path)
    pool = [r for r in records if r.split == str(cfg["eval.split"])]
    if cases_path.exists():
        cases = load_case_set(cases_path)
        images = _images_for_cases(cases, pool)
    else:
        if not pool:
            raise ContractError(f"cannot build cases: corpus {corpus_path} not found")
        encoder = _load_encoder(args, out_dir, cfg)
        labels = class_names(int(cfg["corpus.n_classes"]))
        cases, images = build_case_set(
            encoder, pool, labels, n_per_class=args.cases_per_class, seed=int(cfg["seed"]),
            tokens_per_text=int(cfg["corpus.tokens_per_text"]),
        )
        save_case_set(cases, cases_path)
        log.info("generated %d cases at %s", len(cases), cases_path)
    service = StudyService(cases, log_path=log_path)
    server = StudyServer(
        service,
        host=str(cfg["serve.host"]),
        port=int(cfg["serve.port"]),
        images=images,
        static_dir=args.static,
    )
    print(json.dumps({"address": server.address, "cases": len(cases), "log": str(log_path)}))
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def cmd_report(args):
    cfg, out_dir = _resolved(args)
    cases_path, log_path = _case_paths(args, out_dir)
    if not cases_path.exists():
        raise ContractError(f"case set {cases_path} not found")
    if not log_path.exists():
        raise ContractError("no completed readers (event log missing)")
    service = StudyService(load_case_set(cases_path), log_path=log_path)
    text = service.report_json()
    (out_dir / "study_report.json").write_text(text)
    sys.stdout.write(text)
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "embed": cmd_embed,
    "zeroshot": cmd_zeroshot,
    "retrieve": cmd_retrieve,
    "probe": cmd_probe,
    "serve": cmd_serve,
    "report": cmd_report,
}


def main(argv=None):
    level = os.environ.get("EVALIGN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        exc.parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, EvalignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
