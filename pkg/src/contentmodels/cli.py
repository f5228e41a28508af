"""Command-line interface: one subcommand per experiment.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
Every command writes a ``*.manifest.json`` next to its main output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .content_model import BigramBaseline, ContentModel
from .corpus import Corpus, corpus_stats, load_corpus, save_corpus
from .ordering import PermutationCap, evaluate_ordering, learning_curve
from .reporting import (FORMATS, ReportError, RunManifest, dumps, emit_report, learning_curve_table,
                        ordering_table, rank_bin_table, sha256_path, size_sweep_table, summarization_table)
from .summarization import (SummaryModel, build_pairs, extraction_accuracy, lead_baseline, read_pairs,
                            summarize, train_summarizer)
from .synth import PlantedSpec, generate_corpus, write_planted
from .training import ConvergenceWarning, GridSpec, TrainConfig, build_content_model, tune_parameters

logger = logging.getLogger("contentmodels")

SEED_ENV = "DRIFT_SEED"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


# -- argument helpers ----------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser, grid: bool = False) -> None:
    nargs = "+" if grid else None
    defaults = GridSpec() if grid else TrainConfig()
    p.add_argument("--k", type=int, nargs=nargs, default=list(defaults.k) if grid else defaults.k,
                   help="number of initial clusters")
    p.add_argument("--T", type=int, nargs=nargs, default=list(defaults.T) if grid else defaults.T,
                   help="clusters smaller than T sentences join the etcetera cluster")
    p.add_argument("--d1", type=float, nargs=nargs, default=list(defaults.delta1) if grid else defaults.delta1,
                   help="emission smoothing constant")
    p.add_argument("--d2", type=float, nargs=nargs, default=list(defaults.delta2) if grid else defaults.delta2,
                   help="transition smoothing constant")
    p.add_argument("--max-iters", type=int, default=TrainConfig.max_iterations,
                   help="cap on Viterbi re-estimation rounds")


def _add_cap_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-exhaustive", type=int, default=PermutationCap.exhaustive_max,
                   help="enumerate all permutations up to this many sentences")
    p.add_argument("--sample-size", type=int, default=PermutationCap.sample_size,
                   help="permutations sampled for longer documents")


def _add_common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--out", required=out_required, help="output path")
    p.add_argument("--format", choices=FORMATS, default="json", help="report format")
    p.add_argument("--seed", type=int, default=0, help=f"random seed (overridden by ${SEED_ENV})")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _config(args) -> TrainConfig:
    try:
        return TrainConfig(k=args.k, T=args.T, delta1=args.d1, delta2=args.d2, max_iterations=args.max_iters,
                           n_states=getattr(args, "n_states", None))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cap(args) -> PermutationCap:
    if args.max_exhaustive < 1 or args.sample_size < 1:
        raise UsageError("--max-exhaustive and --sample-size must be ≥ 1")
    return PermutationCap(exhaustive_max=args.max_exhaustive, sample_size=args.sample_size, seed=_seed(args))


def _jobs(args) -> int:
    if args.jobs == 0:
        raise UsageError("--jobs must be non-zero")
    return args.jobs


def _load(path: str | None, what: str) -> Corpus:
    if not path:
        raise UsageError(f"--{what} is required")
    return load_corpus(path)


def _report_path(out: str, fmt: str) -> Path:
    path = Path(out)
    return path if path.suffix else path.with_suffix({"json": ".json", "csv": ".csv", "text": ".txt"}[fmt])


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(f"{out.stem}.manifest.json")


# -- commands ------------------------------------------------------------------


def cmd_ingest(args):
    corpus = _load(args.corpus, "corpus")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out)
    stats = corpus_stats(corpus).__dict__
    print(json.dumps(stats, indent=1) if args.format == "json" else
          "\n".join(f"{k}: {v}" for k, v in stats.items()))
    return [out], {"corpus": args.corpus}


def cmd_train(args):
    config = _config(args)
    corpus = _load(args.corpus, "corpus")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        result = build_content_model(corpus, config)
    for w in caught:
        logger.warning("%s", w.message)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.model.save(out)
    report = {"config": config.hyperparams(), "corpus": corpus_stats(corpus).__dict__, **result.report()}
    report_path = out.with_name(f"{out.stem}.report.json")
    report_path.write_text(dumps(report), encoding="utf-8")
    logger.info("trained %d states in %d iterations", result.model.m, result.iterations)
    return [out, report_path], {"corpus": args.corpus}


def cmd_tune(args):
    try:
        grid = GridSpec(tuple(args.k), tuple(args.T), tuple(args.d1), tuple(args.d2))
        for cell in grid.cells():
            TrainConfig(*cell)
        base = TrainConfig(max_iterations=args.max_iters)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cap = _cap(args)
    train, dev = _load(args.corpus, "corpus"), _load(args.dev, "dev")
    best, rows = tune_parameters(train, dev, grid, cap, base, _jobs(args))
    out = _report_path(args.out, "json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps({"best": best.hyperparams(), "cells": rows}), encoding="utf-8")
    return [out], {"corpus": args.corpus, "dev": args.dev}


def cmd_order_eval(args):
    cap = _cap(args)
    jobs = _jobs(args)
    model = ContentModel.load(args.model)
    test = _load(args.test, "test")
    domain = args.domain or Path(args.test).stem
    results = {(domain, "content"): evaluate_ordering(model, test, cap, jobs)}
    if args.corpus:
        baseline = BigramBaseline(delta1=model.hyperparams.get("delta1", 1e-6)).fit(_load(args.corpus, "corpus"))
        results[(domain, "bigram")] = evaluate_ordering(baseline, test, cap, jobs)
    tables = [ordering_table(results), rank_bin_table(results)]
    extra = {"documents": {f"{d}/{s}": r.to_dict()["documents"] for (d, s), r in results.items()}}
    out = _report_path(args.report or args.out, args.format)
    written = emit_report(tables, out, args.format, extra)
    inputs = {"model": args.model, "test": args.test, **({"corpus": args.corpus} if args.corpus else {})}
    return written, inputs


def _pairs(corpus_path, summaries_path, pairs_path, threshold):
    if not (summaries_path and pairs_path):
        raise UsageError("--summaries and --pairs are both required")
    pairs = build_pairs(load_corpus(corpus_path), load_corpus(summaries_path), read_pairs(pairs_path), threshold)
    if not pairs:
        raise DataError("no usable document-summary pair")
    return pairs


def _check_summary_flags(args):
    if not 0 < args.align_threshold <= 1:
        raise UsageError("--align-threshold must be in (0, 1]")
    if args.min_support < 1:
        raise UsageError("--min-support must be ≥ 1")


def cmd_summarize_train(args):
    _check_summary_flags(args)
    model = ContentModel.load(args.model)
    if not args.corpus:
        raise UsageError("--corpus is required")
    pairs = _pairs(args.corpus, args.summaries, args.pairs, args.align_threshold)
    summ = train_summarizer(model, pairs, args.min_support)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    summ.save(out)
    return [out], {"model": args.model, "corpus": args.corpus, "summaries": args.summaries, "pairs": args.pairs}


def cmd_summarize(args):
    if args.ell is not None and args.ell < 1:
        raise UsageError("--ell must be ≥ 1")
    model = ContentModel.load(args.model)
    summ = SummaryModel.load(args.summarizer)
    test = _load(args.test, "test")
    gold = {}
    if args.pairs or args.summaries:
        _check_summary_flags(args)
        gold = {p.full.doc_id: p.gold_indices
                for p in _pairs(args.test, args.summaries, args.pairs, args.align_threshold)}
    if args.ell is None and not gold:
        raise UsageError("--ell is required unless gold summaries are given")

    outputs, acc_content, acc_lead = [], [], []
    for doc in test:
        if args.ell is None and doc.doc_id not in gold:
            continue
        ell = args.ell if args.ell is not None else len(gold[doc.doc_id])
        picked = summarize(model, summ, doc, ell)
        outputs.append({"doc_id": doc.doc_id, "indices": picked,
                        "sentences": [doc.sentences[i].raw for i in picked]})
        if doc.doc_id in gold:
            acc_content.append(extraction_accuracy(picked, gold[doc.doc_id]))
            acc_lead.append(extraction_accuracy(lead_baseline(doc, ell), gold[doc.doc_id]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps(outputs), encoding="utf-8")
    written = [out]
    if acc_content:
        table = summarization_table({"content": float(np.mean(acc_content)), "lead": float(np.mean(acc_lead))})
        ext = {"json": ".json", "csv": ".csv", "text": ".txt"}[args.format]
        report = _report_path(args.report, args.format) if args.report else out.with_name(f"{out.stem}.report{ext}")
        written += emit_report([table], report, args.format, {"n_docs": len(acc_content)})
    inputs = {"model": args.model, "summarizer": args.summarizer, "test": args.test}
    inputs.update({k: getattr(args, k) for k in ("summaries", "pairs") if getattr(args, k)})
    return written, inputs


def cmd_synth(args):
    seed = _seed(args)
    try:
        spec = PlantedSpec(num_states=args.states, vocab_size=args.vocab, overlap=args.overlap,
                           self_prob=args.self_prob, n_docs=args.n_docs,
                           summary_states=tuple(args.summary_states), seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    paths = write_planted(generate_corpus(spec), out, args.name)
    return list(paths.values()), {}


def cmd_size_sweep(args):
    if not args.sizes or min(args.sizes) < 2:
        raise UsageError("--sizes needs model sizes ≥ 2")
    base = _config(args)
    cap = _cap(args)
    jobs = _jobs(args)
    train, test = _load(args.corpus, "corpus"), _load(args.test, "test")
    with_summaries = bool(args.summaries or args.pairs or args.test_summaries or args.test_pairs)
    if with_summaries:
        _check_summary_flags(args)
        train_pairs = _pairs(args.corpus, args.summaries, args.pairs, args.align_threshold)
        test_pairs = _pairs(args.test, args.test_summaries, args.test_pairs, args.align_threshold)
    rows = []
    for m in args.sizes:
        config = TrainConfig(base.k, base.T, base.delta1, base.delta2, base.max_iterations, n_states=m)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = build_content_model(train, config).model
        row = {"m": m, "oso_pred_rate": evaluate_ordering(model, test, cap, jobs).prediction_rate,
               "extraction_accuracy": None}
        if with_summaries:
            summ = train_summarizer(model, train_pairs, args.min_support)
            row["extraction_accuracy"] = float(np.mean([
                extraction_accuracy(summarize(model, summ, p.full, len(p.gold_indices)), p.gold_indices)
                for p in test_pairs]))
        rows.append(row)
    written = emit_report([size_sweep_table(rows)], _report_path(args.out, args.format), args.format)
    inputs = {"corpus": args.corpus, "test": args.test}
    inputs.update({k: getattr(args, k) for k in ("summaries", "pairs", "test_summaries", "test_pairs")
                   if getattr(args, k)})
    return written, inputs


def cmd_learning_curve(args):
    config = _config(args)
    cap = _cap(args)
    jobs = _jobs(args)
    train, test = _load(args.corpus, "corpus"), _load(args.test, "test")
    sizes = args.sizes or sorted({max(2, round(len(train) * f)) for f in (0.1, 0.25, 0.5, 0.75, 1.0)})
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            rows = learning_curve(train, config, sizes, test, cap, _seed(args), jobs)
    except ValueError as exc:
        if "training size" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    written = emit_report([learning_curve_table(rows)], _report_path(args.out, args.format), args.format)
    return written, {"corpus": args.corpus, "test": args.test}


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contentmodels", description="Content models for ordering and summarization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="split, tokenize and cache a raw corpus")
    p.add_argument("--corpus", required=True, help="directory of .txt files or JSONL")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="induce a content model")
    p.add_argument("--corpus", required=True)
    _add_train_flags(p)
    p.add_argument("--n-states", type=int, default=None, help="force this many states (etcetera included)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="grid search on a development set")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dev", required=True)
    _add_train_flags(p, grid=True)
    _add_cap_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("order-eval", help="information-ordering evaluation")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--corpus", help="training corpus; when given, the bigram baseline is evaluated too")
    p.add_argument("--domain", help="domain name used in the report (default: test file stem)")
    p.add_argument("--report", help="alias of --out")
    _add_cap_flags(p)
    _add_common(p, out_required=False)
    p.set_defaults(func=cmd_order_eval)

    def summary_flags(p):
        p.add_argument("--summaries", help="summary documents (same formats as a corpus)")
        p.add_argument("--pairs", help='JSONL of {"full": doc_id, "summary": doc_id}')
        p.add_argument("--min-support", type=int, default=3, help="articles a state must occur in")
        p.add_argument("--align-threshold", type=float, default=0.5, help="minimum alignment cosine")

    p = sub.add_parser("summarize-train", help="estimate per-state summary probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True, help="full articles")
    summary_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_summarize_train)

    p = sub.add_parser("summarize", help="extract summaries; scores them when gold pairs are given")
    p.add_argument("--model", required=True)
    p.add_argument("--summarizer", required=True, help="output of summarize-train")
    p.add_argument("--test", required=True)
    p.add_argument("--ell", type=int, default=None, help="summary length in sentences")
    p.add_argument("--report", help="accuracy report path")
    summary_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("synth", help="generate a planted-HMM corpus")
    p.add_argument("--states", type=int, default=PlantedSpec.num_states)
    p.add_argument("--vocab", type=int, default=PlantedSpec.vocab_size, help="words per state")
    p.add_argument("--overlap", type=float, default=PlantedSpec.overlap)
    p.add_argument("--self-prob", type=float, default=PlantedSpec.self_prob)
    p.add_argument("--n-docs", type=int, default=PlantedSpec.n_docs)
    p.add_argument("--summary-states", type=int, nargs="+", default=list(PlantedSpec.summary_states))
    p.add_argument("--name", default="corpus", help="file name stem")
    _add_common(p)
    p.set_defaults(func=cmd_synth, seed=PlantedSpec.seed)

    p = sub.add_parser("size-sweep", help="ordering and summarization versus model size")
    p.add_argument("--corpus", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--sizes", type=int, nargs="+", required=True, help="state counts to try")
    p.add_argument("--test-summaries")
    p.add_argument("--test-pairs")
    summary_flags(p)
    _add_train_flags(p)
    _add_cap_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_size_sweep)

    p = sub.add_parser("learning-curve", help="ordering versus training-set size")
    p.add_argument("--corpus", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--sizes", type=int, nargs="+", help="training-set sizes")
    _add_train_flags(p)
    _add_cap_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_learning_curve)
    return parser


def _input_hashes(inputs: dict) -> dict:
    return {name: sha256_path(path) for name, path in inputs.items() if path and Path(path).exists()}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "order-eval" and not (args.out or args.report):
        print("error: one of --out or --report is required", file=sys.stderr)
        return 1
    start = time.perf_counter()
    try:
        written, inputs = args.func(args)
        config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
        manifest = RunManifest(args.command, config, _input_hashes(inputs), _seed(args), __version__)
        manifest.record_outputs(written)
        manifest.wall_time = round(time.perf_counter() - start, 3)
        target = Path(args.out or args.report)
        manifest.write(_manifest_path(target if target.is_dir() else written[0]))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ReportError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
