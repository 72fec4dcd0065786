"""Command-line front end.

Subcommands: train, parse, eval, sweep, bench, inspect, synth.  Every
command is deterministic given its config and seeds when running
single-threaded; outputs land in a run directory named by the manifest
digest, so reruns with identical inputs overwrite byte-identical metric
files (timing columns exempt).
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench as benchmod
from . import checkpoint, corpus, evaluator, kernels, trainer
from .config import ConfigError, RunConfig, load_config, make_manifest
from .decoder import ParseTree, parse_mbr
from .errors import ShapeError, TreebankError
from .grammar import random_td_pcfg
from .inside import Sentence
from .parameterizer import emit_grammar, parameter_count
from .trainer import params_from_result


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _run_dir(base: str, manifest) -> Path:
    path = Path(base) / f"{manifest.command}-{manifest.digest()[:12]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_split(cfg: RunConfig, path: str) -> list[corpus.TreeNode]:
    trees = corpus.preprocess(
        corpus.read_treebank(path),
        punct_tags=cfg.data.punct_tags,
        min_tokens=cfg.data.min_tokens,
    )
    if cfg.data.max_tokens:
        trees = [t for t in trees if len(t.leaves()) <= cfg.data.max_tokens]
    return trees


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return f"{x:.10g}"


# ---------------------------------------------------------------------------
# prediction records: one line per sentence
#   <id>\t<token count>\t<log likelihood>\t<i,j,label;...>


def format_prediction(idx: int, length: int, loglik: float, tree: ParseTree | None) -> str:
    spans = ""
    if tree is not None:
        spans = ";".join(
            f"{i},{j},{'-' if sym is None else sym}" for i, j, sym in tree.internal_spans
        )
    return f"{idx}\t{length}\t{_format_float(loglik)}\t{spans}"


def parse_prediction_line(line: str) -> tuple[int, int, float, ParseTree]:
    ident, length, loglik, spans = line.rstrip("\n").split("\t")
    length = int(length)
    triples = []
    if spans:
        for part in spans.split(";"):
            i, j, sym = part.split(",")
            triples.append((int(i), int(j), None if sym == "-" else int(sym)))
    return int(ident), length, float(loglik), ParseTree(length=length, spans=tuple(triples))


def read_predictions(path) -> list[tuple[int, int, float, ParseTree]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(parse_prediction_line(line))
    return out


# ---------------------------------------------------------------------------
# train


def _train_pipeline(cfg: RunConfig, config_path: str, out_override: str | None):
    for split in ("train", "dev"):
        if not getattr(cfg.data, split):
            raise ConfigError(f"config key [data] {split} is required")
    train_trees = _load_split(cfg, cfg.data.train)
    dev_trees = _load_split(cfg, cfg.data.dev)
    if not train_trees:
        raise ConfigError("training treebank is empty after preprocessing")
    vocab = corpus.build_vocab(train_trees, size=cfg.data.vocab_size)
    model_cfg = replace(cfg.model, q=vocab.size)
    print(f"model parameters: {parameter_count(model_cfg)}")
    train_sents = corpus.encode_corpus(train_trees, vocab)
    dev_sents = corpus.encode_corpus(dev_trees, vocab)

    manifest = make_manifest(
        "train", cfg.raw_text, cfg.train.seeds,
        {"config": config_path, "train": cfg.data.train, "dev": cfg.data.dev},
    )
    out_dir = _run_dir(out_override or cfg.run.out, manifest)
    result = trainer.train(cfg.train, model_cfg, train_sents, dev_sents)

    for res in result.per_seed:
        params = params_from_result(result, res)
        ck = out_dir / f"checkpoint-seed{res.seed}.ckpt"
        checkpoint.save_model(
            ck, params, vocab=vocab,
            extra_meta={"best_epoch": str(res.best_epoch),
                        "best_dev_perplexity": _format_float(res.best_perplexity)},
        )
        manifest.output_paths.append(str(ck))
    hist = out_dir / "history.tsv"
    with open(hist, "w", encoding="utf-8") as fh:
        fh.write("seed\tepoch\ttrain_nll\tdev_perplexity\twall_seconds\n")
        for rec in result.history_rows():
            fh.write(
                f"{rec.seed}\t{rec.epoch}\t{_format_float(rec.train_nll)}\t"
                f"{_format_float(rec.dev_perplexity)}\t{rec.wall_seconds:.3f}\n"
            )
    manifest.output_paths.append(str(hist))
    manifest.write(out_dir / "manifest.json")
    print(f"run directory: {out_dir}")
    for res in result.per_seed:
        print(
            f"seed {res.seed}: best epoch {res.best_epoch}, "
            f"dev perplexity {res.best_perplexity:.4f}"
        )
    return out_dir, result


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    _train_pipeline(cfg, args.config, args.out)
    return 0


# ---------------------------------------------------------------------------
# parse


def cmd_parse(args) -> int:
    params, vocab, _meta = checkpoint.load_model(args.checkpoint)
    if vocab is None:
        return _fail("checkpoint carries no vocabulary; cannot encode raw text")
    g = emit_grammar(params)
    with open(args.input, encoding="utf-8") as fh:
        lines = [line.split() for line in fh if line.strip()]

    def decode(item):
        idx, toks = item
        ids = vocab.encode(toks)
        if len(ids) < 2:
            return format_prediction(idx, len(ids), float("-inf"), None)
        tree, loglik = parse_mbr(g, Sentence(tuple(ids)))
        return format_prediction(idx, len(ids), loglik, tree)

    items = list(enumerate(lines))
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            records = list(pool.map(decode, items))
    else:
        records = [decode(item) for item in items]
    with open(args.output, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec + "\n")
    print(f"parsed {len(records)} sentences -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _gold_for_eval(path: str, punct_tags, min_tokens: int):
    trees = corpus.preprocess(corpus.read_treebank(path), punct_tags=punct_tags,
                              min_tokens=min_tokens)
    return trees, [corpus.gold_spans(t) for t in trees]


def cmd_eval(args) -> int:
    punct = frozenset(args.punct_tags.split()) if args.punct_tags else corpus.DEFAULT_PUNCT_TAGS
    _trees, golds = _gold_for_eval(args.gold, punct, args.min_tokens)
    records = read_predictions(args.predictions)
    if len(records) != len(golds):
        return _fail(
            f"mismatched sentence counts: {len(golds)} gold sentences but "
            f"{len(records)} predictions (first mismatch at index "
            f"{min(len(golds), len(records))})"
        )
    preds = []
    for pos, (gold, (_, length, _, tree)) in enumerate(zip(golds, records)):
        if gold.length != length:
            return _fail(
                f"sentence {pos}: gold has {gold.length} tokens but prediction has {length}"
            )
        preds.append(tree)
    mean_f1, skipped = evaluator.corpus_f1(golds, preds)
    recall = evaluator.recall_by_label(golds, preds)
    report = evaluator.EvalReport(
        mean_f1=mean_f1, per_seed_f1=[mean_f1],
        f1_std=0.0, recall=recall, skipped=skipped,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv = out_dir / "report.tsv"
    with open(tsv, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\tseed\n")
        for metric, value, seed in report.rows():
            fh.write(f"{metric}\t{value}\t{seed}\n")
    txt = out_dir / "report.txt"
    with open(txt, "w", encoding="utf-8") as fh:
        fh.write(f"mean sentence-level F1: {mean_f1:.2f}\n")
        fh.write(f"sentences skipped (no nontrivial gold spans): {skipped}\n")
        for label, value in recall.items():
            shown = "undefined" if value is None else f"{value:.2f}"
            fh.write(f"recall {label}: {shown}\n")
    print(f"mean F1 {mean_f1:.2f} ({skipped} skipped) -> {tsv}")
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    p_values = [int(x) for x in args.p_values.replace(",", " ").split()]
    if not cfg.data.test:
        raise ConfigError("config key [data] test is required for sweep")
    test_trees = _load_split(cfg, cfg.data.test)
    golds = [corpus.gold_spans(t) for t in test_trees]
    manifest = make_manifest(
        "sweep", cfg.raw_text + f"\np_values={p_values}", cfg.train.seeds,
        {"config": args.config, "train": cfg.data.train,
         "dev": cfg.data.dev, "test": cfg.data.test},
    )
    out_dir = _run_dir(args.out or cfg.run.out, manifest)

    train_trees = _load_split(cfg, cfg.data.train)
    dev_trees = _load_split(cfg, cfg.data.dev)
    vocab = corpus.build_vocab(train_trees, size=cfg.data.vocab_size)
    train_sents = corpus.encode_corpus(train_trees, vocab)
    dev_sents = corpus.encode_corpus(dev_trees, vocab)
    test_sents = corpus.encode_corpus(test_trees, vocab)

    rows = []
    for p in p_values:
        model_cfg = replace(cfg.model, p=p, n=max(1, p // 2), q=vocab.size)
        result = trainer.train(cfg.train, model_cfg, train_sents, dev_sents)
        f1s, ppls = [], []
        for res in result.per_seed:
            params = params_from_result(result, res)
            g = emit_grammar(params)
            preds = [parse_mbr(g, s)[0] for s in test_sents]
            mean_f1, _ = evaluator.corpus_f1(golds, preds)
            f1s.append(mean_f1)
            ppls.append(res.best_perplexity)
        rows.append((p, model_cfg.n, model_cfg.d,
                     sum(f1s) / len(f1s), statistics.median(ppls)))
        print(f"p={p}: mean F1 {rows[-1][3]:.2f}, median dev perplexity {rows[-1][4]:.3f}")

    tsv = out_dir / "sweep.tsv"
    with open(tsv, "w", encoding="utf-8") as fh:
        fh.write("p\tn\td\tmean_f1\tmedian_dev_perplexity\n")
        for p, n, d, f1, ppl in rows:
            fh.write(f"{p}\t{n}\t{d}\t{_format_float(f1)}\t{_format_float(ppl)}\n")
    manifest.output_paths.append(str(tsv))
    manifest.write(out_dir / "manifest.json")
    print(f"sweep results -> {tsv}")
    return 0


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    backends = (
        kernels.available_backends() if args.backend == "all" else (args.backend,)
    )
    for name in backends:
        kernels.get_backend(name)  # validate
    dense_m = tuple(int(x) for x in args.dense_m.replace(",", " ").split())
    factored_m = tuple(int(x) for x in args.factored_m.replace(",", " ").split())
    rows, exponents = benchmod.run_benchmark(
        backends=backends, dense_m=dense_m, factored_m=factored_m,
        length=args.length, repetitions=args.reps,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / "bench.tsv"
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("path\tbackend\tm\td\tlength\tmedian_seconds\trepetitions\n")
        for row in rows:
            fh.write(
                f"{row.path}\t{row.backend}\t{row.m}\t{row.d}\t{row.length}\t"
                f"{row.median_seconds:.6e}\t{row.repetitions}\n"
            )
    fits = out_dir / "exponents.tsv"
    with open(fits, "w", encoding="utf-8") as fh:
        fh.write("path\tbackend\texponent\n")
        for (path, backend), slope in sorted(exponents.items()):
            fh.write(f"{path}\t{backend}\t{slope:.4f}\n")
            print(f"{path:9s} [{backend}] time ~ m^{slope:.2f}")
    print(f"timings -> {table}")
    return 0


# ---------------------------------------------------------------------------
# inspect


def cmd_inspect(args) -> int:
    params, vocab, _meta = checkpoint.load_model(args.checkpoint)
    if vocab is None:
        return _fail("checkpoint carries no vocabulary")
    punct = frozenset(args.punct_tags.split()) if args.punct_tags else corpus.DEFAULT_PUNCT_TAGS
    trees, golds = _gold_for_eval(args.treebank, punct, 2)
    if not trees:
        return _fail("treebank is empty after preprocessing")
    g = emit_grammar(params)
    token_lists = [t.leaves() for t in trees]
    preds = [parse_mbr(g, Sentence(tuple(vocab.encode(toks))))[0] for toks in token_lists]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    matrix = evaluator.label_correspondence(golds, preds, top_k=args.top_k)
    mat_path = out_dir / "correspondence.tsv"
    with open(mat_path, "w", encoding="utf-8") as fh:
        fh.write("gold_label\t" + "\t".join(matrix.column_symbols) + "\n")
        for label, row in zip(matrix.row_labels, matrix.matrix):
            fh.write(label + "\t" + "\t".join(f"{v:.6f}" for v in row) + "\n")

    from collections import Counter

    freq = Counter()
    for pred in preds:
        for _i, _j, sym in pred.internal_spans:
            freq[sym] += 1
    clus_path = out_dir / "clusters.txt"
    with open(clus_path, "w", encoding="utf-8") as fh:
        for sym, _count in freq.most_common(args.clusters):
            fh.write(f"NT-{sym}:\n")
            for phrase, count in evaluator.cluster_report(
                token_lists, preds, sym, top_n=args.top_phrases
            ):
                fh.write(f"  {count:5d}  {phrase}\n")
    print(f"correspondence -> {mat_path}\nclusters -> {clus_path}")
    return 0


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    if args.style == "demo":
        g = corpus.demo_grammar(seed=args.seed)
    else:
        g = random_td_pcfg(n=args.n, p=args.p, q=args.q, d=args.d,
                           seed=args.seed, alpha=args.alpha)
    counts = [int(c) for c in args.counts.replace(",", " ").split()]
    if len(counts) != 3:
        return _fail("--counts needs three values: train,dev,test")
    total = sum(counts)
    trees = corpus.sample_corpus(
        g, count=total, max_length=args.max_length, seed=args.seed + 1,
        min_length=args.min_length,
    )
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    splits = {
        "train": trees[: counts[0]],
        "dev": trees[counts[0]: counts[0] + counts[1]],
        "test": trees[counts[0] + counts[1]:],
    }
    for name, subset in splits.items():
        path = Path(f"{prefix}-{name}.trees")
        corpus.write_treebank(subset, path)
        print(f"{name}: {len(subset)} trees -> {path}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tdpcfg",
        description="Tensor-decomposed PCFG induction: train, parse, evaluate.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a treebank (multi-seed)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override [run] out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("parse", help="MBR-parse raw tokenized text")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="one tokenized sentence per line")
    p.add_argument("--output", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("eval", help="score predictions against a gold treebank")
    p.add_argument("--gold", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", default="eval-out")
    p.add_argument("--punct-tags", default=None,
                   help="space-separated preterminal tags to strip (default: standard set)")
    p.add_argument("--min-tokens", type=int, default=2)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate across preterminal counts")
    p.add_argument("--config", required=True)
    p.add_argument("--p-values", required=True, help="comma-separated preterminal counts")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("bench", help="time the inside kernels and fit scaling exponents")
    p.add_argument("--out", default="bench-out")
    p.add_argument("--backend", default="all",
                   choices=("all",) + kernels.available_backends())
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--dense-m", default="24,32,48,64")
    p.add_argument("--factored-m", default="64,128,256,512")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("inspect", help="correspondence matrix and constituent clusters")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--treebank", required=True)
    p.add_argument("--out", default="inspect-out")
    p.add_argument("--top-k", type=int, default=30, help="nonterminal columns before OTHER")
    p.add_argument("--clusters", type=int, default=8, help="nonterminals to list")
    p.add_argument("--top-phrases", type=int, default=15)
    p.add_argument("--punct-tags", default=None)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("synth", help="sample a synthetic treebank from a built-in grammar")
    p.add_argument("--out", required=True, help="path prefix for <out>-{train,dev,test}.trees")
    p.add_argument("--style", default="demo", choices=("demo", "random"),
                   help="demo: hand-built hierarchical grammar; random: Dirichlet factors")
    p.add_argument("--counts", default="500,100,100")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--p", type=int, default=16)
    p.add_argument("--q", type=int, default=40)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--alpha", type=float, default=0.08,
                   help="Dirichlet concentration; small = peaked rules")
    p.add_argument("--max-length", type=int, default=12)
    p.add_argument("--min-length", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ShapeError, TreebankError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
