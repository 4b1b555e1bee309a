"""Command-line interface: train, eval, partition-bench, topics."""

import argparse
import os
import sys

import numpy as np

from . import evaluate
from .corpus import CorpusFormatError, load_corpus
from .matrixframe import (dynamic_partition, greedy_partition,
                          static_partition)
from .sampler import TrainConfig, load_checkpoint, train

__all__ = ["run", "main"]

THREADS_ENV = "WARPLDA_THREADS"


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="warplda",
        description="Train and inspect topic models over bag-of-words corpora.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a docword/vocab pair")
    p.add_argument("--docword", required=True, help="docword file (optionally gzipped)")
    p.add_argument("--vocab", required=True, help="vocabulary file (optionally gzipped)")
    p.add_argument("--topics", type=int, required=True)
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--proposals", type=int, default=2,
                   help="stored proposals per token per phase (default 2)")
    p.add_argument("--alpha", type=float, default=None,
                   help="document smoothing (default 50 / topics)")
    p.add_argument("--beta", type=float, default=0.01,
                   help="word smoothing (default 0.01)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=1,
                   help=f"worker threads (env {THREADS_ENV} overrides)")
    p.add_argument("--metrics", default=None,
                   help="write one JSON line of metrics per iteration here")
    p.add_argument("--checkpoint", default=None,
                   help="write the final state here")

    p = sub.add_parser("eval", help="recompute the quality score of a checkpoint")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("partition-bench",
                       help="compare partitioning strategies on skewed weights")
    p.add_argument("--items", type=int, default=100_000)
    p.add_argument("--exponent", type=float, default=1.0,
                   help="power-law exponent of the synthetic weights")
    p.add_argument("--scale", type=float, default=1e6,
                   help="weight of the heaviest synthetic item")
    p.add_argument("--docword", default=None,
                   help="use word frequencies from this file as weights instead")
    p.add_argument("--workers", default="8,32,64",
                   help="comma-separated worker counts")
    p.add_argument("--shuffles", type=int, default=20,
                   help="number of shuffles averaged for the baselines")
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("topics", help="print top words per topic from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", default=None, help="write TSV here instead of stdout")
    return parser


def _cmd_train(args):
    with_corpus = load_corpus(args.docword, args.vocab)
    threads = int(os.environ.get(THREADS_ENV, args.threads))
    cfg = TrainConfig(topics=args.topics, iterations=args.iterations,
                      proposals=args.proposals, alpha=args.alpha,
                      beta=args.beta, seed=args.seed, threads=threads)
    sink = open(args.metrics, "w") if args.metrics else None
    try:
        model = train(with_corpus, cfg, metrics_sink=sink,
                      checkpoint_path=args.checkpoint)
    finally:
        if sink is not None:
            sink.close()
    loglik = evaluate.log_joint_likelihood(
        model.doc_topic_counts, model.word_topic_counts, model.topic_totals,
        cfg.alpha, cfg.beta)
    print(f"trained {cfg.topics} topics on {with_corpus.token_total} tokens "
          f"in {cfg.iterations} iterations, log_likelihood {loglik:.6f}")
    return 0


def _cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    loglik = evaluate.log_joint_likelihood_matrix(
        ckpt.matrix, ckpt.alpha, ckpt.beta, ckpt.topics)
    print(f"iteration {ckpt.iteration} log_likelihood {loglik:.6f}")
    return 0


def _bench_weights(args):
    if args.docword:
        # word occurrence totals from the docword file
        from .corpus import open_maybe_gzip
        counts = {}
        with open_maybe_gzip(args.docword) as f:
            for _ in range(3):
                next(f)
            for line in f:
                if not line.strip():
                    continue
                _, w, c = line.split()
                counts[int(w)] = counts.get(int(w), 0) + int(c)
        top = max(counts) if counts else 0
        return np.asarray([counts.get(w, 0) for w in range(1, top + 1)], np.int64)
    ranks = np.arange(1, args.items + 1, dtype=np.float64)
    return np.maximum(1, np.round(args.scale / ranks ** args.exponent)).astype(np.int64)


def _cmd_partition_bench(args):
    weights = _bench_weights(args)
    worker_counts = [int(x) for x in args.workers.split(",") if x]
    print("workers\tgreedy\tstatic\tdynamic")
    for workers in worker_counts:
        greedy = greedy_partition(weights, workers).imbalance
        rng = np.random.default_rng(args.seed)
        static_mean = float(np.mean([
            static_partition(weights, workers, rng).imbalance
            for _ in range(args.shuffles)]))
        rng = np.random.default_rng(args.seed)
        dynamic_mean = float(np.mean([
            dynamic_partition(weights, workers, rng).imbalance
            for _ in range(args.shuffles)]))
        print(f"{workers}\t{greedy:.6f}\t{static_mean:.6f}\t{dynamic_mean:.6f}")
    return 0


def _cmd_topics(args):
    ckpt = load_checkpoint(args.checkpoint)
    m = ckpt.matrix
    topics = ckpt.topics
    word_topic = np.bincount(
        m.col_of.astype(np.int64) * topics + m.col_assign,
        minlength=m.cols * topics).reshape(m.cols, topics)
    phi = (word_topic + ckpt.beta) / (ckpt.topic_totals + m.cols * ckpt.beta)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for k in range(topics):
            column = phi[:, k]
            top = min(args.top, m.cols)
            best = np.argpartition(-column, top - 1)[:top]
            best = best[np.lexsort((best, -column[best]))]
            for w in best:
                name = ckpt.vocab[w] if w < len(ckpt.vocab) else f"w{w}"
                out.write(f"{k}\t{name}\t{column[w]:.6f}\n")
    finally:
        if args.out:
            out.close()
    return 0


def run(argv=None):
    """Entry point; returns a process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "partition-bench": _cmd_partition_bench,
        "topics": _cmd_topics,
    }
    try:
        return handlers[args.command](args)
    except CorpusFormatError as exc:
        print(f"error: malformed corpus: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
