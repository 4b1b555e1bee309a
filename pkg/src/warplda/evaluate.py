"""Model quality metrics and the per-iteration metrics stream.

The quality score is the log of the joint probability of words and
assignments with the mixing proportions and topic distributions integrated
out: a sum of log-gamma count terms per document and per topic. Terms whose
count is zero contribute exactly zero and are skipped.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "IterationMetrics",
    "log_joint_likelihood",
    "log_joint_likelihood_matrix",
    "record_metrics",
    "load_metrics",
]


@dataclass(frozen=True)
class IterationMetrics:
    """One iteration's record in the metrics stream."""

    iteration: int
    log_likelihood: float
    seconds: float
    tokens_per_second: float


def log_joint_likelihood(doc_topic_counts, word_topic_counts, topic_totals,
                         alpha, beta):
    """Integrated log joint from dense count matrices.

    doc_topic_counts: (docs, topics); word_topic_counts: (vocab, topics);
    topic_totals: (topics,). alpha and beta are the symmetric smoothing
    parameters; their totals use the topic count and vocabulary size taken
    from the matrix shapes.
    """
    doc_topic_counts = np.ascontiguousarray(doc_topic_counts, np.int64)
    word_topic_counts = np.ascontiguousarray(word_topic_counts, np.int64)
    topic_totals = np.ascontiguousarray(topic_totals, np.int64)
    topics = topic_totals.size
    vocab = word_topic_counts.shape[0]
    if doc_topic_counts.shape[1] != topics or word_topic_counts.shape[1] != topics:
        raise ValueError("count matrices disagree on topic dimension")
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    return float(_kernels.loglik_dense(doc_topic_counts, word_topic_counts,
                                       topic_totals, alpha, beta,
                                       topics * alpha, vocab * beta))


def log_joint_likelihood_matrix(matrix, alpha, beta, topics):
    """Integrated log joint straight off the matrix, no dense mirrors.

    Streams per-document and per-word sparse count tables; cost is linear
    in the token total regardless of the topic count. topics must be the
    model's topic count (it scales the smoothing totals, so it matters
    even when some topics are unused).
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    totals = np.bincount(matrix.col_assign, minlength=topics).astype(np.int64)
    doc_side = _kernels.loglik_doc_side(matrix.col_assign, matrix.row_ref,
                                        matrix.row_ptr, topics, alpha,
                                        topics * alpha)
    word_side = _kernels.loglik_word_side(matrix.col_assign, matrix.col_ptr,
                                          totals, topics, beta,
                                          matrix.cols * beta)
    return float(doc_side + word_side)


def record_metrics(sink, metrics):
    """Append one JSON line (fixed key order) and flush the sink."""
    line = json.dumps({
        "iteration": metrics.iteration,
        "log_likelihood": metrics.log_likelihood,
        "seconds": metrics.seconds,
        "tokens_per_second": metrics.tokens_per_second,
    })
    sink.write(line + "\n")
    if hasattr(sink, "flush"):
        sink.flush()


def load_metrics(fileobj):
    """Parse a metrics stream back into IterationMetrics records."""
    records = []
    for line in fileobj:
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(IterationMetrics(
            iteration=obj["iteration"],
            log_likelihood=obj["log_likelihood"],
            seconds=obj["seconds"],
            tokens_per_second=obj["tokens_per_second"]))
    return records
