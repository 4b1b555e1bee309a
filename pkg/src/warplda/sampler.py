"""Metropolis-Hastings trainer over the token-topic matrix.

One training iteration is a word phase followed by a document phase. Each
phase visits one axis of the matrix, accepts the proposals stored by the
previous phase against that axis's local topic counts, then draws and
stores fresh proposals for the next phase. Randomness is a pure function
of (seed, iteration, phase, token, purpose, counter), so the result is
independent of visit order and thread count.
"""

import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, evaluate
from .countstore import GlobalState
from .matrixframe import (MatrixBuilder, dump_matrix, greedy_partition,
                          load_matrix)

__all__ = [
    "TrainConfig",
    "TrainedModel",
    "RngKey",
    "rng_at",
    "rng_uniform",
    "matrix_from_corpus",
    "init_assignments",
    "word_phase",
    "document_phase",
    "train",
    "extract_model",
    "dense_counts",
    "mh_accept",
    "mh_acceptance_ratio",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "PHASE_INIT",
    "PHASE_WORD",
    "PHASE_DOC",
    "PHASE_CGS",
    "PUR_ASSIGN",
    "PUR_PROPOSAL",
    "PUR_ACCEPT",
    "PUR_COIN",
    "PUR_VALUE1",
    "PUR_VALUE2",
]

PHASE_INIT = _kernels.PHASE_INIT
PHASE_WORD = _kernels.PHASE_WORD
PHASE_DOC = _kernels.PHASE_DOC
PHASE_CGS = _kernels.PHASE_CGS

PUR_ASSIGN = _kernels.PUR_ASSIGN
PUR_PROPOSAL = _kernels.PUR_PROPOSAL
PUR_ACCEPT = _kernels.PUR_ACCEPT
PUR_COIN = _kernels.PUR_COIN
PUR_VALUE1 = _kernels.PUR_VALUE1
PUR_VALUE2 = _kernels.PUR_VALUE2

_CKPT_MAGIC = b"WLCP0001"


@dataclass(frozen=True)
class RngKey:
    """Address of one random value in the keyed generator."""

    seed: int
    iteration: int
    phase: int
    token: int
    purpose: int
    counter: int = 0


def rng_at(key):
    """The 64-bit value at a key; a pure function, no stream state."""
    prefix = _kernels.phase_prefix(np.uint64(key.seed), np.uint64(key.iteration),
                                   np.uint64(key.phase))
    return int(_kernels.draw_u64(np.uint64(prefix), np.uint64(key.token),
                                 key.purpose, key.counter))


def rng_uniform(key):
    """The same value mapped to [0, 1) with 53 usable bits."""
    return (rng_at(key) >> 11) * _kernels._U01


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and execution settings for training.

    alpha defaults to 50 / topics when not given; beta to 0.01. proposals
    is the number of stored proposal slots per token per phase.
    """

    topics: int
    iterations: int
    proposals: int = 2
    alpha: float = None
    beta: float = 0.01
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        if self.topics < 1:
            raise ValueError("topics must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.proposals < 1:
            raise ValueError("proposals must be positive")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 50.0 / self.topics)
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be positive")


@dataclass
class TrainedModel:
    """Final point estimates and the counts they were read from."""

    doc_topic: np.ndarray      # (docs, topics), rows sum to 1
    topic_word: np.ndarray     # (topics, vocab), rows sum to 1
    doc_topic_counts: np.ndarray
    word_topic_counts: np.ndarray
    topic_totals: np.ndarray


def matrix_from_corpus(corpus, proposal_slots):
    """Lay out a corpus as a token-topic matrix in file order."""
    builder = MatrixBuilder(corpus.doc_count, corpus.vocab_size, proposal_slots)
    doc_ids, word_ids = corpus.token_arrays()
    builder.add_entries(doc_ids, word_ids)
    return builder.finalize_layout()


def _keyed_topics(base, purpose, counter, topic_limit):
    packed = np.uint64((purpose << 48) | counter)
    v = _kernels.mix64_vec(base ^ packed)
    u = (v >> np.uint64(11)).astype(np.float64) * _kernels._U01
    t = (u * topic_limit).astype(np.int64)
    np.minimum(t, topic_limit - 1, out=t)
    return t.astype(np.int32)


def init_assignments(matrix, cfg):
    """Draw uniform assignments and first-round proposals for every token.

    Keyed by insertion id, so any layout of the same corpus initializes
    identically. Returns the GlobalState holding the initial topic totals.
    """
    prefix = np.uint64(_kernels.phase_prefix(np.uint64(cfg.seed), np.uint64(0),
                                             np.uint64(PHASE_INIT)))
    base = _kernels.mix64_vec(prefix ^ matrix.col_entry.astype(np.uint64))
    matrix.col_assign[:] = _keyed_topics(base, PUR_ASSIGN, 0, cfg.topics)
    for i in range(matrix.proposal_slots):
        matrix.col_props[:, i] = _keyed_topics(base, PUR_PROPOSAL, i, cfg.topics)
    totals = np.bincount(matrix.col_assign, minlength=cfg.topics).astype(np.int64)
    return GlobalState(totals)


def word_phase(matrix, state, cfg, iteration, *, plan=None, pool=None):
    """Run the word phase; returns the topic totals it accumulated.

    Accepts the stored document-side proposals against per-word counts,
    refreshes those counts, and draws word-side proposals for the next
    phase. The caller publishes the returned totals to the state.
    """
    if state.topic_limit != cfg.topics:
        raise ValueError("state topic dimension does not match config")
    vbeta = matrix.cols * cfg.beta
    kbeta = cfg.topics * cfg.beta
    prefix = np.uint64(_kernels.phase_prefix(np.uint64(cfg.seed),
                                             np.uint64(iteration),
                                             np.uint64(PHASE_WORD)))
    snapshot = state.snapshot

    def visit(view, acc):
        _kernels.word_phase_column(
            matrix.col_assign, matrix.col_props, matrix.col_entry,
            view.start, view.stop, cfg.topics, cfg.proposals, cfg.beta,
            vbeta, kbeta, snapshot, acc, prefix)

    return matrix.visit_by_column(
        visit, plan=plan, pool=pool,
        make_accumulator=lambda: np.zeros(cfg.topics, np.int64))


def document_phase(matrix, state, cfg, iteration, *, plan=None, pool=None):
    """Run the document phase; mirror image of word_phase over rows."""
    if state.topic_limit != cfg.topics:
        raise ValueError("state topic dimension does not match config")
    vbeta = matrix.cols * cfg.beta
    kalpha = cfg.topics * cfg.alpha
    prefix = np.uint64(_kernels.phase_prefix(np.uint64(cfg.seed),
                                             np.uint64(iteration),
                                             np.uint64(PHASE_DOC)))
    snapshot = state.snapshot

    def visit(view, acc):
        _kernels.doc_phase_row(
            matrix.col_assign, matrix.col_props, matrix.col_entry,
            matrix.row_ref, view.start, view.stop, cfg.topics, cfg.proposals,
            cfg.alpha, vbeta, kalpha, snapshot, acc, prefix)

    return matrix.visit_by_row(
        visit, plan=plan, pool=pool,
        make_accumulator=lambda: np.zeros(cfg.topics, np.int64))


def mh_acceptance_ratio(current, proposed, kind, counts, topic_totals,
                        alpha, beta, vocab_size):
    """Uncapped acceptance ratio for one stored proposal.

    kind names the proposal's origin. Document-side proposals ("doc") are
    scored against the token's word-topic counts with beta smoothing; the
    proposal mass cancels the document factor of the posterior. Word-side
    proposals ("word") are scored against document-topic counts with alpha
    smoothing. Both carry the inverted topic-total ratio.
    """
    if kind == "doc":
        smooth = beta
    elif kind == "word":
        smooth = alpha
    else:
        raise ValueError(f"kind must be 'doc' or 'word', not {kind!r}")
    get = counts.get if hasattr(counts, "get") else lambda k: counts[k]
    cs = get(current)
    ct = get(proposed)
    vbeta = vocab_size * beta
    return ((ct + smooth) / (cs + smooth)) * (
        (topic_totals[current] + vbeta) / (topic_totals[proposed] + vbeta))


def mh_accept(current, proposed, kind, counts, topic_totals, alpha, beta,
              vocab_size, u):
    """Advance the chain by one accept step; consumes exactly one uniform."""
    ratio = mh_acceptance_ratio(current, proposed, kind, counts, topic_totals,
                                alpha, beta, vocab_size)
    return proposed if u < ratio else current


def dense_counts(matrix, topics):
    """Dense (doc_topic, word_topic) count matrices from the assignments."""
    z = matrix.col_assign.astype(np.int64)
    doc_topic = np.bincount(matrix.col_row.astype(np.int64) * topics + z,
                            minlength=matrix.rows * topics)
    word_topic = np.bincount(matrix.col_of.astype(np.int64) * topics + z,
                             minlength=matrix.cols * topics)
    return (doc_topic.reshape(matrix.rows, topics).astype(np.int32),
            word_topic.reshape(matrix.cols, topics).astype(np.int32))


def extract_model(doc_topic_counts, word_topic_counts, topic_totals, alpha, beta):
    """Posterior point estimates from final counts.

    Document mixtures: (C_dk + alpha) / (L_d + K * alpha). Topic-word
    distributions: (C_wk + beta) / (C_k + V * beta). Raises if the three
    count views disagree about per-topic totals.
    """
    doc_topic_counts = np.asarray(doc_topic_counts)
    word_topic_counts = np.asarray(word_topic_counts)
    topic_totals = np.asarray(topic_totals, np.int64)
    topics = topic_totals.size
    if (doc_topic_counts.shape[1] != topics
            or word_topic_counts.shape[1] != topics):
        raise ValueError("count matrices disagree on topic dimension")
    if (not np.array_equal(doc_topic_counts.sum(axis=0), topic_totals)
            or not np.array_equal(word_topic_counts.sum(axis=0), topic_totals)):
        raise ValueError("inconsistent counts: per-topic totals disagree")
    lengths = doc_topic_counts.sum(axis=1, keepdims=True)
    theta = (doc_topic_counts + alpha) / (lengths + topics * alpha)
    vocab = word_topic_counts.shape[0]
    phi = ((word_topic_counts + beta) / (topic_totals + vocab * beta)).T
    return TrainedModel(doc_topic=theta, topic_word=phi,
                        doc_topic_counts=doc_topic_counts.astype(np.int32),
                        word_topic_counts=word_topic_counts.astype(np.int32),
                        topic_totals=topic_totals)


def train(corpus, cfg, *, metrics_sink=None, checkpoint_path=None, clock=None):
    """Train on a corpus; returns the TrainedModel of the final state.

    metrics_sink, when given, receives one JSON line per iteration through
    evaluate.record_metrics. clock abstracts time.perf_counter so callers
    that need reproducible metrics bytes can inject a deterministic one.
    checkpoint_path, when given, receives the final state.
    """
    if clock is None:
        clock = time.perf_counter
    matrix = matrix_from_corpus(corpus, cfg.proposals)
    state = init_assignments(matrix, cfg)

    pool = None
    col_plan = None
    row_plan = None
    if cfg.threads > 1:
        col_plan = greedy_partition(np.diff(matrix.col_ptr), cfg.threads)
        row_plan = greedy_partition(np.diff(matrix.row_ptr), cfg.threads)
        pool = ThreadPoolExecutor(max_workers=cfg.threads)
    try:
        for iteration in range(1, cfg.iterations + 1):
            started = clock()
            totals = word_phase(matrix, state, cfg, iteration,
                                plan=col_plan, pool=pool)
            state.publish(totals, expected_total=matrix.entry_total)
            totals = document_phase(matrix, state, cfg, iteration,
                                    plan=row_plan, pool=pool)
            state.publish(totals, expected_total=matrix.entry_total)
            elapsed = clock() - started
            if metrics_sink is not None:
                loglik = evaluate.log_joint_likelihood_matrix(
                    matrix, cfg.alpha, cfg.beta, cfg.topics)
                evaluate.record_metrics(metrics_sink, evaluate.IterationMetrics(
                    iteration=iteration,
                    log_likelihood=loglik,
                    seconds=elapsed,
                    tokens_per_second=(matrix.entry_total / elapsed
                                       if elapsed > 0 else 0.0)))
    finally:
        if pool is not None:
            pool.shutdown()

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, matrix, state, cfg,
                        cfg.iterations, corpus.vocab)
    doc_topic, word_topic = dense_counts(matrix, cfg.topics)
    return extract_model(doc_topic, word_topic, state.snapshot,
                         cfg.alpha, cfg.beta)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    """Everything needed to resume evaluation: state plus provenance."""

    matrix: object
    topic_totals: np.ndarray
    topics: int
    alpha: float
    beta: float
    seed: int
    iteration: int
    vocab: tuple


def save_checkpoint(path_or_file, matrix, state, cfg, iteration, vocab):
    """Serialize the trained state; byte-deterministic for equal inputs."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    f = open(path_or_file, "wb") if own else path_or_file
    try:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<qddQq", cfg.topics, cfg.alpha, cfg.beta,
                            cfg.seed, iteration))
        f.write(state.snapshot.astype("<i8").tobytes())
        dump_matrix(matrix, f)
        f.write(struct.pack("<q", len(vocab)))
        for word in vocab:
            raw = word.encode("utf-8")
            f.write(struct.pack("<i", len(raw)))
            f.write(raw)
    finally:
        if own:
            f.close()


def load_checkpoint(path_or_file):
    """Read a checkpoint written by save_checkpoint."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    f = open(path_or_file, "rb") if own else path_or_file
    try:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        topics, alpha, beta, seed, iteration = struct.unpack(
            "<qddQq", f.read(struct.calcsize("<qddQq")))
        totals = np.frombuffer(f.read(8 * topics), "<i8").astype(np.int64)
        matrix = load_matrix(f)
        (n_vocab,) = struct.unpack("<q", f.read(8))
        vocab = []
        for _ in range(n_vocab):
            (n,) = struct.unpack("<i", f.read(4))
            vocab.append(f.read(n).decode("utf-8"))
        recomputed = np.bincount(matrix.col_assign, minlength=topics).astype(np.int64)
        if not np.array_equal(recomputed, totals):
            raise ValueError("checkpoint totals do not match assignments")
        return Checkpoint(matrix=matrix, topic_totals=totals, topics=topics,
                          alpha=alpha, beta=beta, seed=seed,
                          iteration=iteration, vocab=tuple(vocab))
    finally:
        if own:
            f.close()
