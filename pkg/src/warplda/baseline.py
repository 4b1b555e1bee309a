"""Reference samplers used as correctness oracles and speed baselines.

CollapsedGibbs resamples every token from its exact K-way conditional with
dense count matrices (cost linear in the topic count per token). The
NaiveSampler runs the same proposal/accept mathematics as the production
phases but token-at-a-time in document order (word pass) and word order
(document pass) against dense count mirrors; with equal seeds it reproduces
the production sampler's assignments bit for bit, which pins down the
reordered execution as a pure traversal change.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .countstore import SparseCounts, counts_from_assignments

__all__ = [
    "DenseCounts",
    "CollapsedGibbs",
    "cgs_iteration",
    "NaiveSampler",
    "naive_mcem_iteration",
    "enumerate_token_posterior",
    "frozen_chain_counts",
]


@dataclass
class DenseCounts:
    """Dense count triple (doc_topic, word_topic, totals) for baselines."""

    doc_topic: np.ndarray
    word_topic: np.ndarray
    totals: np.ndarray

    @classmethod
    def from_assignments(cls, doc_ids, word_ids, assignments, docs, vocab, topics):
        z = np.asarray(assignments, np.int64)
        doc_topic = np.bincount(np.asarray(doc_ids, np.int64) * topics + z,
                                minlength=docs * topics)
        word_topic = np.bincount(np.asarray(word_ids, np.int64) * topics + z,
                                 minlength=vocab * topics)
        totals = np.bincount(z, minlength=topics).astype(np.int64)
        return cls(doc_topic.reshape(docs, topics).astype(np.int32),
                   word_topic.reshape(vocab, topics).astype(np.int32),
                   totals)

    def consistent(self):
        return (np.array_equal(self.doc_topic.sum(axis=0), self.totals)
                and np.array_equal(self.word_topic.sum(axis=0), self.totals))


def _keyed_uniform_topics(seed, entry_ids, purpose, counter, topics):
    prefix = np.uint64(_kernels.phase_prefix(np.uint64(seed), np.uint64(0),
                                             np.uint64(_kernels.PHASE_INIT)))
    base = _kernels.mix64_vec(prefix ^ entry_ids.astype(np.uint64))
    packed = np.uint64((purpose << 48) | counter)
    v = _kernels.mix64_vec(base ^ packed)
    u = (v >> np.uint64(11)).astype(np.float64) * _kernels._U01
    t = (u * topics).astype(np.int64)
    np.minimum(t, topics - 1, out=t)
    return t.astype(np.int32)


class CollapsedGibbs:
    """Collapsed Gibbs sampler over a corpus with dense counts."""

    def __init__(self, corpus, cfg):
        self.cfg = cfg
        self.doc_ids, self.word_ids = corpus.token_arrays()
        self.docs = corpus.doc_count
        self.vocab = corpus.vocab_size
        entry_ids = np.arange(self.doc_ids.size, dtype=np.int64)
        self.assignments = _keyed_uniform_topics(
            cfg.seed, entry_ids, _kernels.PUR_ASSIGN, 0, cfg.topics)
        self.counts = DenseCounts.from_assignments(
            self.doc_ids, self.word_ids, self.assignments,
            self.docs, self.vocab, cfg.topics)
        self.iteration = 0

    def run(self, sweeps, record_states=False):
        """Advance the chain; optionally record assignments after each sweep."""
        record = (np.empty((sweeps, self.assignments.size), np.int32)
                  if record_states else np.empty((0, 0), np.int32))
        _kernels.cgs_run(
            self.doc_ids, self.word_ids, self.assignments,
            self.counts.doc_topic, self.counts.word_topic, self.counts.totals,
            self.cfg.topics, self.cfg.alpha, self.cfg.beta,
            self.vocab * self.cfg.beta, self.cfg.seed, self.iteration + 1,
            sweeps, record)
        self.iteration += sweeps
        return record if record_states else None


def cgs_iteration(corpus_arrays, assignments, counts, cfg, iteration, vocab):
    """One collapsed Gibbs sweep over flat token arrays, in place.

    corpus_arrays is the (doc_ids, word_ids) pair; iteration tags the
    sweep's randomness (the keyed generator replaces a stream object).
    """
    doc_ids, word_ids = corpus_arrays
    record = np.empty((0, 0), np.int32)
    _kernels.cgs_run(doc_ids, word_ids, assignments, counts.doc_topic,
                     counts.word_topic, counts.totals, cfg.topics, cfg.alpha,
                     cfg.beta, vocab * cfg.beta, cfg.seed, iteration, 1, record)


class NaiveSampler:
    """Unreordered twin of the production sampler (dense mirrors).

    State is indexed by insertion id. The word pass walks tokens in
    insertion (document-major) order; the document pass walks them grouped
    by word. Within any single word or document that is the same relative
    order the production sampler uses, and randomness is keyed per token,
    so both produce identical assignments and proposals after every phase.
    """

    def __init__(self, corpus, cfg):
        self.cfg = cfg
        self.doc_ids, self.word_ids = corpus.token_arrays()
        self.docs = corpus.doc_count
        self.vocab = corpus.vocab_size
        total = self.doc_ids.size
        entry_ids = np.arange(total, dtype=np.int64)
        self.assignments = _keyed_uniform_topics(
            cfg.seed, entry_ids, _kernels.PUR_ASSIGN, 0, cfg.topics)
        self.proposals = np.empty((total, cfg.proposals), np.int32)
        for i in range(cfg.proposals):
            self.proposals[:, i] = _keyed_uniform_topics(
                cfg.seed, entry_ids, _kernels.PUR_PROPOSAL, i, cfg.topics)
        self.topic_totals = np.bincount(
            self.assignments, minlength=cfg.topics).astype(np.int64)
        # token ids grouped by word (stable, so insertion order within words)
        order_w = np.argsort(self.word_ids, kind="stable").astype(np.int64)
        self.word_tok = order_w
        self.word_ptr = np.zeros(self.vocab + 1, np.int64)
        np.cumsum(np.bincount(self.word_ids, minlength=self.vocab),
                  out=self.word_ptr[1:])
        # token ids grouped by doc, by (word, insertion) within each doc
        order_d = np.lexsort((entry_ids, self.word_ids, self.doc_ids))
        self.doc_tok = order_d.astype(np.int64)
        self.doc_ptr = np.zeros(self.docs + 1, np.int64)
        np.cumsum(np.bincount(self.doc_ids, minlength=self.docs),
                  out=self.doc_ptr[1:])

    def word_pass(self, iteration):
        cfg = self.cfg
        prefix = np.uint64(_kernels.phase_prefix(
            np.uint64(cfg.seed), np.uint64(iteration),
            np.uint64(_kernels.PHASE_WORD)))
        word_topic = np.bincount(
            self.word_ids.astype(np.int64) * cfg.topics + self.assignments,
            minlength=self.vocab * cfg.topics).reshape(
                self.vocab, cfg.topics).astype(np.int32)
        _kernels.naive_word_chain(
            self.word_ids, self.assignments, self.proposals, word_topic,
            self.topic_totals, cfg.proposals, cfg.beta,
            self.vocab * cfg.beta, prefix)
        _kernels.naive_word_proposals(
            self.proposals, self.word_ptr, self.word_tok, word_topic,
            cfg.topics, cfg.proposals, cfg.topics * cfg.beta, prefix)
        self.topic_totals = word_topic.sum(axis=0).astype(np.int64)

    def doc_pass(self, iteration):
        cfg = self.cfg
        prefix = np.uint64(_kernels.phase_prefix(
            np.uint64(cfg.seed), np.uint64(iteration),
            np.uint64(_kernels.PHASE_DOC)))
        doc_topic = np.bincount(
            self.doc_ids.astype(np.int64) * cfg.topics + self.assignments,
            minlength=self.docs * cfg.topics).reshape(
                self.docs, cfg.topics).astype(np.int32)
        _kernels.naive_doc_chain(
            self.word_tok, self.doc_ids, self.assignments, self.proposals,
            doc_topic, self.topic_totals, cfg.proposals, cfg.alpha,
            self.vocab * cfg.beta, prefix)
        _kernels.naive_doc_proposals(
            self.proposals, self.doc_ptr, self.doc_tok, self.assignments,
            cfg.topics, cfg.proposals, cfg.topics * cfg.alpha, prefix)
        self.topic_totals = doc_topic.sum(axis=0).astype(np.int64)

    def iterate(self, iteration):
        self.word_pass(iteration)
        self.doc_pass(iteration)


def naive_mcem_iteration(sampler, iteration):
    """One full unreordered iteration (word pass then document pass)."""
    sampler.iterate(iteration)


def enumerate_token_posterior(doc_counts, word_counts, topic_totals, alpha,
                              beta, vocab_size):
    """Exact conditional of one token's topic given all other assignments.

    All three count vectors must exclude the token itself. Probability of
    topic k is proportional to
    (doc_counts[k] + alpha) * (word_counts[k] + beta) / (totals[k] + V * beta).
    """
    doc_counts = np.asarray(doc_counts, np.float64)
    word_counts = np.asarray(word_counts, np.float64)
    topic_totals = np.asarray(topic_totals, np.float64)
    vbeta = vocab_size * beta
    weights = (doc_counts + alpha) * (word_counts + beta) / (topic_totals + vbeta)
    return weights / weights.sum()


def frozen_chain_counts(doc_assignments, word_counts, topic_totals, cfg,
                        vocab_size, steps, replicates, seed, start_state=0):
    """Histogram of final chain states over frozen counts.

    Alternates document-side and word-side proposal/accept steps (the same
    jitted primitives the phases use) for one token whose surrounding
    counts never change, starting every replicate from start_state.
    """
    z_d = np.ascontiguousarray(doc_assignments, np.int32)
    if not isinstance(word_counts, SparseCounts):
        word_counts = counts_from_assignments(
            np.asarray(word_counts, np.int32), cfg.topics)
    dcounts = counts_from_assignments(z_d, cfg.topics)
    ids, cnts = _kernels.table_items(word_counts._keys, word_counts._vals)
    thresh, first, second, mass = _kernels.build_alias_core(ids, cnts)
    totals = np.ascontiguousarray(topic_totals, np.int64)
    return _kernels.frozen_chain(
        z_d, dcounts._keys, dcounts._vals, word_counts._keys,
        word_counts._vals, thresh, first, second, mass, totals, cfg.topics,
        cfg.alpha, cfg.beta, vocab_size * cfg.beta, cfg.topics * cfg.alpha,
        cfg.topics * cfg.beta, start_state, steps, replicates, seed)
