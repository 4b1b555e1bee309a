"""Reference samplers: collapsed Gibbs, the unreordered twin, frozen chains."""

import dataclasses

import numpy as np
import pytest

from warplda import (TrainConfig, document_phase, init_assignments,
                     log_joint_likelihood, matrix_from_corpus, word_phase)
from warplda.baseline import (CollapsedGibbs, DenseCounts, NaiveSampler,
                              cgs_iteration, enumerate_token_posterior,
                              frozen_chain_counts)

from conftest import make_random_corpus, tv_distance


class TestDenseCounts:
    def test_from_assignments(self):
        counts = DenseCounts.from_assignments(
            doc_ids=[0, 0, 1], word_ids=[2, 0, 2], assignments=[1, 0, 1],
            docs=2, vocab=3, topics=2)
        assert counts.doc_topic.tolist() == [[1, 1], [0, 1]]
        assert counts.word_topic.tolist() == [[1, 0], [0, 0], [0, 2]]
        assert counts.totals.tolist() == [1, 2]
        assert counts.consistent()

    def test_consistency_detects_corruption(self):
        counts = DenseCounts.from_assignments([0], [0], [0], 1, 1, 2)
        counts.totals[1] = 5
        assert not counts.consistent()


class TestTokenPosterior:
    def test_hand_computed_example(self):
        """cd=[0,1], cw=[1,2], totals=[2,7], a=b=1, V=3 gives (0.4, 0.6)."""
        probs = enumerate_token_posterior([0, 1], [1, 2], [2, 7],
                                          alpha=1.0, beta=1.0, vocab_size=3)
        assert probs == pytest.approx([0.4, 0.6])

    def test_normalizes(self, rng):
        for _ in range(20):
            k = int(rng.integers(1, 8))
            probs = enumerate_token_posterior(
                rng.integers(0, 9, k), rng.integers(0, 9, k),
                rng.integers(0, 30, k), alpha=0.3, beta=0.2, vocab_size=11)
            assert probs.sum() == pytest.approx(1.0)
            assert (probs > 0).all()


class TestCollapsedGibbs:
    def test_deterministic(self, rng):
        corpus = make_random_corpus(rng, docs=12, vocab=8)
        cfg = TrainConfig(topics=4, iterations=1, seed=6)
        a = CollapsedGibbs(corpus, cfg)
        b = CollapsedGibbs(corpus, cfg)
        a.run(3)
        b.run(3)
        assert np.array_equal(a.assignments, b.assignments)
        b2 = CollapsedGibbs(corpus, dataclasses.replace(cfg, seed=7))
        b2.run(3)
        assert not np.array_equal(a.assignments, b2.assignments)

    def test_counts_stay_consistent(self, rng):
        corpus = make_random_corpus(rng, docs=15, vocab=10)
        cfg = TrainConfig(topics=5, iterations=1, seed=2)
        gibbs = CollapsedGibbs(corpus, cfg)
        gibbs.run(4)
        fresh = DenseCounts.from_assignments(
            gibbs.doc_ids, gibbs.word_ids, gibbs.assignments,
            corpus.doc_count, corpus.vocab_size, 5)
        assert np.array_equal(fresh.doc_topic, gibbs.counts.doc_topic)
        assert np.array_equal(fresh.word_topic, gibbs.counts.word_topic)
        assert np.array_equal(fresh.totals, gibbs.counts.totals)

    def test_split_runs_match_one_run(self, rng):
        """Sweep randomness is keyed by absolute iteration number."""
        corpus = make_random_corpus(rng, docs=10, vocab=6)
        cfg = TrainConfig(topics=3, iterations=1, seed=9)
        whole = CollapsedGibbs(corpus, cfg)
        whole.run(4)
        parts = CollapsedGibbs(corpus, cfg)
        parts.run(1)
        parts.run(3)
        assert np.array_equal(whole.assignments, parts.assignments)

    def test_stationary_distribution_two_token_system(self):
        """Long-run state frequencies match the enumerated joint posterior.

        One document [w0, w1] with V=2, K=2, alpha=beta=1: the chain over
        the four assignment states must spend time proportional to the
        exponentiated integrated log joint of each state.
        """
        from warplda import Corpus
        corpus = Corpus.from_documents([[0, 1]], ["w0", "w1"])
        cfg = TrainConfig(topics=2, iterations=1, alpha=1.0, beta=1.0, seed=3)

        exact = np.empty(4)
        for idx, (z0, z1) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
            counts = DenseCounts.from_assignments(
                [0, 0], [0, 1], [z0, z1], 1, 2, 2)
            exact[idx] = log_joint_likelihood(
                counts.doc_topic, counts.word_topic, counts.totals, 1.0, 1.0)
        exact = np.exp(exact - exact.max())
        exact /= exact.sum()

        gibbs = CollapsedGibbs(corpus, cfg)
        gibbs.run(1000)
        states = gibbs.run(400_000, record_states=True)
        hist = np.bincount(states[:, 0] * 2 + states[:, 1], minlength=4)
        assert tv_distance(hist, exact) < 0.02

    def test_cgs_iteration_advances_in_place(self, rng):
        corpus = make_random_corpus(rng, docs=10, vocab=6)
        cfg = TrainConfig(topics=3, iterations=1, seed=9)
        gibbs = CollapsedGibbs(corpus, cfg)
        doc_ids, word_ids = corpus.token_arrays()
        mirror = CollapsedGibbs(corpus, cfg)
        cgs_iteration((doc_ids, word_ids), mirror.assignments, mirror.counts,
                      cfg, iteration=1, vocab=corpus.vocab_size)
        gibbs.run(1)
        assert np.array_equal(mirror.assignments, gibbs.assignments)


class TestNaiveTwin:
    @pytest.mark.parametrize("proposals", [1, 2, 3])
    def test_matches_production_sampler_bit_for_bit(self, rng, proposals):
        """Reordering is a pure traversal change: states agree exactly."""
        corpus = make_random_corpus(rng, docs=40, vocab=18, min_len=2,
                                    max_len=30)
        cfg = TrainConfig(topics=7, iterations=1, proposals=proposals,
                          alpha=0.4, beta=0.08, seed=31)
        matrix = matrix_from_corpus(corpus, cfg.proposals)
        state = init_assignments(matrix, cfg)
        naive = NaiveSampler(corpus, cfg)
        assert np.array_equal(matrix.assignments_by_entry(), naive.assignments)
        assert np.array_equal(matrix.proposals_by_entry(), naive.proposals)
        for iteration in range(1, 4):
            totals = word_phase(matrix, state, cfg, iteration)
            state.publish(totals, expected_total=matrix.entry_total)
            naive.word_pass(iteration)
            assert np.array_equal(matrix.assignments_by_entry(),
                                  naive.assignments), f"word {iteration}"
            assert np.array_equal(matrix.proposals_by_entry(),
                                  naive.proposals), f"word {iteration}"
            assert np.array_equal(state.snapshot, naive.topic_totals)
            totals = document_phase(matrix, state, cfg, iteration)
            state.publish(totals, expected_total=matrix.entry_total)
            naive.doc_pass(iteration)
            assert np.array_equal(matrix.assignments_by_entry(),
                                  naive.assignments), f"doc {iteration}"
            assert np.array_equal(matrix.proposals_by_entry(),
                                  naive.proposals), f"doc {iteration}"
            assert np.array_equal(state.snapshot, naive.topic_totals)


def frozen_transition_matrices(doc_assign, word_counts, totals, alpha, beta,
                               vocab_size, topics):
    """Exact one-step kernels of the frozen two-sided chain."""
    doc_assign = np.asarray(doc_assign)
    cd = np.bincount(doc_assign, minlength=topics).astype(float)
    cw = np.asarray(word_counts, float)
    totals = np.asarray(totals, float)
    L, W = doc_assign.size, cw.sum()
    vbeta = vocab_size * beta
    q_doc = (cd + alpha) / (L + topics * alpha)
    q_word = (cw + beta) / (W + topics * beta)

    def kernel(q, score):
        # acceptance ratio for s -> t reduces to score[t] / score[s]
        P = np.zeros((topics, topics))
        for s in range(topics):
            for t in range(topics):
                if t != s:
                    P[s, t] = q[t] * min(1.0, score[t] / score[s])
            P[s, s] = 1.0 - P[s].sum()
        return P

    doc_score = (cw + beta) / (totals + vbeta)
    word_score = (cd + alpha) / (totals + vbeta)
    return kernel(q_doc, doc_score), kernel(q_word, word_score)


class TestFrozenChain:
    def test_matches_exact_transition_matrix(self):
        """Replicate histogram equals the matrix-power state distribution."""
        topics = 3
        doc_assign = np.array([0, 0, 1], np.int32)
        word_assign = np.array([0, 1, 1, 2, 2], np.int32)
        totals = np.array([5, 9, 6], np.int64)
        cfg = TrainConfig(topics=topics, iterations=1, alpha=0.8, beta=0.6,
                          seed=17)
        vocab_size = 4
        steps, replicates = 40, 40_000

        cw = np.bincount(word_assign, minlength=topics)
        P_doc, P_word = frozen_transition_matrices(
            doc_assign, cw, totals, cfg.alpha, cfg.beta, vocab_size, topics)
        dist = np.zeros(topics)
        dist[0] = 1.0
        for step in range(steps):
            dist = dist @ (P_doc if step % 2 == 0 else P_word)

        hist = frozen_chain_counts(doc_assign, word_assign, totals, cfg,
                                   vocab_size, steps, replicates, seed=17,
                                   start_state=0)
        assert hist.sum() == replicates
        assert tv_distance(hist, dist) < 0.02

    def test_converges_to_token_posterior(self):
        """Long chains land on the exact one-token conditional."""
        topics = 3
        doc_assign = np.array([0, 2, 2, 1], np.int32)
        word_assign = np.array([1, 1, 2], np.int32)
        totals = np.array([7, 8, 9], np.int64)
        cfg = TrainConfig(topics=topics, iterations=1, alpha=0.5, beta=0.4,
                          seed=5)
        target = enumerate_token_posterior(
            np.bincount(doc_assign, minlength=topics),
            np.bincount(word_assign, minlength=topics), totals,
            cfg.alpha, cfg.beta, vocab_size=5)
        hist = frozen_chain_counts(doc_assign, word_assign, totals, cfg,
                                   vocab_size=5, steps=120, replicates=30_000,
                                   seed=23, start_state=2)
        assert tv_distance(hist, target) < 0.02
