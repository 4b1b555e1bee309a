"""Shared corpus builders and statistical helpers for the test suite."""

from collections import Counter

import numpy as np
import pytest

from warplda import Corpus


def make_random_corpus(rng, docs=40, vocab=30, min_len=1, max_len=25):
    """A corpus with duplicate (doc, word) cells and skewed word use."""
    probs = 1.0 / np.arange(1, vocab + 1)
    probs /= probs.sum()
    out = []
    for _ in range(docs):
        length = int(rng.integers(min_len, max_len + 1))
        out.append(rng.choice(vocab, size=length, p=probs).astype(np.int32))
    return Corpus.from_documents(out, [f"w{i:04d}" for i in range(vocab)])


def planted_corpus(rng, topics, docs, vocab, mean_len, topic_conc=0.05,
                   doc_conc=0.3):
    """Documents drawn from a planted mixture of sharp topics."""
    phi = rng.dirichlet(np.full(vocab, topic_conc), size=topics)
    theta = rng.dirichlet(np.full(topics, doc_conc), size=docs)
    out = []
    for d in range(docs):
        length = max(1, int(rng.poisson(mean_len)))
        zs = rng.choice(topics, size=length, p=theta[d])
        counts = np.bincount(zs, minlength=topics)
        words = []
        for k in range(topics):
            if counts[k]:
                words.append(rng.choice(vocab, size=counts[k], p=phi[k]))
        ws = np.concatenate(words)
        rng.shuffle(ws)
        out.append(ws.astype(np.int32))
    return Corpus.from_documents(out, [f"w{i:04d}" for i in range(vocab)]), phi


def tv_distance(counts, probs):
    """Total variation between an empirical histogram and exact weights."""
    counts = np.asarray(counts, np.float64)
    emp = counts / counts.sum()
    return 0.5 * float(np.abs(emp - np.asarray(probs, np.float64)).sum())


def write_uci(corpus, docword_path, vocab_path, compress=False):
    """Write a corpus in the bag-of-words triple format."""
    import gzip

    pairs = []
    for d, doc in enumerate(corpus.docs):
        for w, c in sorted(Counter(doc.tolist()).items()):
            pairs.append((d + 1, w + 1, c))
    opener = gzip.open if compress else open
    with opener(docword_path, "wt") as f:
        f.write(f"{corpus.doc_count}\n{corpus.vocab_size}\n{len(pairs)}\n")
        for d, w, c in pairs:
            f.write(f"{d} {w} {c}\n")
    with opener(vocab_path, "wt") as f:
        for word in corpus.vocab:
            f.write(word + "\n")


class CountingRng:
    """Wraps a numpy Generator and counts uniform draws."""

    def __init__(self, rng):
        self.rng = rng
        self.calls = 0

    def random(self, size=None):
        self.calls += 1 if size is None else int(np.prod(size))
        return self.rng.random(size)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
