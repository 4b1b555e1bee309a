"""Bag-of-words corpus loading and summary statistics.

The on-disk format is the UCI bag-of-words layout: a docword file whose
first three lines give the document count D, the vocabulary size W and the
number of nonzero (doc, word) pairs, followed by one "docID wordID count"
triple per line (all ids 1-based), plus a vocabulary file with one word per
line. Files may be gzip-compressed; compression is detected from the magic
bytes, not the file name.
"""

import gzip
import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "Corpus",
    "CorpusStats",
    "CorpusFormatError",
    "parse_uci_bag_of_words",
    "corpus_stats",
    "load_corpus",
    "open_maybe_gzip",
]


class CorpusFormatError(ValueError):
    """Raised when an input file violates the bag-of-words format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Corpus:
    """An in-memory corpus: one int32 word-id array per document.

    Attributes
    ----------
    docs : list of ndarray
        docs[d] holds the word ids of document d in file order. Repeated
        words appear once per occurrence.
    vocab : tuple of str
        vocab[w] is the surface form of word id w.
    """

    __slots__ = ("docs", "vocab")

    def __init__(self, docs, vocab):
        self.docs = docs
        self.vocab = vocab

    @classmethod
    def from_documents(cls, docs, vocab=None):
        """Build a corpus from iterables of word ids, validating ranges."""
        arrays = [np.asarray(doc, dtype=np.int32) for doc in docs]
        top = 0
        for d, arr in enumerate(arrays):
            if arr.ndim != 1:
                raise ValueError(f"document {d} is not a flat sequence")
            if arr.size and arr.min() < 0:
                raise ValueError(f"document {d} contains a negative word id")
            if arr.size:
                top = max(top, int(arr.max()) + 1)
        if vocab is None:
            vocab = tuple(f"w{i:06d}" for i in range(top))
        else:
            vocab = tuple(vocab)
            if len(set(vocab)) != len(vocab):
                raise ValueError("vocabulary contains duplicate words")
            if top > len(vocab):
                raise ValueError(
                    f"word id {top - 1} out of range for vocabulary of {len(vocab)}")
        return cls(arrays, vocab)

    @property
    def doc_count(self):
        return len(self.docs)

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def token_total(self):
        return sum(int(doc.size) for doc in self.docs)

    def token_arrays(self):
        """Flattened (doc_ids, word_ids) in document-major file order."""
        lengths = np.fromiter((doc.size for doc in self.docs), np.int64,
                              count=len(self.docs))
        doc_ids = np.repeat(np.arange(len(self.docs), dtype=np.int32), lengths)
        if self.docs:
            word_ids = np.concatenate(self.docs).astype(np.int32, copy=False)
        else:
            word_ids = np.empty(0, np.int32)
        return doc_ids, word_ids


@dataclass(frozen=True)
class CorpusStats:
    """Corpus summary; mean_doc_len is kept exact as a Fraction."""

    doc_count: int
    vocab_size: int
    token_total: int
    mean_doc_len: Fraction

    def __post_init__(self):
        if self.doc_count > 0:
            expected = Fraction(self.token_total, self.doc_count)
            if self.mean_doc_len != expected:
                raise ValueError("mean_doc_len inconsistent with totals")


def corpus_stats(corpus):
    """Compute CorpusStats; mean length is the exact ratio T / D."""
    d = corpus.doc_count
    t = corpus.token_total
    mean = Fraction(t, d) if d else Fraction(0)
    return CorpusStats(doc_count=d, vocab_size=corpus.vocab_size,
                       token_total=t, mean_doc_len=mean)


def _int_fields(line, lineno, expected):
    parts = line.split()
    if len(parts) != expected:
        raise CorpusFormatError(
            f"expected {expected} fields, found {len(parts)}", line=lineno)
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise CorpusFormatError(f"non-integer field in {parts!r}", line=lineno) from None


def parse_uci_bag_of_words(docword_lines, vocab_lines):
    """Parse docword and vocabulary line streams into a Corpus.

    Raises CorpusFormatError (carrying the 1-based line number) on malformed
    headers, field counts, id ranges, nonpositive counts, triple-count
    mismatches, or duplicate vocabulary entries.
    """
    it = iter(docword_lines)
    header = []
    lineno = 0
    for _ in range(3):
        try:
            line = next(it)
        except StopIteration:
            raise CorpusFormatError("truncated header", line=lineno + 1) from None
        lineno += 1
        header.append(_int_fields(line, lineno, 1)[0])
    n_docs, n_words, n_nonzero = header
    if n_docs < 0 or n_words < 0 or n_nonzero < 0:
        raise CorpusFormatError("negative header value", line=3)

    docs = [[] for _ in range(n_docs)]
    triples = 0
    for line in it:
        lineno += 1
        if not line.strip():
            continue
        doc_id, word_id, count = _int_fields(line, lineno, 3)
        if not 1 <= doc_id <= n_docs:
            raise CorpusFormatError(
                f"document id {doc_id} outside 1..{n_docs}", line=lineno)
        if not 1 <= word_id <= n_words:
            raise CorpusFormatError(
                f"word id {word_id} outside 1..{n_words}", line=lineno)
        if count <= 0:
            raise CorpusFormatError(f"nonpositive count {count}", line=lineno)
        docs[doc_id - 1].extend([word_id - 1] * count)
        triples += 1
    if triples != n_nonzero:
        raise CorpusFormatError(
            f"header promised {n_nonzero} triples, file has {triples}")

    vocab = []
    seen = set()
    for vno, raw in enumerate(vocab_lines, start=1):
        word = raw.strip()
        if not word:
            raise CorpusFormatError("empty vocabulary entry", line=vno)
        if word in seen:
            raise CorpusFormatError(f"duplicate vocabulary entry {word!r}", line=vno)
        seen.add(word)
        vocab.append(word)
    if len(vocab) != n_words:
        raise CorpusFormatError(
            f"vocabulary has {len(vocab)} words, header promised {n_words}")

    arrays = [np.asarray(doc, dtype=np.int32) for doc in docs]
    return Corpus(arrays, tuple(vocab))


def open_maybe_gzip(path):
    """Open a text file, transparently ungzipping when magic bytes match."""
    raw = open(path, "rb")
    magic = raw.read(2)
    raw.seek(0)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.GzipFile(fileobj=raw), encoding="utf-8")
    return io.TextIOWrapper(raw, encoding="utf-8")


def load_corpus(docword_path, vocab_path):
    """Load a corpus from docword and vocab files (plain or gzipped)."""
    with open_maybe_gzip(docword_path) as dw, open_maybe_gzip(vocab_path) as vc:
        return parse_uci_bag_of_words(dw, vc)
