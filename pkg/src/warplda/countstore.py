"""Sparse topic-count tables, alias samplers and proposal distributions.

SparseCounts is an open-addressing table keyed by topic id, sized for the
smaller of the topic count and twice the number of tokens it summarizes, so
short documents and rare words never pay for the full topic dimension.
AliasTable turns a set of positive weights into an O(1) sampler whose bucket
probabilities are exactly rational in the input weights.
"""

import math
from fractions import Fraction

import numpy as np

from . import _kernels

__all__ = [
    "SparseCounts",
    "AliasTable",
    "GlobalState",
    "counts_from_assignments",
    "build_alias",
    "alias_draw",
    "draw_doc_proposal",
    "draw_word_proposal",
]


class SparseCounts:
    """Topic -> count map over a bounded id range [0, topic_limit).

    Capacity at construction is the smallest power of two strictly larger
    than min(topic_limit, 2 * size); the table doubles itself if later
    insertions would push the load factor over 3/4.
    """

    __slots__ = ("topic_limit", "_keys", "_vals", "_occupied", "_total")

    def __init__(self, topic_limit, size=0):
        if topic_limit < 1:
            raise ValueError("topic_limit must be positive")
        cap = _kernels.capacity_for(topic_limit, size)
        self.topic_limit = topic_limit
        self._keys = np.full(cap, -1, np.int32)
        self._vals = np.zeros(cap, np.int32)
        self._occupied = 0
        self._total = 0

    def _check_key(self, topic):
        if not 0 <= topic < self.topic_limit:
            raise IndexError(f"topic {topic} outside [0, {self.topic_limit})")

    def get(self, topic):
        self._check_key(topic)
        return int(_kernels.table_get(self._keys, self._vals, topic))

    def add(self, topic, delta=1):
        self._check_key(topic)
        if delta < 0 and self.get(topic) + delta < 0:
            raise ValueError(f"count for topic {topic} would become negative")
        self._keys, self._vals, self._occupied = _kernels.table_add(
            self._keys, self._vals, self._occupied, topic, delta)
        self._total += delta

    def items(self):
        """Nonzero (topic, count) pairs in ascending topic order."""
        ids, cnts = _kernels.table_items(self._keys, self._vals)
        return list(zip(ids.tolist(), cnts.tolist()))

    def to_dense(self):
        dense = np.zeros(self.topic_limit, np.int64)
        for k, c in self.items():
            dense[k] = c
        return dense

    @property
    def total(self):
        return self._total

    @property
    def distinct(self):
        return sum(1 for _ in self.items())

    @property
    def capacity(self):
        return len(self._keys)

    @classmethod
    def _wrap(cls, topic_limit, keys, vals, occupied, total):
        obj = cls.__new__(cls)
        obj.topic_limit = topic_limit
        obj._keys = keys
        obj._vals = vals
        obj._occupied = occupied
        obj._total = total
        return obj


def counts_from_assignments(assignments, topic_limit):
    """Summarize an assignment vector into a SparseCounts table."""
    arr = np.ascontiguousarray(assignments, dtype=np.int32)
    if arr.size and (arr.min() < 0 or arr.max() >= topic_limit):
        raise ValueError("assignment outside [0, topic_limit)")
    keys, vals, occupied = _kernels.table_from_values(arr, 0, arr.size, topic_limit)
    return SparseCounts._wrap(topic_limit, keys, vals, occupied, int(arr.size))


class AliasTable:
    """O(1) sampler over weighted outcomes (Vose construction).

    Weights are scaled to integers exactly (through Fraction), so every
    bucket threshold is an integer and outcome_probability() returns the
    exact rational weight / total. A draw consumes exactly two uniforms:
    one to pick a bucket, one to pick a side of its threshold.
    """

    __slots__ = ("outcome_ids", "source_total", "_thresh", "_first",
                 "_second", "_scaled_total", "_bins")

    def __init__(self, weights):
        pairs = _as_weight_pairs(weights)
        if not pairs:
            raise ValueError("alias table needs at least one positive weight")
        ids = [p[0] for p in pairs]
        fracs = [Fraction(p[1]) for p in pairs]
        for i, f in zip(ids, fracs):
            if f <= 0:
                raise ValueError(f"weight for outcome {i} is not positive")
        den = math.lcm(*(f.denominator for f in fracs))
        ints = [int(f * den) for f in fracs]
        self.outcome_ids = np.asarray(ids, np.int32)
        self.source_total = sum(fracs)
        self._bins = len(ints)
        total = int(sum(ints))
        if total * self._bins <= np.iinfo(np.int64).max:
            thresh, first, second, tot = _kernels.build_alias_core(
                self.outcome_ids, np.asarray(ints, np.int64))
            self._thresh = thresh
            self._first = first
            self._second = second
            self._scaled_total = int(tot)
        else:
            self._thresh, self._first, self._second = _alias_bigint(
                self.outcome_ids, ints, total)
            self._scaled_total = total
        self._verify_exact(ints, total)

    def _verify_exact(self, ints, total):
        # each outcome's bucket mass must reproduce weight * bins exactly
        mass = {}
        bins = self._bins
        for b in range(bins):
            f = int(self._first[b])
            s = int(self._second[b])
            t = int(self._thresh[b])
            mass[f] = mass.get(f, 0) + t
            mass[s] = mass.get(s, 0) + (total - t)
        for i, w in zip(self.outcome_ids.tolist(), ints):
            if mass.get(i, 0) != w * bins:
                raise AssertionError("alias bucket mass does not match weights")

    def outcome_probability(self, outcome):
        """Exact selection probability of an outcome as a Fraction."""
        total = self._scaled_total
        mass = 0
        for b in range(self._bins):
            if int(self._first[b]) == outcome:
                mass += int(self._thresh[b])
            if int(self._second[b]) == outcome:
                mass += total - int(self._thresh[b])
        return Fraction(mass, total * self._bins)

    @property
    def bins(self):
        return self._bins

    def draw(self, rng):
        """One draw; consumes exactly two uniforms from rng."""
        u1 = rng.random()
        u2 = rng.random()
        b = min(int(u1 * self._bins), self._bins - 1)
        x = min(int(u2 * self._scaled_total), self._scaled_total - 1)
        if x < int(self._thresh[b]):
            return int(self._first[b])
        return int(self._second[b])

    def sample(self, rng, size):
        """Vectorized draws (two uniforms per draw, batched)."""
        if self._scaled_total > np.iinfo(np.int64).max:
            return np.asarray([self.draw(rng) for _ in range(size)], np.int32)
        u1 = rng.random(size)
        u2 = rng.random(size)
        b = np.minimum((u1 * self._bins).astype(np.int64), self._bins - 1)
        thresh = np.asarray(self._thresh, np.int64)
        x = np.minimum((u2 * self._scaled_total).astype(np.int64),
                       self._scaled_total - 1)
        take_first = x < thresh[b]
        first = np.asarray(self._first, np.int32)
        second = np.asarray(self._second, np.int32)
        return np.where(take_first, first[b], second[b]).astype(np.int32)


def _as_weight_pairs(weights):
    if isinstance(weights, SparseCounts):
        return weights.items()
    if isinstance(weights, dict):
        return sorted(weights.items())
    pairs = list(weights)
    if pairs and not isinstance(pairs[0], tuple):
        return list(enumerate(pairs))
    return sorted(pairs)


def _alias_bigint(ids, ints, total):
    # pure-python twin of build_alias_core for weights past int64 range
    bins = len(ints)
    scaled = [w * bins for w in ints]
    thresh = [0] * bins
    first = [0] * bins
    second = [0] * bins
    small = [i for i in range(bins) if scaled[i] < total]
    large = [i for i in range(bins) if scaled[i] >= total]
    while small and large:
        lo = small.pop()
        hi = large[-1]
        thresh[lo] = scaled[lo]
        first[lo] = int(ids[lo])
        second[lo] = int(ids[hi])
        scaled[hi] -= total - scaled[lo]
        if scaled[hi] < total:
            small.append(large.pop())
    while large:
        hi = large.pop()
        thresh[hi] = total
        first[hi] = second[hi] = int(ids[hi])
    while small:
        lo = small.pop()
        thresh[lo] = total
        first[lo] = second[lo] = int(ids[lo])
    return thresh, first, second


def build_alias(weights):
    """Build an AliasTable from (outcome, weight) pairs or a SparseCounts."""
    return AliasTable(weights)


def alias_draw(table, rng):
    """Draw one outcome from an AliasTable using two uniforms."""
    return table.draw(rng)


def draw_doc_proposal(assignments, alpha, topic_limit, rng, size=None):
    """Sample from the document-side proposal for a row.

    The proposal is proportional to the row's topic counts plus alpha
    smoothing. With probability L / (L + K * alpha) it returns the
    assignment at a uniformly random position of the row (which realizes
    the counts part without materializing them), otherwise a uniform topic.
    """
    z = np.asarray(assignments)
    length = z.size
    if length == 0:
        raise ValueError("cannot draw a proposal from an empty row")
    mass = length + topic_limit * alpha
    if size is None:
        coin = rng.random()
        u = rng.random()
        if coin * mass < length:
            return int(z[min(int(u * length), length - 1)])
        return min(int(u * topic_limit), topic_limit - 1)
    coin = rng.random(size)
    u = rng.random(size)
    positions = np.minimum((u * length).astype(np.int64), length - 1)
    uniforms = np.minimum((u * topic_limit).astype(np.int64), topic_limit - 1)
    return np.where(coin * mass < length, z[positions], uniforms).astype(np.int32)


def draw_word_proposal(counts, beta, topic_limit, rng, alias=None, size=None):
    """Sample from the word-side proposal for a column.

    Proportional to the column's topic counts plus beta smoothing: with
    probability L / (L + K * beta) draw from the counts through the alias
    table, otherwise a uniform topic. A prebuilt alias may be passed; it
    must summarize the same counts (total mass is checked).
    """
    length = counts.total
    if alias is None:
        alias = AliasTable(counts) if length > 0 else None
    elif alias.source_total != length:
        raise ValueError(
            f"alias total {alias.source_total} does not match counts {length}")
    mass = length + topic_limit * beta
    if size is None:
        coin = rng.random()
        if coin * mass < length:
            return alias.draw(rng)
        return min(int(rng.random() * topic_limit), topic_limit - 1)
    coin = rng.random(size)
    take_counts = coin * mass < length
    from_alias = alias.sample(rng, size) if alias is not None else np.zeros(size, np.int32)
    uniforms = np.minimum((rng.random(size) * topic_limit).astype(np.int64),
                          topic_limit - 1)
    return np.where(take_counts, from_alias, uniforms).astype(np.int32)


class GlobalState:
    """Published per-topic totals read by every worker during a phase.

    The snapshot array is frozen (not writable); a phase accumulates its
    own totals and the trainer publishes them afterwards, so acceptance
    ratios inside one phase always see the totals from the previous phase.
    """

    __slots__ = ("_snapshot",)

    def __init__(self, topic_totals):
        self._snapshot = self._freeze(topic_totals)

    @staticmethod
    def _freeze(arr):
        out = np.array(arr, dtype=np.int64, copy=True)
        if out.ndim != 1:
            raise ValueError("topic totals must be one-dimensional")
        if out.size and out.min() < 0:
            raise ValueError("topic totals must be nonnegative")
        out.setflags(write=False)
        return out

    @property
    def snapshot(self):
        return self._snapshot

    @property
    def topic_limit(self):
        return self._snapshot.size

    def publish(self, topic_totals, expected_total=None):
        arr = self._freeze(topic_totals)
        if arr.size != self._snapshot.size:
            raise ValueError("topic dimension changed")
        if expected_total is not None and int(arr.sum()) != expected_total:
            raise ValueError(
                f"published totals sum to {int(arr.sum())}, expected {expected_total}")
        self._snapshot = arr
